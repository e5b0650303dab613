"""
Command-line driver.

    nvtflow run <config-or-preset> [--out DIR] [--steps N] [--dt X]
                [--snapshot-every K] [--format csv|vtk|both]
    nvtflow presets

Exit status: 0 on success, 1 when the solver fails part-way (outputs written
so far are kept), 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import FORMATS, ScenarioConfig, load_config, preset_names
from .diagnostics import compute_energy
from .errors import EosDomainError, SingularSystemError
from .grid import Grid
from .io import STEP_HEADER, TraceWriter, energy_writer, step_row, write_snapshot
from .scenarios import build_initial_state
from .stepper import Stepper

logger = logging.getLogger("nvtflow")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2


def _due(step: int, every: int, last: int) -> bool:
    return step == 0 or step == last or (every > 0 and step % every == 0)


def run(cfg: ScenarioConfig) -> int:
    """Run a scenario and write its outputs; returns the exit status."""
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.source:
        (out / "config.cfg").write_text(cfg.source)

    grid = Grid(cfg.grid)
    mix = cfg.mixture
    stepper = Stepper(grid, mix, cfg.solver, cfg.eta, cfg.xi)
    c = stepper.c
    state = build_initial_state(cfg, grid)
    n_steps = cfg.solver.n_steps
    every, fmt = cfg.output.snapshot_every, cfg.output.format

    with energy_writer(out / "energy.csv", mix.M) as energy, \
            TraceWriter(out / "steps.csv", STEP_HEADER) as steps:
        energy.write(compute_energy(state, mix, grid, c).row())
        write_snapshot(out, grid, mix, c, state, fmt)
        for k in range(1, n_steps + 1):
            try:
                state, rep = stepper.step(state)
            except (SingularSystemError, EosDomainError) as exc:
                logger.error("step %d failed: %s", k, exc)
                return EXIT_SOLVER
            rec = compute_energy(state, mix, grid, c)
            energy.write(rec.row())
            steps.write(step_row(k, rep))
            logger.info("step %d/%d  t=%.3e  iters=%d  change=%.2e  total=%.10e%s", k, n_steps,
                        state.t, rep.iterations, rep.rel_change, rec.total,
                        "  (clamped)" if rep.clamped else "")
            if _due(k, every, n_steps):
                write_snapshot(out, grid, mix, c, state, fmt)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nvtflow", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("-v", "--verbose", action="store_true", help="log every step")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("config", help="config file, or the name of a shipped preset (e.g. example1)")
    r.add_argument("--out", help="output directory")
    r.add_argument("--steps", type=int, help="number of time steps")
    r.add_argument("--dt", type=float, help="time step size (s)")
    r.add_argument("--snapshot-every", type=int, help="snapshot stride in steps (0: first and last)")
    r.add_argument("--format", choices=FORMATS, help="snapshot format")

    sub.add_parser("presets", help="list shipped presets")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    try:
        cfg = load_config(args.config).with_overrides(
            out=args.out, steps=args.steps, dt=args.dt,
            snapshot_every=args.snapshot_every, fmt=args.format)
    except ValueError as exc:  # ConfigError, EosDomainError and bad overrides
        print(f"nvtflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = run(cfg)
    if status != EXIT_OK:
        print(f"nvtflow: solver failed; partial outputs kept in {cfg.output.directory}",
              file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
