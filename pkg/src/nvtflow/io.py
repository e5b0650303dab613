"""
Run outputs: the energy trace, per-step solver log and field snapshots.

All floats are written with 17 significant digits so files round-trip to
the in-memory values.  Cell fields are written row by row with x varying
fastest, the same ordering as the legacy VTK structured-points format.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import eos
from .diagnostics import EnergyReport, general_pressure
from .grid import Grid
from .stepper import SimState, StepReport, chemical_potential_field

FMT = "%.17g"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FMT % v


class TraceWriter:
    """Append-only CSV with a fixed header; flushed after every row so partial runs survive."""

    def __init__(self, path: Path, header: list[str]):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(header)
        self._fh.flush()

    def write(self, row) -> None:
        self._w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


STEP_HEADER = ["step", "iterations", "rel_change", "mass_residual", "momentum_residual", "clamped"]


def step_row(step: int, rep: StepReport) -> list:
    mom = max(rep.momentum_residuals) if rep.momentum_residuals else 0.0
    return [step, rep.iterations, float(rep.rel_change), float(max(rep.mass_residuals)), float(mom),
            int(rep.clamped)]


def energy_writer(path: Path, m: int) -> TraceWriter:
    return TraceWriter(path, EnergyReport.header(m))


def read_trace(path: Path) -> dict[str, np.ndarray]:
    """Columns of a CSV trace as float arrays keyed by header name."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float, ndmin=1)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def snapshot_fields(grid: Grid, mix: eos.MixtureSpec, c: np.ndarray,
                    state: SimState) -> dict[str, np.ndarray]:
    """Cell fields written for a snapshot, keyed by file stem.

    ``mu_i`` is the full variational derivative at the snapshot state and
    ``p`` the pressure of the inhomogeneous fluid.
    """
    n = state.n
    m = n.shape[0]
    mu = chemical_potential_field(grid, mix, c, n)
    ux, uy = grid.interp_face_to_cell(state.u)
    fields = {f"n_{i + 1}": n[i] for i in range(m)}
    fields.update({f"mu_{i + 1}": mu[i] for i in range(m)})
    fields["u_x"] = ux
    fields["u_y"] = uy
    fields["p"] = general_pressure(grid, mix, c, n)
    return fields


def write_field_csv(path: Path, grid: Grid, values: np.ndarray) -> None:
    x, y = grid.cell_centers()
    # x fastest within each y row: transpose the (nx, ny) arrays before flattening
    table = np.column_stack([x.T.ravel(), y.T.ravel(), np.asarray(values).T.ravel()])
    try:
        np.savetxt(path, table, delimiter=",", header="x,y,value", comments="", fmt=FMT)
    except OSError as exc:
        raise OSError(f"cannot write snapshot {path}: {exc}") from exc


def read_field_csv(path: Path, grid: Grid) -> np.ndarray:
    """Inverse of :func:`write_field_csv`; returns an ``(nx, ny)`` array."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 2].reshape(grid.ny, grid.nx).T.copy()


def write_vtk(path: Path, grid: Grid, fields: dict[str, np.ndarray], title: str = "nvtflow") -> None:
    """ASCII legacy-VTK structured points, one point per cell centre."""
    nx, ny = grid.shape
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_POINTS",
             f"DIMENSIONS {nx} {ny} 1",
             f"ORIGIN {FMT % (grid.hx / 2)} {FMT % (grid.hy / 2)} 0",
             f"SPACING {FMT % grid.hx} {FMT % grid.hy} 1",
             f"POINT_DATA {nx * ny}"]
    for name, val in fields.items():
        if name in ("u_x", "u_y"):
            continue
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [FMT % v for v in np.asarray(val).T.ravel()]
    if "u_x" in fields:
        lines.append("VECTORS u double")
        ux, uy = fields["u_x"].T.ravel(), fields["u_y"].T.ravel()
        lines += [f"{FMT % a} {FMT % b} 0" for a, b in zip(ux, uy)]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write snapshot {path}: {exc}") from exc


def snapshot_dir(out: Path, step: int) -> Path:
    return Path(out) / "snapshots" / f"step_{step:06d}"


def write_snapshot(out: Path, grid: Grid, mix: eos.MixtureSpec, c: np.ndarray, state: SimState,
                   fmt: str = "csv") -> Path:
    """Write the snapshot of ``state`` under ``out/snapshots/step_NNNNNN``; returns that directory."""
    d = snapshot_dir(out, state.step)
    d.mkdir(parents=True, exist_ok=True)
    fields = snapshot_fields(grid, mix, c, state)
    if fmt in ("csv", "both"):
        for name, val in fields.items():
            write_field_csv(d / f"{name}.csv", grid, val)
    if fmt in ("vtk", "both"):
        write_vtk(d / "fields.vtk", grid, fields, f"step {state.step} t={FMT % state.t}")
    return d
