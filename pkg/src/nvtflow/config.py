"""
Scenario configuration files.

A configuration is a TOML document with the tables below; every quantity is
in SI units.

``[grid]``
    ``nx``, ``ny`` (cells), ``lx``, ``ly`` (m).
``[mixture]``
    ``components`` (names in the database), ``database`` (optional path to a
    component table, defaults to the shipped one; relative paths resolve
    against the config file), ``temperature`` (K), ``diffusion`` (m^2/s, one
    per component), ``k`` and ``beta`` (optional symmetric matrices, zero by
    default).
``[solver]``
    ``dt`` (s), ``n_steps``, ``nonlinear_tol``, ``max_nonlinear_iters``,
    ``linear_tol``, ``lambda``.
``[flow]``
    ``eta``, ``xi`` (Pa s), with ``eta > 0`` and ``xi > 2 eta / 3``.
``[scenario]``
    ``kind`` (``square_droplet``, ``ellipse_bubble``, ``two_bubbles`` or
    ``custom``), ``n_gas``, ``n_liquid`` (mol/m^3), ``inside`` (``liquid`` or
    ``gas``; defaults to liquid for the droplet and gas for the bubbles),
    ``smoothing`` (tanh width in cells, default 2, 0 for a sharp interface)
    and geometry keys:

    * square_droplet: ``center`` (m, default domain centre), ``half_width``
      (m, default 5e-9)
    * ellipse_bubble: ``center``, ``semi_axes`` (m, default [6e-9, 3.5e-9])
    * two_bubbles: ``centers`` (m, default [[6.5e-9, 1e-8], [1.35e-8, 1e-8]]),
      ``radius`` (m, default 3.5e-9)
    * custom: ``regions``, an array of tables each with ``shape``
      (``rectangle``, ``ellipse`` or ``circle``), ``center`` and
      ``half_widths``, ``semi_axes`` or ``radius``.
``[output]``
    ``directory``, ``snapshot_every`` (steps, 0 for first and last only),
    ``format`` (``csv``, ``vtk`` or ``both``).
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import eos
from .errors import ConfigError
from .grid import GridSpec
from .stepper import SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENARIO_KINDS = ("square_droplet", "ellipse_bubble", "two_bubbles", "custom")
SHAPES = ("rectangle", "ellipse", "circle")
FORMATS = ("csv", "vtk", "both")


@dataclass(frozen=True)
class Region:
    """A filled shape; ``size`` is the half widths, semi-axes or ``(r, r)``."""

    shape: str
    center: tuple[float, float]
    size: tuple[float, float]

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown region shape {self.shape!r}; expected one of {SHAPES}")
        if len(self.center) != 2 or len(self.size) != 2:
            raise ConfigError("region center and size need two entries")
        if min(self.size) < 0:
            raise ConfigError(f"region size must be non-negative, got {self.size}")

    @property
    def empty(self) -> bool:
        return min(self.size) == 0

    def signed_distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Positive inside.  Exact for rectangles and circles, radial-scaled for ellipses."""
        dx = x - self.center[0]
        dy = y - self.center[1]
        a, b = self.size
        if self.shape == "rectangle":
            return np.minimum(a - np.abs(dx), b - np.abs(dy))
        rho = np.hypot(dx / a, dy / b)
        return (1.0 - rho) * min(a, b)


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    n_gas: np.ndarray
    n_liquid: np.ndarray
    inside: str
    regions: tuple[Region, ...]
    smoothing: float = 2.0

    @property
    def n_inside(self) -> np.ndarray:
        return self.n_liquid if self.inside == "liquid" else self.n_gas

    @property
    def n_outside(self) -> np.ndarray:
        return self.n_gas if self.inside == "liquid" else self.n_liquid


@dataclass(frozen=True)
class OutputSpec:
    directory: Path = Path("output")
    snapshot_every: int = 0
    format: str = "csv"

    def __post_init__(self):
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every must be >= 0")
        if self.format not in FORMATS:
            raise ConfigError(f"output format must be one of {FORMATS}, got {self.format!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    grid: GridSpec
    mixture: eos.MixtureSpec
    solver: SolverConfig
    eta: float
    xi: float
    scenario: ScenarioSpec
    output: OutputSpec = field(default_factory=OutputSpec)
    source: str = ""

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if not self.xi > 2.0 * self.eta / 3.0:
            raise ConfigError(f"xi must exceed 2*eta/3 = {2 * self.eta / 3:g}, got {self.xi}")
        m = self.mixture.M
        for label, n in (("n_gas", self.scenario.n_gas), ("n_liquid", self.scenario.n_liquid)):
            if n.shape != (m,):
                raise ConfigError(f"{label} needs {m} entries, got {n.size}")
            try:
                eos.check_state(self.mixture, n)
            except ValueError as exc:
                raise ConfigError(f"{label} is not a physical state: {exc}") from exc

    def with_overrides(self, *, out=None, steps=None, dt=None, snapshot_every=None,
                       fmt=None) -> ScenarioConfig:
        solver, output = self.solver, self.output
        if steps is not None:
            solver = replace(solver, n_steps=steps)
        if dt is not None:
            solver = replace(solver, dt=dt)
        if out is not None:
            output = replace(output, directory=Path(out))
        if snapshot_every is not None:
            output = replace(output, snapshot_every=snapshot_every)
        if fmt is not None:
            output = replace(output, format=fmt)
        return replace(self, solver=solver, output=output)


def _table(doc: dict, name: str, required: bool = True) -> dict:
    if name not in doc:
        if required:
            raise ConfigError(f"missing [{name}] table")
        return {}
    if not isinstance(doc[name], dict):
        raise ConfigError(f"[{name}] must be a table")
    return doc[name]


def _get(table: dict, section: str, key: str, default=None, cast=float):
    if key not in table:
        if default is None:
            raise ConfigError(f"[{section}] is missing {key!r}")
        return cast(default)
    try:
        return cast(table[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key} = {table[key]!r}: {exc}") from exc


def _vector(table, section, key, default=None) -> np.ndarray:
    v = _get(table, section, key, default, cast=lambda x: np.asarray(x, dtype=float))
    return np.atleast_1d(v)


def _regions(sc: dict, kind: str, lx: float, ly: float) -> tuple[Region, ...]:
    mid = [lx / 2, ly / 2]
    if kind == "square_droplet":
        h = _get(sc, "scenario", "half_width", 5e-9)
        return (Region("rectangle", tuple(_vector(sc, "scenario", "center", mid)), (h, h)),)
    if kind == "ellipse_bubble":
        ax = _vector(sc, "scenario", "semi_axes", [6e-9, 3.5e-9])
        return (Region("ellipse", tuple(_vector(sc, "scenario", "center", mid)), tuple(ax)),)
    if kind == "two_bubbles":
        centers = _get(sc, "scenario", "centers", [[6.5e-9, 1e-8], [1.35e-8, 1e-8]],
                       cast=lambda x: np.asarray(x, dtype=float))
        r = _get(sc, "scenario", "radius", 3.5e-9)
        if centers.ndim != 2 or centers.shape[1] != 2:
            raise ConfigError("[scenario] centers must be a list of [x, y] pairs")
        return tuple(Region("circle", tuple(c), (r, r)) for c in centers)
    regions = []
    for k, reg in enumerate(sc.get("regions", [])):
        shape = reg.get("shape")
        key = {"rectangle": "half_widths", "ellipse": "semi_axes", "circle": "radius"}.get(shape)
        if key is None:
            raise ConfigError(f"[scenario] regions[{k}]: unknown shape {shape!r}")
        size = _vector(reg, f"scenario.regions[{k}]", key)
        if shape == "circle":
            size = np.repeat(size, 2)
        regions.append(Region(shape, tuple(_vector(reg, f"scenario.regions[{k}]", "center")),
                              tuple(size)))
    return tuple(regions)


def _check_inside_domain(regions, lx, ly):
    for reg in regions:
        if reg.empty:
            continue
        (cx, cy), (a, b) = reg.center, reg.size
        if cx - a < 0 or cx + a > lx or cy - b < 0 or cy + b > ly:
            raise ConfigError(f"{reg.shape} at {reg.center} with size {reg.size} m "
                              f"exceeds the domain [0, {lx:g}] x [0, {ly:g}]")


def parse_config(doc: dict, base: Path | None = None, source: str = "") -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from a parsed TOML document."""
    g = _table(doc, "grid")
    grid = GridSpec(_get(g, "grid", "nx", cast=int), _get(g, "grid", "ny", cast=int),
                    _get(g, "grid", "lx"), _get(g, "grid", "ly"))

    mx = _table(doc, "mixture")
    names = mx.get("components")
    if not isinstance(names, list) or not names:
        raise ConfigError("[mixture] components must be a non-empty list of names")
    db_path = mx.get("database")
    if db_path is not None and base is not None and not Path(db_path).is_absolute():
        db_path = base / db_path
    db = eos.load_components(db_path)
    diff = _vector(mx, "mixture", "diffusion")
    if diff.size == 1:
        diff = np.repeat(diff, len(names))
    if diff.size != len(names):
        raise ConfigError(f"[mixture] diffusion needs {len(names)} entries, got {diff.size}")
    comps = [eos.component_from_db(nm, db, float(d)) for nm, d in zip(names, diff)]
    sol = _table(doc, "solver")
    lam = _get(sol, "solver", "lambda", 1.0)
    mixture = eos.MixtureSpec(comps, _get(mx, "mixture", "temperature"),
                              k=mx.get("k"), beta=mx.get("beta"), lam=lam)

    try:
        solver = SolverConfig(dt=_get(sol, "solver", "dt"),
                              n_steps=_get(sol, "solver", "n_steps", 1, cast=int),
                              nonlinear_tol=_get(sol, "solver", "nonlinear_tol", 1e-3),
                              max_nonlinear_iters=_get(sol, "solver", "max_nonlinear_iters", 5, cast=int),
                              linear_tol=_get(sol, "solver", "linear_tol", 1e-9),
                              lam=lam)
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from exc

    fl = _table(doc, "flow")
    sc = _table(doc, "scenario")
    kind = _get(sc, "scenario", "kind", cast=str)
    if kind not in SCENARIO_KINDS:
        raise ConfigError(f"[scenario] kind must be one of {SCENARIO_KINDS}, got {kind!r}")
    default_inside = "liquid" if kind in ("square_droplet", "custom") else "gas"
    inside = _get(sc, "scenario", "inside", default_inside, cast=str)
    if inside not in ("liquid", "gas"):
        raise ConfigError(f"[scenario] inside must be 'liquid' or 'gas', got {inside!r}")
    smoothing = _get(sc, "scenario", "smoothing", 2.0)
    if smoothing < 0:
        raise ConfigError("[scenario] smoothing must be >= 0")
    regions = _regions(sc, kind, grid.lx, grid.ly)
    _check_inside_domain(regions, grid.lx, grid.ly)
    scenario = ScenarioSpec(kind, _vector(sc, "scenario", "n_gas"), _vector(sc, "scenario", "n_liquid"),
                            inside, regions, smoothing)

    out = _table(doc, "output", required=False)
    output = OutputSpec(Path(_get(out, "output", "directory", "output", cast=str)),
                        _get(out, "output", "snapshot_every", 0, cast=int),
                        _get(out, "output", "format", "csv", cast=str))

    return ScenarioConfig(grid, mixture, solver, _get(fl, "flow", "eta"), _get(fl, "flow", "xi"),
                          scenario, output, source)


def preset_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("nvtflow.presets").iterdir()
                  if p.name.endswith(".cfg"))


def load_config(path_or_preset: str | Path) -> ScenarioConfig:
    """Read a configuration file, or a shipped preset by name (e.g. ``example1``)."""
    path = Path(path_or_preset)
    if path.is_file():
        text, base = path.read_text(), path.parent
    else:
        name = path.name[:-4] if path.name.endswith(".cfg") else path.name
        if name not in preset_names():
            raise ConfigError(f"no config file {str(path_or_preset)!r} and no preset of that name "
                              f"(presets: {', '.join(preset_names())})")
        text, base = resources.files("nvtflow.presets").joinpath(f"{name}.cfg").read_text(), None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path_or_preset}: {exc}") from exc
    return parse_config(doc, base, text)
