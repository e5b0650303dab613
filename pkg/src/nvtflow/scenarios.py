"""Initial molar-density fields for the configured scenarios."""
from __future__ import annotations

import numpy as np

from .config import Region, ScenarioConfig
from .grid import FaceField, Grid
from .stepper import SimState


def inside_fraction(grid: Grid, regions: tuple[Region, ...], smoothing: float) -> np.ndarray:
    """Cell-centred indicator of the union of ``regions`` in ``[0, 1]``.

    ``smoothing`` is the tanh width in cells; 0 gives a sharp 0/1 indicator
    of the cell centres.  Empty regions are ignored.
    """
    x, y = grid.cell_centers()
    live = [r for r in regions if not r.empty]
    if not live:
        return np.zeros(grid.shape)
    d = np.max([r.signed_distance(x, y) for r in live], axis=0)
    if smoothing == 0:
        return (d > 0).astype(float)
    h = min(grid.hx, grid.hy)
    return 0.5 * (1.0 + np.tanh(d / (smoothing * h)))


def build_initial_state(cfg: ScenarioConfig, grid: Grid | None = None) -> SimState:
    """Two-phase initial state at rest: the inside phase within the regions, the other outside."""
    grid = Grid(cfg.grid) if grid is None else grid
    sc = cfg.scenario
    theta = inside_fraction(grid, sc.regions, sc.smoothing)[None]
    n = theta * sc.n_inside[:, None, None] + (1.0 - theta) * sc.n_outside[:, None, None]
    return SimState(n, FaceField.zeros(grid), 0.0, 0)
