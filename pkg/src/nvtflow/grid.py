"""
Uniform 2-D staggered (MAC) grid and its discrete operators.

Cell fields are arrays of shape ``(nx, ny)`` indexed ``[i, j]`` with ``i``
along x.  Face fields hold the x-components on vertical faces, shape
``(nx + 1, ny)``, and the y-components on horizontal faces, shape
``(nx, ny + 1)``.  Flattened vectors use C order; a flattened face vector is
the x block followed by the y block.

All operators are linear and available both as functions on arrays and as
sparse matrices (``Grid.grad``, ``Grid.div``, ...), built once per grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    lx: float
    ly: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigError(f"grid needs at least 2x2 cells, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ConfigError(f"domain extents must be positive, got {self.lx} x {self.ly}")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny


@dataclass
class FaceField:
    """Face-normal components on the staggered grid."""

    x: np.ndarray
    y: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid | GridSpec) -> FaceField:
        nx, ny = grid.nx, grid.ny
        return cls(np.zeros((nx + 1, ny)), np.zeros((nx, ny + 1)))

    @classmethod
    def from_vector(cls, grid: Grid | GridSpec, v: np.ndarray) -> FaceField:
        nx, ny = grid.nx, grid.ny
        k = (nx + 1) * ny
        return cls(v[:k].reshape(nx + 1, ny).copy(), v[k:].reshape(nx, ny + 1).copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.y.ravel()])

    def copy(self) -> FaceField:
        return FaceField(self.x.copy(), self.y.copy())

    def boundary_normals(self) -> np.ndarray:
        return np.concatenate([self.x[0], self.x[-1], self.y[:, 0], self.y[:, -1]])

    def __mul__(self, other):
        if isinstance(other, FaceField):
            return FaceField(self.x * other.x, self.y * other.y)
        return FaceField(self.x * other, self.y * other)

    __rmul__ = __mul__

    def __add__(self, other: FaceField) -> FaceField:
        return FaceField(self.x + other.x, self.y + other.y)

    def __sub__(self, other: FaceField) -> FaceField:
        return FaceField(self.x - other.x, self.y - other.y)

    def __neg__(self) -> FaceField:
        return FaceField(-self.x, -self.y)


def _second_difference(m: int, end: str) -> sp.csr_matrix:
    """1-D second difference on ``m`` points.

    ``end='dirichlet'``: the neighbours beyond either end are zero.
    ``end='mirror'``: odd ghost values across a wall half a spacing away.
    """
    main = -2.0 * np.ones(m)
    if end == "mirror":
        main[0] = main[-1] = -3.0
    off = np.ones(m - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


class Grid:
    """A :class:`GridSpec` together with its cached operator matrices."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.nx, self.ny = spec.nx, spec.ny
        self.hx, self.hy = spec.hx, spec.hy
        self.ncell = self.nx * self.ny
        self.nfx = (self.nx + 1) * self.ny
        self.nfy = self.nx * (self.ny + 1)
        self.nface = self.nfx + self.nfy
        self.cell_volume = self.hx * self.hy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def xface_centers(self):
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def yface_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    # -- index bookkeeping -------------------------------------------------

    def _cell_index(self, i, j):
        return i * self.ny + j

    def _xface_index(self, i, j):
        return i * self.ny + j

    def _yface_index(self, i, j):
        return self.nfx + i * (self.ny + 1) + j

    @cached_property
    def interior_faces(self) -> np.ndarray:
        """Indices (into the flat face vector) of faces not on the domain boundary."""
        nx, ny = self.nx, self.ny
        ix, jx = np.meshgrid(np.arange(1, nx), np.arange(ny), indexing="ij")
        iy, jy = np.meshgrid(np.arange(nx), np.arange(1, ny), indexing="ij")
        return np.concatenate([self._xface_index(ix, jx).ravel(), self._yface_index(iy, jy).ravel()])

    @cached_property
    def interior_selector(self) -> sp.csr_matrix:
        idx = self.interior_faces
        return sp.csr_matrix((np.ones(idx.size), (np.arange(idx.size), idx)),
                             shape=(idx.size, self.nface))

    @cached_property
    def n_interior_x(self) -> int:
        return (self.nx - 1) * self.ny

    # -- operator matrices -------------------------------------------------

    @cached_property
    def grad(self) -> sp.csr_matrix:
        """Cell -> face gradient; boundary faces carry zero (homogeneous Neumann)."""
        nx, ny = self.nx, self.ny
        rows, cols, vals = [], [], []
        i, j = np.meshgrid(np.arange(1, nx), np.arange(ny), indexing="ij")
        f = self._xface_index(i, j).ravel()
        rows += [f, f]
        cols += [self._cell_index(i, j).ravel(), self._cell_index(i - 1, j).ravel()]
        vals += [np.full(f.size, 1.0 / self.hx), np.full(f.size, -1.0 / self.hx)]
        i, j = np.meshgrid(np.arange(nx), np.arange(1, ny), indexing="ij")
        f = self._yface_index(i, j).ravel()
        rows += [f, f]
        cols += [self._cell_index(i, j).ravel(), self._cell_index(i, j - 1).ravel()]
        vals += [np.full(f.size, 1.0 / self.hy), np.full(f.size, -1.0 / self.hy)]
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.nface, self.ncell))

    @cached_property
    def div(self) -> sp.csr_matrix:
        """Face -> cell divergence, including boundary-face values."""
        nx, ny = self.nx, self.ny
        i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        c = self._cell_index(i, j).ravel()
        rows = np.concatenate([c, c, c, c])
        cols = np.concatenate([
            self._xface_index(i + 1, j).ravel(), self._xface_index(i, j).ravel(),
            self._yface_index(i, j + 1).ravel(), self._yface_index(i, j).ravel(),
        ])
        n = c.size
        vals = np.concatenate([
            np.full(n, 1.0 / self.hx), np.full(n, -1.0 / self.hx),
            np.full(n, 1.0 / self.hy), np.full(n, -1.0 / self.hy),
        ])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.ncell, self.nface))

    @cached_property
    def lap(self) -> sp.csr_matrix:
        """Five-point Laplacian with Neumann closure, ``div @ grad``."""
        return (self.div @ self.grad).tocsr()

    @cached_property
    def avg(self) -> sp.csr_matrix:
        """Cell -> face arithmetic average; boundary faces copy the adjacent cell."""
        nx, ny = self.nx, self.ny
        rows, cols, vals = [], [], []
        i, j = np.meshgrid(np.arange(nx + 1), np.arange(ny), indexing="ij")
        f = self._xface_index(i, j).ravel()
        left = self._cell_index(np.clip(i - 1, 0, nx - 1), j).ravel()
        right = self._cell_index(np.clip(i, 0, nx - 1), j).ravel()
        rows += [f, f]
        cols += [left, right]
        vals += [np.full(f.size, 0.5), np.full(f.size, 0.5)]
        i, j = np.meshgrid(np.arange(nx), np.arange(ny + 1), indexing="ij")
        f = self._yface_index(i, j).ravel()
        below = self._cell_index(i, np.clip(j - 1, 0, ny - 1)).ravel()
        above = self._cell_index(i, np.clip(j, 0, ny - 1)).ravel()
        rows += [f, f]
        cols += [below, above]
        vals += [np.full(f.size, 0.5), np.full(f.size, 0.5)]
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.nface, self.ncell))

    @cached_property
    def _face_neighbours(self):
        """For every face: (low-side cell, high-side cell), clipped at the boundary."""
        nx, ny = self.nx, self.ny
        i, j = np.meshgrid(np.arange(nx + 1), np.arange(ny), indexing="ij")
        lo_x = self._cell_index(np.clip(i - 1, 0, nx - 1), j).ravel()
        hi_x = self._cell_index(np.clip(i, 0, nx - 1), j).ravel()
        i, j = np.meshgrid(np.arange(nx), np.arange(ny + 1), indexing="ij")
        lo_y = self._cell_index(i, np.clip(j - 1, 0, ny - 1)).ravel()
        hi_y = self._cell_index(i, np.clip(j, 0, ny - 1)).ravel()
        return np.concatenate([lo_x, lo_y]), np.concatenate([hi_x, hi_y])

    def upwind_matrix(self, u: FaceField | np.ndarray) -> sp.csr_matrix:
        """Cell -> face upwind selection for face-normal velocity ``u``.

        Positive velocity takes the low-side (left/bottom) cell, negative the
        high-side cell, and an exact zero the mean of both.
        """
        uv = u.vector() if isinstance(u, FaceField) else np.asarray(u)
        lo, hi = self._face_neighbours
        w_lo = np.where(uv > 0, 1.0, np.where(uv < 0, 0.0, 0.5))
        faces = np.arange(self.nface)
        return sp.csr_matrix((np.concatenate([w_lo, 1.0 - w_lo]),
                              (np.concatenate([faces, faces]), np.concatenate([lo, hi]))),
                             shape=(self.nface, self.ncell))

    @cached_property
    def face_to_cell(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Averages of the two faces bounding each cell, per direction."""
        nx, ny = self.nx, self.ny
        i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        c = self._cell_index(i, j).ravel()
        half = np.full(c.size, 0.5)
        px = sp.csr_matrix((np.concatenate([half, half]),
                            (np.concatenate([c, c]),
                             np.concatenate([self._xface_index(i, j).ravel(),
                                             self._xface_index(i + 1, j).ravel()]))),
                           shape=(self.ncell, self.nface))
        py = sp.csr_matrix((np.concatenate([half, half]),
                            (np.concatenate([c, c]),
                             np.concatenate([self._yface_index(i, j).ravel(),
                                             self._yface_index(i, j + 1).ravel()]))),
                           shape=(self.ncell, self.nface))
        return px, py

    @cached_property
    def vector_laplacian(self) -> sp.csr_matrix:
        """Laplacian of interior face velocities with no-slip walls.

        Normal components vanish on the walls; tangential components use odd
        ghost values so they vanish half a cell outside the last unknown.
        """
        nx, ny = self.nx, self.ny
        ix, iy = sp.identity(nx - 1), sp.identity(ny)
        lx = (sp.kron(_second_difference(nx - 1, "dirichlet"), iy) / self.hx**2
              + sp.kron(ix, _second_difference(ny, "mirror")) / self.hy**2)
        jx, jy = sp.identity(nx), sp.identity(ny - 1)
        ly = (sp.kron(_second_difference(nx, "mirror"), jy) / self.hx**2
              + sp.kron(jx, _second_difference(ny - 1, "dirichlet")) / self.hy**2)
        return sp.block_diag([lx, ly], format="csr")

    @cached_property
    def grad_div(self) -> sp.csr_matrix:
        """``grad(div u)`` on interior faces, boundary normals held at zero."""
        s = self.interior_selector
        return (s @ self.grad @ self.div @ s.T).tocsr()

    # -- field-level wrappers ----------------------------------------------

    def grad_cell_to_face(self, phi: np.ndarray) -> FaceField:
        return FaceField.from_vector(self, self.grad @ np.asarray(phi).ravel())

    def div_face_to_cell(self, F: FaceField) -> np.ndarray:
        return (self.div @ F.vector()).reshape(self.shape)

    def laplacian(self, phi: np.ndarray) -> np.ndarray:
        return (self.lap @ np.asarray(phi).ravel()).reshape(self.shape)

    def upwind_face_value(self, phi: np.ndarray, u: FaceField) -> FaceField:
        return FaceField.from_vector(self, self.upwind_matrix(u) @ np.asarray(phi).ravel())

    def interp_cell_to_face(self, phi: np.ndarray) -> FaceField:
        return FaceField.from_vector(self, self.avg @ np.asarray(phi).ravel())

    def interp_face_to_cell(self, u: FaceField) -> tuple[np.ndarray, np.ndarray]:
        px, py = self.face_to_cell
        v = u.vector()
        return (px @ v).reshape(self.shape), (py @ v).reshape(self.shape)

    def integrate(self, phi: np.ndarray) -> float:
        """Midpoint-rule integral of a cell field."""
        return float(np.sum(phi) * self.cell_volume)

    def face_inner(self, F: FaceField, G: FaceField) -> float:
        """Discrete L2 inner product over faces, each weighted by ``hx*hy``."""
        return float(np.dot(F.vector(), G.vector()) * self.cell_volume)
