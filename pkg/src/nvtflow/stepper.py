"""
Semi-implicit, energy-stable time stepping of the coupled molar-density /
velocity system.

Each step solves, for every component ``i``,

    (n_i' - n_i) / dt + div(n_i' u') + div J_i' = 0,
    J_i' = -(D_i n_i / RT) grad mu_i',
    mu_i' = mu_convex_i(n') + mu_concave_i(n) - sum_j div(c_ij grad n_j'),

followed by the momentum balance driven by ``-sum_i n_i grad mu_i``.  The
nonlinear system is handled by a mixed iteration: Newton linearization of
``mu_convex`` and lagged coefficients elsewhere, mass system then momentum
system within each sweep.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import eos
from .errors import EosDomainError, SingularSystemError
from .grid import FaceField, Grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    n_steps: int = 1
    nonlinear_tol: float = 1e-3
    max_nonlinear_iters: int = 5
    linear_tol: float = 1e-9
    lam: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        for name in ("nonlinear_tol", "linear_tol"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.max_nonlinear_iters < 1:
            raise ValueError("max_nonlinear_iters must be >= 1")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


@dataclass
class SimState:
    """Molar densities ``n`` (shape ``(M, nx, ny)``), face velocity ``u`` and clock.

    ``mu`` holds the chemical potentials returned by the last step, if any.
    """

    n: np.ndarray
    u: FaceField
    t: float = 0.0
    step: int = 0
    mu: np.ndarray | None = None

    def copy(self) -> SimState:
        return SimState(self.n.copy(), self.u.copy(), self.t, self.step,
                        None if self.mu is None else self.mu.copy())


@dataclass
class StepReport:
    iterations: int = 0
    rel_change: float = np.inf
    changes: list[float] = field(default_factory=list)
    mass_residuals: list[float] = field(default_factory=list)
    momentum_residuals: list[float] = field(default_factory=list)
    clamped: bool = False


# -- pointwise pieces ------------------------------------------------------

def _cell_label(grid: Grid, exc: EosDomainError) -> str:
    msg = str(exc)
    if " at index (" not in msg:
        return msg
    head, idx = msg.split(" at index ", 1)
    i, j = (int(s) for s in idx.strip("()").split(","))
    xc, yc = grid.cell_centers()
    return f"{head} in cell (i={i}, j={j}) at x={xc[i, j]:.6g} m, y={yc[i, j]:.6g} m"


def gradient_term(grid: Grid, c: np.ndarray, n: np.ndarray) -> np.ndarray:
    """``-sum_j div(c_ij grad n_j)`` for every component, shape ``(M, nx, ny)``."""
    lap = np.stack([grid.laplacian(nj) for nj in n])
    return -np.tensordot(c, lap, axes=1)


def chemical_potential_field(grid: Grid, mix: eos.MixtureSpec, c: np.ndarray, n: np.ndarray,
                             n_old: np.ndarray | None = None, lam: float | None = None) -> np.ndarray:
    """Chemical potential fields.

    With ``n_old`` given, uses the time-split form: the convex part at ``n``
    and the concave part at ``n_old``.  Otherwise the full variational
    derivative at ``n``.
    """
    try:
        if n_old is None:
            bulk = eos.mu_bulk(mix, n)
        else:
            bulk = eos.split_mu(mix, n, lam)[0] + eos.split_mu(mix, n_old, lam)[1]
    except EosDomainError as exc:
        raise EosDomainError(_cell_label(grid, exc)) from exc
    return bulk + gradient_term(grid, c, n)


def face_mobility(grid: Grid, mix: eos.MixtureSpec, n: np.ndarray) -> np.ndarray:
    """``D_i n_i / RT`` at faces from averaged, floored cell densities; shape ``(M, nface)``."""
    nf = np.stack([grid.avg @ np.maximum(ni, eos.N_FLOOR).ravel() for ni in n])
    return mix.D[:, None] * nf / mix.RT


def diffusion_flux(grid: Grid, mix: eos.MixtureSpec, n_k: np.ndarray, mu: np.ndarray) -> list[FaceField]:
    """Diagonal-mobility diffusion fluxes ``J_i = -(D_i n_i / RT) grad mu_i``."""
    mob = face_mobility(grid, mix, n_k)
    return [FaceField.from_vector(grid, -mob[i] * (grid.grad @ mu[i].ravel()))
            for i in range(len(mu))]


# -- sparse solves ---------------------------------------------------------

def solve_sparse(A: sp.spmatrix, b: np.ndarray, tol: float, refine: int = 3,
                 x0: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Direct solve with row equilibration and iterative refinement.

    With an initial guess ``x0`` the factorization solves for the correction,
    so the rounding error scales with ``|x - x0|`` instead of ``|x|``.
    Returns the solution and the relative residual of the equilibrated system.
    """
    A = sp.csr_matrix(A)
    scale = abs(A).max(axis=1).toarray().ravel()
    if np.any(scale == 0):
        raise SingularSystemError("system has an empty row")
    r = sp.diags(1.0 / scale)
    As = (r @ A).tocsc()
    bs = b / scale
    try:
        lu = spla.splu(As)
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}") from exc
    x = lu.solve(bs) if x0 is None else x0 + lu.solve(bs - As @ x0)
    bnorm = np.linalg.norm(bs) or 1.0
    res = np.linalg.norm(As @ x - bs) / bnorm
    for _ in range(refine):
        if res <= tol * 1e-3:
            break
        x = x + lu.solve(bs - As @ x)
        res = np.linalg.norm(As @ x - bs) / bnorm
    if not np.all(np.isfinite(x)) or res > tol:
        raise SingularSystemError(f"linear solve stagnated at relative residual {res:.3e} > {tol:.1e}")
    return x, res


# -- mass / chemical potential system --------------------------------------

def _interleave(m: int, ncell: int) -> np.ndarray:
    """``order[c*2M + v] = v*ncell + c``: per-cell (n_1..n_M, mu_1..mu_M) ordering."""
    c, v = np.meshgrid(np.arange(ncell), np.arange(2 * m), indexing="ij")
    return (v * ncell + c).ravel()


def assemble_mass_system(grid: Grid, mix: eos.MixtureSpec, c: np.ndarray, n_k: np.ndarray,
                         u_l: FaceField, n_l: np.ndarray, dt: float, lam: float | None = None,
                         mu_ref: np.ndarray | None = None):
    """Linear system for ``(n^{k+1,l+1}, mu^{k+1,l+1})``.

    Unknowns are interleaved per cell as ``(n_1..n_M, mu_1..mu_M)`` over cells
    in C order.  ``n_l`` is the Newton linearization point and must be
    feasible.  The chemical potential unknowns are offsets from the
    per-component constants ``mu_ref`` (shape ``(M,)``); gradients are blind to
    the shift, and it keeps the huge mobility coefficients from amplifying
    rounding in the absolute potentials.  Returns ``(A, b)``; by default
    ``mu_ref`` is zero.
    """
    m = n_k.shape[0]
    N = grid.ncell
    uv = u_l.vector()
    adv = grid.div @ sp.diags(uv) @ grid.upwind_matrix(uv)
    mob = face_mobility(grid, mix, n_k)
    eye = sp.identity(N, format="csr")

    nl = n_l.reshape(m, N)
    H = eos.hessian_convex(mix, nl, lam)
    mu_cvx, _ = eos.split_mu(mix, nl, lam)
    _, mu_ccv = eos.split_mu(mix, n_k.reshape(m, N), lam)

    blocks = [[None] * (2 * m) for _ in range(2 * m)]
    rhs = np.empty((2 * m, N))
    for i in range(m):
        blocks[i][i] = eye / dt + adv
        blocks[i][m + i] = -(grid.div @ sp.diags(mob[i]) @ grid.grad)
        blocks[m + i][m + i] = eye
        for j in range(m):
            blocks[m + i][j] = -sp.diags(H[i, j]) + c[i, j] * grid.lap
        rhs[i] = n_k[i].ravel() / dt
        rhs[m + i] = mu_cvx[i] - np.einsum("j...,j...->...", H[i], nl) + mu_ccv[i]
        if mu_ref is not None:
            rhs[m + i] -= mu_ref[i]
    A = sp.bmat(blocks, format="csr")
    order = _interleave(m, N)
    return A[order][:, order], rhs.ravel()[order]


def unpack_mass_solution(grid: Grid, x: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    v = x.reshape(grid.ncell, 2 * m).T
    return v[:m].reshape((m,) + grid.shape).copy(), v[m:].reshape((m,) + grid.shape).copy()


def reference_potential(mix: eos.MixtureSpec, n_l: np.ndarray, n_k: np.ndarray,
                        lam: float | None = None) -> np.ndarray:
    """Per-component mean of the pointwise split potential, a good shift for the mass solve."""
    m = n_l.shape[0]
    cvx, _ = eos.split_mu(mix, n_l.reshape(m, -1), lam)
    _, ccv = eos.split_mu(mix, n_k.reshape(m, -1), lam)
    return (cvx + ccv).mean(axis=1)


def solve_mass_system(grid: Grid, mix: eos.MixtureSpec, c: np.ndarray, n_k: np.ndarray,
                      u_l: FaceField, n_l: np.ndarray, dt: float, lam: float | None = None,
                      tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray, float]:
    """Assemble and solve the mass system; returns ``(n, mu, residual)``."""
    # mu is solved as an offset from mu_ref and n as a correction to n_k, which
    # keeps the rounding error of the stiff solve off the O(1e4) and O(1e3) levels
    mu_ref = reference_potential(mix, n_l, n_k, lam)
    A, b = assemble_mass_system(grid, mix, c, n_k, u_l, n_l, dt, lam, mu_ref)
    m = n_k.shape[0]
    guess = np.concatenate([n_k.reshape(m, -1), np.zeros((m, grid.ncell))]).ravel()
    x, res = solve_sparse(A, b, tol, x0=guess[_interleave(m, grid.ncell)])
    n, dmu = unpack_mass_solution(grid, x, m)
    return n, dmu + mu_ref[:, None, None], res


# -- momentum system -------------------------------------------------------

def _upwind_convection(ax, ay, hx, hy, x_end, y_end) -> sp.csr_matrix:
    """First-order upwind ``(a . grad) phi`` on a ``(p, q)`` block of face unknowns.

    ``*_end`` tells how a missing neighbour behaves: ``'dirichlet'`` (a wall
    node carrying zero) or ``'mirror'`` (odd ghost across a wall).
    """
    p, q = ax.shape
    idx = np.arange(p * q).reshape(p, q)
    diag = np.zeros((p, q))
    rows, cols, vals = [], [], []
    for a, h, axis, end in ((ax, hx, 0, x_end), (ay, hy, 1, y_end)):
        w = np.abs(a) / h
        diag += w
        # upwind neighbour: index - 1 along axis when a > 0, + 1 when a < 0
        for sign, sel in ((-1, a > 0), (1, a < 0)):
            shifted = np.roll(idx, -sign, axis=axis)
            coords = np.arange(a.shape[axis]).reshape((-1, 1) if axis == 0 else (1, -1))
            inside = (coords + sign >= 0) & (coords + sign < a.shape[axis])
            inside = np.broadcast_to(inside, a.shape)
            mask = sel & inside
            rows.append(idx[mask])
            cols.append(shifted[mask])
            vals.append(-w[mask])
            if end == "mirror":
                diag += np.where(sel & ~inside, w, 0.0)
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(p * q, p * q))


def _central_gradient(phi, hx, hy, x_end, y_end):
    """Centered derivatives of a face-velocity block using the same wall closures."""
    def pad(arr, axis, end):
        lo = np.take(arr, [0], axis=axis)
        hi = np.take(arr, [-1], axis=axis)
        if end == "mirror":
            lo, hi = -lo, -hi
        else:
            lo, hi = np.zeros_like(lo), np.zeros_like(hi)
        return np.concatenate([lo, arr, hi], axis=axis)

    px = pad(phi, 0, x_end)
    py = pad(phi, 1, y_end)
    return (px[2:] - px[:-2]) / (2 * hx), (py[:, 2:] - py[:, :-2]) / (2 * hy)


def _corner_average(a):
    return 0.25 * (a[:-1, :-1] + a[1:, :-1] + a[:-1, 1:] + a[1:, 1:])


def _split_interior(grid: Grid, v: np.ndarray):
    k = grid.n_interior_x
    return v[:k].reshape(grid.nx - 1, grid.ny), v[k:].reshape(grid.nx, grid.ny - 1)


def assemble_momentum_system(grid: Grid, mix: eos.MixtureSpec, n_k: np.ndarray, n_l: np.ndarray,
                             mu: np.ndarray, J: list[FaceField], u_k: FaceField, u_l: FaceField,
                             dt: float, eta: float, xi: float, n_face: np.ndarray | None = None):
    """Linear system for the interior face velocities ``u^{k+1,l+1}``.

    ``n_face`` (shape ``(M, nface)``) are the face densities multiplying the
    chemical potential gradients; by default the upwinded ``n_l`` against
    ``u_l``, which is what the mass balance transports.  Returns ``(A, b)``.
    """
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    S = grid.interior_selector
    rho_k = S @ (grid.avg @ eos.mass_density(mix, n_k).ravel())
    rho_l = S @ (grid.avg @ eos.mass_density(mix, n_l).ravel())

    ux, uy = u_l.x, u_l.y
    conv_x = _upwind_convection(ux[1:nx], _corner_average(uy), hx, hy, "dirichlet", "mirror")
    conv_y = _upwind_convection(_corner_average(ux), uy[:, 1:ny], hx, hy, "mirror", "dirichlet")
    conv = sp.block_diag([conv_x, conv_y], format="csr")

    visc = eta * grid.vector_laplacian + (xi + eta / 3.0) * grid.grad_div
    A = sp.diags(rho_k / dt) + sp.diags(rho_l) @ conv - visc

    # mass-diffusion transport term, lagged in grad u
    gxx, gxy = _central_gradient(ux[1:nx], hx, hy, "dirichlet", "mirror")
    gyx, gyy = _central_gradient(uy[:, 1:ny], hx, hy, "mirror", "dirichlet")
    Jm = FaceField.zeros(grid)
    for w, Ji in zip(mix.Mw, J):
        Jm = Jm + w * Ji
    jterm_x = Jm.x[1:nx] * gxx + _corner_average(Jm.y) * gxy
    jterm_y = _corner_average(Jm.x) * gyx + Jm.y[:, 1:ny] * gyy
    jterm = np.concatenate([jterm_x.ravel(), jterm_y.ravel()])

    if n_face is None:
        up = grid.upwind_matrix(u_l)
        n_face = np.stack([up @ ni.ravel() for ni in n_l])
    force = np.zeros(S.shape[0])
    for i in range(len(mu)):
        force -= S @ (n_face[i] * (grid.grad @ mu[i].ravel()))

    b = rho_k / dt * (S @ u_k.vector()) - jterm + force
    return A.tocsr(), b


def velocity_from_interior(grid: Grid, v: np.ndarray) -> FaceField:
    vx, vy = _split_interior(grid, v)
    u = FaceField.zeros(grid)
    u.x[1:grid.nx] = vx
    u.y[:, 1:grid.ny] = vy
    return u


# -- time stepping ---------------------------------------------------------

def _rel(delta, new, old) -> float:
    num = np.linalg.norm(delta)
    if num == 0.0:
        return 0.0
    den = max(np.linalg.norm(new), np.linalg.norm(old))
    return num / den if den > 0 else np.inf


class Stepper:
    """Advances a :class:`SimState` with the semi-implicit scheme.

    ``flow=False`` freezes the velocity at zero and skips the momentum solve,
    leaving a convex-splitting Cahn-Hilliard-type update.
    """

    def __init__(self, grid: Grid, mix: eos.MixtureSpec, solver: SolverConfig,
                 eta: float, xi: float, flow: bool = True):
        self.grid = grid
        self.mix = mix
        self.solver = solver
        self.eta = eta
        self.xi = xi
        self.flow = flow
        self.c = eos.influence_matrix(mix)

    def step(self, state: SimState) -> tuple[SimState, StepReport]:
        grid, mix, cfg = self.grid, self.mix, self.solver
        m = state.n.shape[0]
        dt, lam = cfg.dt, cfg.lam
        report = StepReport()
        n_k, clamped_k = eos.feasible_point(mix, state.n)
        u_k = state.u
        n_l, u_l = state.n.copy(), u_k.copy()
        mu = None
        for it in range(cfg.max_nonlinear_iters):
            n_lin, clamped = eos.feasible_point(mix, n_l)
            report.clamped |= clamped
            n_new, mu, res = solve_mass_system(grid, mix, self.c, n_k, u_l, n_lin, dt, lam,
                                               cfg.linear_tol)
            report.mass_residuals.append(res)

            if self.flow:
                J = diffusion_flux(grid, mix, n_k, mu)
                up = grid.upwind_matrix(u_l)
                n_face = np.stack([up @ ni.ravel() for ni in n_new])
                A, b = assemble_momentum_system(grid, mix, n_k, n_lin, mu, J, u_k, u_l,
                                                dt, self.eta, self.xi, n_face=n_face)
                v, res = solve_sparse(A, b, cfg.linear_tol)
                report.momentum_residuals.append(res)
                u_new = velocity_from_interior(grid, v)
            else:
                u_new = FaceField.zeros(grid)

            change = max(_rel(n_new - n_l, n_new, n_l),
                         _rel(u_new.vector() - u_l.vector(), u_new.vector(), u_l.vector()))
            report.changes.append(change)
            n_l, u_l = n_new, u_new
            report.iterations = it + 1
            report.rel_change = change
            if change < cfg.nonlinear_tol:
                break

        n_out, clamped = eos.feasible_point(mix, n_l)
        if clamped:
            report.clamped = True
            logger.warning("step %d: iterate left the physical domain and was clamped", state.step + 1)
        else:
            n_out = n_l
        logger.debug("step %d: %d iterations, change %.3e", state.step + 1, report.iterations,
                     report.rel_change)
        return SimState(n_out, u_l, state.t + dt, state.step + 1, mu), report


def step(state: SimState, solver: SolverConfig, mix: eos.MixtureSpec, grid: Grid,
         eta: float, xi: float) -> tuple[SimState, StepReport]:
    return Stepper(grid, mix, solver, eta, xi).step(state)
