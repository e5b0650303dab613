import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nvtflow.errors import ConfigError
from nvtflow.grid import FaceField, Grid, GridSpec


def test_gridspec_validation():
    with pytest.raises(ConfigError):
        GridSpec(1, 4, 1.0, 1.0)
    with pytest.raises(ConfigError):
        GridSpec(4, 4, 0.0, 1.0)
    g = GridSpec(40, 20, 2e-8, 1e-8)
    assert g.hx == pytest.approx(5e-10) and g.hy == pytest.approx(5e-10)


def test_facefield_layout(grid8):
    u = FaceField.zeros(grid8)
    assert u.x.shape == (9, 6) and u.y.shape == (8, 7)
    v = np.arange(grid8.nface, dtype=float)
    w = FaceField.from_vector(grid8, v)
    assert np.array_equal(w.vector(), v)
    assert w.x[0, 1] == 1.0 and w.y[0, 0] == grid8.nfx


def test_grad_of_constant_is_zero(grid8):
    assert np.all(grid8.grad_cell_to_face(np.full(grid8.shape, 3.7)).vector() == 0)


def test_grad_of_linear_field(grid8):
    x, y = grid8.cell_centers()
    g = grid8.grad_cell_to_face(2.0 * x - 3.0 * y)
    assert np.allclose(g.x[1:-1], 2.0, rtol=1e-13)
    assert np.allclose(g.y[:, 1:-1], -3.0, rtol=1e-13)
    assert np.all(g.x[[0, -1]] == 0) and np.all(g.y[:, [0, -1]] == 0)


def _manufactured(g):
    x, y = g.cell_centers()
    return np.cos(np.pi * x) * np.cos(np.pi * y)


def test_grad_second_order():
    errs = []
    for n in (16, 32, 64):
        g = Grid(GridSpec(n, n, 1.0, 1.0))
        gf = g.grad_cell_to_face(_manufactured(g))
        xf, yf = g.xface_centers()
        exact = -np.pi * np.sin(np.pi * xf) * np.cos(np.pi * yf)
        errs.append(np.max(np.abs(gf.x - exact)[1:-1]))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_laplacian_is_neumann_five_point(grid8):
    nx, ny, hx, hy = grid8.nx, grid8.ny, grid8.hx, grid8.hy
    L = np.zeros((grid8.ncell, grid8.ncell))
    for i in range(nx):
        for j in range(ny):
            r = i * ny + j
            for di, dj, h in ((1, 0, hx), (-1, 0, hx), (0, 1, hy), (0, -1, hy)):
                ii, jj = i + di, j + dj
                if 0 <= ii < nx and 0 <= jj < ny:
                    L[r, ii * ny + jj] += 1 / h**2
                    L[r, r] -= 1 / h**2
    assert np.allclose(grid8.lap.toarray(), L, rtol=1e-13, atol=0)


def test_laplacian_second_order():
    errs = []
    for n in (16, 32, 64):
        g = Grid(GridSpec(n, n, 1.0, 1.0))
        lap = g.laplacian(_manufactured(g))
        errs.append(np.max(np.abs(lap + 2 * np.pi**2 * _manufactured(g))))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_divergence_of_uniform_flux(grid8):
    F = FaceField.zeros(grid8)
    F.x[:] = 1.0
    d = grid8.div_face_to_cell(F)
    assert np.allclose(d, 0.0)
    F.x[[0, -1]] = 0.0
    d = grid8.div_face_to_cell(F)
    assert np.allclose(d[1:-1], 0.0)
    assert np.allclose(d[0], 1.0 / grid8.hx) and np.allclose(d[-1], -1.0 / grid8.hx)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (8, 6), elements=st.floats(-1e3, 1e3)),
       arrays(float, 9 * 6 + 8 * 7, elements=st.floats(-1e3, 1e3)))
def test_summation_by_parts(phi, fv):
    g = Grid(GridSpec(8, 6, 1.0, 0.75))
    F = FaceField.from_vector(g, fv)
    F.x[[0, -1]] = 0.0
    F.y[:, [0, -1]] = 0.0
    lhs = g.integrate(phi * g.div_face_to_cell(F))
    rhs = -g.face_inner(F, g.grad_cell_to_face(phi))
    scale = np.sum(np.abs(phi)) * np.sum(np.abs(fv)) * g.cell_volume / min(g.hx, g.hy) + 1e-300
    assert abs(lhs - rhs) <= 1e-13 * scale


@settings(max_examples=40, deadline=None)
@given(arrays(float, 9 * 6 + 8 * 7, elements=st.floats(-1.0, 1.0)))
def test_divergence_conserves_total(fv):
    g = Grid(GridSpec(8, 6, 1.0, 0.75))
    F = FaceField.from_vector(g, fv)
    F.x[[0, -1]] = 0.0
    F.y[:, [0, -1]] = 0.0
    phi = np.full(g.shape, 5.0)
    new = phi + 1e-3 * g.div_face_to_cell(F)
    assert abs(g.integrate(new) - g.integrate(phi)) <= 1e-13 * g.integrate(phi)


def test_upwind_selection(grid8):
    x, y = grid8.cell_centers()
    phi = x + 10 * y
    lo, hi = grid8._face_neighbours
    for sign, pick in ((1.0, lo), (-1.0, hi)):
        u = FaceField.from_vector(grid8, np.full(grid8.nface, sign))
        assert np.array_equal(grid8.upwind_face_value(phi, u).vector(), phi.ravel()[pick])
    u0 = FaceField.zeros(grid8)
    mid = grid8.upwind_face_value(phi, u0)
    assert np.allclose(mid.vector(), 0.5 * (phi.ravel()[lo] + phi.ravel()[hi]))
    # at interior x-faces the low side is the left cell
    up = grid8.upwind_face_value(phi, FaceField.from_vector(grid8, np.ones(grid8.nface)))
    assert np.allclose(up.x[1:-1], phi[:-1])
    assert np.allclose(up.y[:, 1:-1], phi[:, :-1])


def test_interpolation(grid8):
    c = np.full(grid8.shape, 2.5)
    assert np.allclose(grid8.interp_cell_to_face(c).vector(), 2.5)
    x, y = grid8.cell_centers()
    f = grid8.interp_cell_to_face(3 * x + y)
    xf, yf = grid8.xface_centers()
    assert np.allclose(f.x[1:-1], (3 * xf + yf)[1:-1])
    assert np.allclose(f.x[0], f.x[0] * 0 + (3 * x + y)[0])
    u = FaceField.zeros(grid8)
    u.x[:] = 4.0
    ux, uy = grid8.interp_face_to_cell(u)
    assert np.allclose(ux, 4.0) and np.allclose(uy, 0.0)


def test_round_trip_second_order():
    errs = []
    for n in (16, 32, 64):
        g = Grid(GridSpec(n, n, 1.0, 1.0))
        phi = _manufactured(g)
        back, _ = g.interp_face_to_cell(g.interp_cell_to_face(phi))
        errs.append(np.max(np.abs(back - phi)[1:-1, :]))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_vector_laplacian_no_slip():
    g = Grid(GridSpec(6, 5, 1.0, 1.0))
    L = g.vector_laplacian
    assert (L - L.T).count_nonzero() == 0
    assert np.all(np.linalg.eigvalsh(L.toarray()) < 0)
    # tangential x-velocity next to the bottom wall: mirror ghost gives -3 on the y-part
    A = L.toarray()
    k = g.n_interior_x
    row = 0 * g.ny + 0
    assert A[row, row] == pytest.approx(-2 / g.hx**2 - 3 / g.hy**2)
    # normal y-velocity next to the bottom wall: Dirichlet neighbour gives -2 on the y-part
    row = k + 0
    assert A[row, row] == pytest.approx(-3 / g.hx**2 - 2 / g.hy**2)


def test_grad_div_matches_composition():
    g = Grid(GridSpec(5, 4, 1.0, 0.8))
    S = g.interior_selector
    rng = np.random.default_rng(0)
    v = rng.normal(size=S.shape[0])
    want = S @ (g.grad @ (g.div @ (S.T @ v)))
    assert np.allclose(g.grad_div @ v, want)
    # symmetric negative semidefinite under the face inner product
    D = g.grad_div.toarray()
    assert np.allclose(D, D.T)
    assert np.all(np.linalg.eigvalsh(D) < 1e-8 * np.abs(D).max())


def test_operators_are_cached(grid8):
    assert grid8.grad is grid8.grad
    assert isinstance(grid8.lap, sp.csr_matrix)
