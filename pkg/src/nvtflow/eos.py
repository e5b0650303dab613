"""
Peng-Robinson Helmholtz free energy of a homogeneous mixture in molar-density form.

All state functions take a molar density array ``n`` of shape ``(M, ...)``:
the leading axis runs over components, any trailing axes over cells.  Scalars
come back with the trailing shape, chemical potentials with shape ``(M, ...)``
and Hessians with shape ``(M, M, ...)``.

The mixture argument may be a :class:`MixtureSpec` or a precomputed
:class:`EosCoefficients`.  The latter doubles as the raw-parameter hook that
reaches the ideal-gas limit ``a = b = 0``, which no physical set of critical
constants can produce.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import ConfigError, EosDomainError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

R = 8.314462618
"""Universal gas constant, J/(mol K)."""

N_FLOOR = 1e-8
"""Molar density floor (mol/m^3) applied before logarithms during assembly."""

FEASIBLE_MARGIN = 1e-12

SQRT2 = np.sqrt(2.0)
OMEGA_SWITCH = 0.49


@dataclass(frozen=True)
class ComponentSpec:
    """Pure-component constants (SI units)."""

    name: str
    Tc: float
    Pc: float
    omega: float
    Mw: float
    D: float = 0.0

    def __post_init__(self):
        if not self.Tc > 0:
            raise ConfigError(f"{self.name}: critical temperature must be positive, got {self.Tc}")
        if not self.Pc > 0:
            raise EosDomainError(f"{self.name}: critical pressure must be positive, got {self.Pc}")
        if not self.Mw > 0:
            raise ConfigError(f"{self.name}: molar weight must be positive, got {self.Mw}")
        if not self.D >= 0:
            raise ConfigError(f"{self.name}: diffusion coefficient must be >= 0, got {self.D}")


@dataclass(frozen=True)
class MixtureSpec:
    """Mixture definition at a fixed temperature.

    ``k`` holds the binary energy interaction coefficients, ``beta`` the
    influence-parameter interaction coefficients, ``lam`` the weight of the
    auxiliary term in the convex-concave splitting.
    """

    components: tuple[ComponentSpec, ...]
    T: float
    k: np.ndarray = None
    beta: np.ndarray = None
    lam: float = 1.0

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        m = len(comps)
        if m == 0:
            raise ConfigError("mixture needs at least one component")
        k = np.zeros((m, m)) if self.k is None else np.array(self.k, dtype=float)
        beta = np.zeros((m, m)) if self.beta is None else np.array(self.beta, dtype=float)
        for label, mat in (("k", k), ("beta", beta)):
            if mat.shape != (m, m):
                raise ConfigError(f"{label} must be {m}x{m}, got shape {mat.shape}")
            if not np.allclose(mat, mat.T, rtol=0, atol=1e-14):
                raise ConfigError(f"{label} must be symmetric")
        if np.any(np.diag(beta) != 0):
            raise ConfigError("diagonal of beta must be zero")
        k.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "beta", beta)
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if not self.T > 0:
            raise EosDomainError(f"temperature must be positive, got {self.T}")

    @property
    def M(self) -> int:
        return len(self.components)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.components]

    @cached_property
    def Mw(self) -> np.ndarray:
        return np.array([c.Mw for c in self.components])

    @cached_property
    def D(self) -> np.ndarray:
        return np.array([c.D for c in self.components])

    @cached_property
    def coefficients(self) -> EosCoefficients:
        return EosCoefficients.from_mixture(self)

    @property
    def RT(self) -> float:
        return R * self.T


@dataclass(frozen=True)
class EosCoefficients:
    """Composition-independent PR constants of a mixture at temperature ``T``.

    ``aij`` is the cross energy matrix ``sqrt(a_i a_j) (1 - k_ij)`` so that the
    mixture energy parameter satisfies ``a n^2 = n . aij . n``.
    """

    T: float
    a_i: np.ndarray
    b_i: np.ndarray
    m_i: np.ndarray
    aij: np.ndarray
    Mw: np.ndarray = field(default=None)

    @classmethod
    def from_mixture(cls, mix: MixtureSpec) -> EosCoefficients:
        T = mix.T
        if not T > 0:
            raise EosDomainError(f"temperature must be positive, got {T}")
        Tc = np.array([c.Tc for c in mix.components])
        Pc = np.array([c.Pc for c in mix.components])
        if np.any(Pc <= 0):
            raise EosDomainError("critical pressures must be positive")
        omega = np.array([c.omega for c in mix.components])
        m_i = slope_coefficients(omega)
        a_i = 0.45724 * R**2 * Tc**2 / Pc * (1.0 + m_i * (1.0 - np.sqrt(T / Tc))) ** 2
        b_i = 0.07780 * R * Tc / Pc
        aij = np.sqrt(np.outer(a_i, a_i)) * (1.0 - mix.k)
        return cls(T=T, a_i=a_i, b_i=b_i, m_i=m_i, aij=aij, Mw=mix.Mw)

    @classmethod
    def raw(cls, T: float, a_i: Sequence[float], b_i: Sequence[float], k=None) -> EosCoefficients:
        """Build coefficients directly from per-component ``a_i`` and ``b_i``."""
        a_i = np.atleast_1d(np.asarray(a_i, dtype=float))
        b_i = np.atleast_1d(np.asarray(b_i, dtype=float))
        k = np.zeros((a_i.size, a_i.size)) if k is None else np.asarray(k, dtype=float)
        aij = np.sqrt(np.outer(a_i, a_i)) * (1.0 - k)
        return cls(T=float(T), a_i=a_i, b_i=b_i, m_i=np.full(a_i.size, np.nan), aij=aij)

    @property
    def RT(self) -> float:
        return R * self.T


@dataclass(frozen=True)
class EosParams:
    """Mixture PR parameters evaluated at a composition."""

    a: np.ndarray
    b: np.ndarray
    a_i: np.ndarray
    b_i: np.ndarray
    m_i: np.ndarray


@dataclass(frozen=True)
class Composition:
    """A validated molar density vector (mol/m^3)."""

    n: np.ndarray

    def __post_init__(self):
        n = np.array(self.n, dtype=float)
        if n.ndim != 1:
            raise ValueError("composition must be a 1-D vector")
        if not np.all(np.isfinite(n)) or np.any(n <= 0):
            raise EosDomainError(f"molar densities must be positive and finite, got {n}")
        n.setflags(write=False)
        object.__setattr__(self, "n", n)

    def check(self, mix) -> Composition:
        check_state(mix, self.n)
        return self

    def __array__(self, dtype=None, copy=None):
        return self.n if dtype is None else self.n.astype(dtype)


class BulkEnergy(NamedTuple):
    ideal: np.ndarray
    repulsion: np.ndarray
    attraction: np.ndarray

    @property
    def total(self):
        return self.ideal + self.repulsion + self.attraction


MixtureLike = Union[MixtureSpec, EosCoefficients]


def slope_coefficients(omega) -> np.ndarray:
    """PR ``m_i`` from acentric factors, with the heavy-component branch above 0.49."""
    w = np.asarray(omega, dtype=float)
    light = 0.37464 + 1.54226 * w - 0.26992 * w**2
    heavy = 0.379642 + 1.485030 * w - 0.164423 * w**2 + 0.016666 * w**3
    return np.where(w <= OMEGA_SWITCH, light, heavy)


def load_components(path: str | Path | None = None) -> dict[str, dict]:
    """Read a component database (TOML tables keyed by component name)."""
    if path is None:
        text = resources.files("nvtflow.data").joinpath("components.toml").read_text()
    else:
        text = Path(path).read_text()
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse component database {path}: {exc}") from exc


def component_from_db(name: str, db: dict, D: float = 0.0) -> ComponentSpec:
    if name not in db:
        raise ConfigError(f"component {name!r} not in database (have {sorted(db)})")
    row = db[name]
    try:
        return ComponentSpec(name=name, Tc=row["Tc"], Pc=row["Pc"], omega=row["omega"],
                             Mw=row["Mw"], D=D)
    except KeyError as exc:
        raise ConfigError(f"component {name!r} is missing key {exc}") from exc


def _coef(mix: MixtureLike) -> EosCoefficients:
    return mix.coefficients if isinstance(mix, MixtureSpec) else mix


def _first_bad(mask: np.ndarray) -> str:
    idx = np.argwhere(mask)
    return "" if idx.size == 0 or mask.ndim == 0 else f" at index {tuple(int(i) for i in idx[0])}"


def check_state(mix: MixtureLike, n, split: bool = False) -> np.ndarray:
    """Validate ``n`` against the positivity and covolume constraints."""
    coef = _coef(mix)
    n = np.asarray(n, dtype=float)
    if n.shape[0] != coef.b_i.size:
        raise ValueError(f"expected {coef.b_i.size} components, got {n.shape[0]}")
    bad = ~np.isfinite(n) | (n <= 0)
    if np.any(bad):
        raise EosDomainError("molar densities must be positive" + _first_bad(bad.any(axis=0)))
    B = np.tensordot(coef.b_i, n, axes=1)
    if np.any(B >= 1):
        raise EosDomainError("covolume constraint b n < 1 violated" + _first_bad(B >= 1))
    if split:
        bn = coef.b_i.reshape((-1,) + (1,) * (n.ndim - 1)) * n
        if np.any(bn >= 1):
            raise EosDomainError("separate covolume constraint b_i n_i < 1 violated"
                                 + _first_bad((bn >= 1).any(axis=0)))
    return n


def feasible_point(mix: MixtureLike, n, floor: float = N_FLOOR) -> tuple[np.ndarray, bool]:
    """Project ``n`` into the interior of the physical domain.

    Returns the projected copy and whether any value had to move because it
    was non-positive or broke a covolume bound.  Values in ``(0, floor)`` are
    raised to ``floor`` without being reported.
    """
    coef = _coef(mix)
    n = np.array(n, dtype=float)
    clamped = bool(np.any(n <= 0))
    n = np.maximum(n, floor)
    bcol = coef.b_i.reshape((-1,) + (1,) * (n.ndim - 1))
    limit = 1.0 - FEASIBLE_MARGIN
    with np.errstate(divide="ignore"):
        cap = np.where(bcol > 0, limit / np.where(bcol > 0, bcol, 1.0), np.inf)
    over = n > cap
    if np.any(over):
        clamped = True
        n = np.where(over, cap, n)
    B = np.tensordot(coef.b_i, n, axes=1)
    if np.any(B > limit):
        clamped = True
        n = n * np.where(B > limit, limit / B, 1.0)
    return n, clamped


def eos_params(mix: MixtureLike, n) -> EosParams:
    """Mixture energy parameter and covolume from the quadratic and linear mixing rules."""
    coef = _coef(mix)
    n = check_state(coef, n)
    ntot = n.sum(axis=0)
    y = n / ntot
    a = np.einsum("i...,ij,j...->...", y, coef.aij, y)
    b = np.tensordot(coef.b_i, y, axes=1)
    return EosParams(a=a, b=b, a_i=coef.a_i, b_i=coef.b_i, m_i=coef.m_i)


# Taylor coefficients of phi about B = 0, from p^k - q^k with p, q = 1 -+ sqrt 2
_PHI_SERIES = np.array([-1.0, 1.0, -5.0 / 3.0, 3.0, -5.8, 35.0 / 3.0])
_SERIES_BELOW = 1e-3


def _attraction_kernel(B):
    """``phi(B) = ln[(1+(1-s)B)/(1+(1+s)B)] / (2 s B)`` with ``s = sqrt 2`` and its derivative.

    Below ``B = 1e-3`` a truncated Taylor series replaces the closed form,
    which loses digits to cancellation there.
    """
    B = np.asarray(B, dtype=float)
    big = B > _SERIES_BELOW
    Bs = np.where(big, B, 1.0)
    g = np.log1p((1.0 - SQRT2) * Bs) - np.log1p((1.0 + SQRT2) * Bs)
    phi = g / (2.0 * SQRT2 * Bs)
    dphi = -1.0 / (Bs * (1.0 + 2.0 * Bs - Bs**2)) - g / (2.0 * SQRT2 * Bs**2)
    Bt = np.where(big, 0.0, B)
    c = _PHI_SERIES
    phi_t = np.polynomial.polynomial.polyval(Bt, c)
    dphi_t = np.polynomial.polynomial.polyval(Bt, c[1:] * np.arange(1, c.size))
    return np.where(big, phi, phi_t), np.where(big, dphi, dphi_t)


def _invariants(coef: EosCoefficients, n):
    """Total density, ``B = b n`` and ``A = a n^2``, plus ``(aij n)_i``."""
    ntot = n.sum(axis=0)
    B = np.tensordot(coef.b_i, n, axes=1)
    an = np.tensordot(coef.aij, n, axes=1)
    A = np.sum(n * an, axis=0)
    return ntot, B, A, an


def _col(v, ndim):
    return np.asarray(v).reshape((-1,) + (1,) * (ndim - 1))


def f_bulk_terms(mix: MixtureLike, n) -> BulkEnergy:
    """Ideal, repulsion and attraction parts of the bulk free energy density (J/m^3)."""
    coef = _coef(mix)
    n = check_state(coef, n)
    RT = coef.RT
    ntot, B, A, _ = _invariants(coef, n)
    ideal = RT * np.sum(n * (np.log(n) - 1.0), axis=0)
    repulsion = -RT * ntot * np.log1p(-B)
    phi, _ = _attraction_kernel(B)
    return BulkEnergy(ideal, repulsion, A * phi)


def f_bulk(mix: MixtureLike, n):
    return f_bulk_terms(mix, n).total


def _mu_ideal(coef, n):
    return coef.RT * np.log(n)


def _mu_repulsion(coef, n, ntot, B):
    b = _col(coef.b_i, n.ndim)
    return coef.RT * (-np.log1p(-B) + ntot * b / (1.0 - B))


def _mu_attraction(coef, n, B, A, an):
    phi, dphi = _attraction_kernel(B)
    return 2.0 * an * phi + A * dphi * _col(coef.b_i, n.ndim)


def mu_bulk(mix: MixtureLike, n) -> np.ndarray:
    """Bulk chemical potentials ``d f_b / d n_i`` (J/mol)."""
    coef = _coef(mix)
    n = check_state(coef, n)
    ntot, B, A, an = _invariants(coef, n)
    return _mu_ideal(coef, n) + _mu_repulsion(coef, n, ntot, B) + _mu_attraction(coef, n, B, A, an)


def pressure_eos(mix: MixtureLike, n):
    """PR pressure ``nRT/(1-bn) - a n^2/(1+2bn-b^2n^2)`` in Pa."""
    coef = _coef(mix)
    n = check_state(coef, n)
    ntot, B, A, _ = _invariants(coef, n)
    return ntot * coef.RT / (1.0 - B) - A / (1.0 + 2.0 * B - B**2)


def pressure_identity(mix: MixtureLike, n):
    """Homogeneous pressure from ``sum_i n_i mu_i - f_b``."""
    n = check_state(mix, n)
    return np.sum(n * mu_bulk(mix, n), axis=0) - f_bulk(mix, n)


def f_auxiliary(mix: MixtureLike, n):
    """Ideal plus separate-repulsion term used to convexify the splitting."""
    coef = _coef(mix)
    n = check_state(coef, n, split=True)
    b = _col(coef.b_i, n.ndim)
    return coef.RT * np.sum(n * (np.log(n) - 1.0) - n * np.log1p(-b * n), axis=0)


def mu_auxiliary(mix: MixtureLike, n) -> np.ndarray:
    coef = _coef(mix)
    n = check_state(coef, n, split=True)
    bn = _col(coef.b_i, n.ndim) * n
    return coef.RT * (np.log(n) - np.log1p(-bn) + bn / (1.0 - bn))


def hessian_auxiliary(mix: MixtureLike, n) -> np.ndarray:
    """Diagonal of the auxiliary-term Hessian, shape ``(M, ...)``."""
    coef = _coef(mix)
    n = check_state(coef, n, split=True)
    b = _col(coef.b_i, n.ndim)
    one_m = 1.0 - b * n
    return coef.RT * (1.0 / n + b / one_m + b / one_m**2)


def _lam(mix, lam):
    if lam is not None:
        return float(lam)
    return mix.lam if isinstance(mix, MixtureSpec) else 1.0


def split_energy(mix: MixtureLike, n, lam: float | None = None):
    """Return ``(f_convex, f_concave)``; their sum is the bulk energy density."""
    lam = _lam(mix, lam)
    terms = f_bulk_terms(mix, n)
    aux = f_auxiliary(mix, n)
    return terms.ideal + terms.repulsion + lam * aux, terms.attraction - lam * aux


def split_mu(mix: MixtureLike, n, lam: float | None = None):
    """Return ``(mu_convex, mu_concave)``, the gradients of :func:`split_energy`."""
    lam = _lam(mix, lam)
    coef = _coef(mix)
    n = check_state(coef, n, split=True)
    ntot, B, A, an = _invariants(coef, n)
    aux = mu_auxiliary(coef, n)
    convex = _mu_ideal(coef, n) + _mu_repulsion(coef, n, ntot, B) + lam * aux
    concave = _mu_attraction(coef, n, B, A, an) - lam * aux
    return convex, concave


def hessian_convex(mix: MixtureLike, n, lam: float | None = None) -> np.ndarray:
    """Hessian of the convex part, shape ``(M, M, ...)`` (J m^3/mol^2)."""
    lam = _lam(mix, lam)
    coef = _coef(mix)
    n = check_state(coef, n, split=True)
    RT = coef.RT
    m = n.shape[0]
    ntot = n.sum(axis=0)
    B = np.tensordot(coef.b_i, n, axes=1)
    b = coef.b_i
    bsum = (b[:, None] + b[None, :]).reshape((m, m) + (1,) * (n.ndim - 1))
    bb = np.outer(b, b).reshape((m, m) + (1,) * (n.ndim - 1))
    H = RT * (bsum / (1.0 - B) + ntot * bb / (1.0 - B) ** 2)
    diag = RT / n + lam * hessian_auxiliary(coef, n)
    idx = np.arange(m)
    H[idx, idx] += diag
    return H


def influence_params(mix: MixtureSpec) -> np.ndarray:
    """Pure-component influence parameters ``c_i`` (J m^5/mol^2)."""
    coef = mix.coefficients
    omega = np.array([c.omega for c in mix.components])
    Tr = mix.T / np.array([c.Tc for c in mix.components])
    alpha = -1e-16 / (1.2326 + 1.3757 * omega)
    beta = 1e-16 / (0.9051 + 1.5410 * omega)
    return coef.a_i * coef.b_i ** (2.0 / 3.0) * (alpha * (1.0 - Tr) + beta)


def influence_matrix(mix: MixtureSpec) -> np.ndarray:
    """Cross influence parameters ``c_ij = (1 - beta_ij) sqrt(c_i c_j)``."""
    if not mix.T > 0:
        raise EosDomainError(f"temperature must be positive, got {mix.T}")
    c = influence_params(mix)
    if np.any(c < 0):
        bad = [mix.names[i] for i in np.flatnonzero(c < 0)]
        raise EosDomainError(f"negative pure influence parameter for {bad} at T={mix.T}")
    return (1.0 - mix.beta) * np.sqrt(np.outer(c, c))


def mass_density(mix, n):
    """``rho = sum_i n_i Mw_i`` in kg/m^3; ``mix`` may also be a molar-weight vector."""
    if isinstance(mix, MixtureSpec):
        Mw = mix.Mw
    elif isinstance(mix, EosCoefficients):
        Mw = mix.Mw
    else:
        Mw = np.asarray(mix, dtype=float)
    return np.tensordot(Mw, np.asarray(n, dtype=float), axes=1)
