"""Reduced density matrices of the field modes, Wigner functions and linear entropies.

Quadratures follow q = (a + a^dag)/sqrt(2), p = (a - a^dag)/(i sqrt(2)) with hbar = 1,
so the vacuum Wigner function is exp(-q^2 - p^2)/pi and Tr(rho^2) = 2 pi int W^2.

Mode 1 is the first entry of ``config.pairs`` and mode 2 the second (for Lambda:
nu_1 = nu_13, nu_2 = nu_23).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .solver import GroundState

NORMALIZATION_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class ReducedDensityMatrix:
    subsystem: str  # "mode1", "mode2" or "field"
    rho: np.ndarray
    shape: tuple[int, ...] = ()  # (n1max+1, n2max+1) for the field pair

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def purity(self) -> float:
        return float(np.real(np.vdot(self.rho, self.rho)))

    def mean_occupation(self) -> float:
        if self.subsystem == "field":
            raise ValueError("mean occupation is defined for single modes")
        return float(np.real(np.diag(self.rho)) @ np.arange(self.dim))


@dataclass(frozen=True)
class QuadratureGrid:
    q_min: float = -6.0
    q_max: float = 6.0
    p_min: float = -6.0
    p_max: float = 6.0
    nq: int = 241
    np: int = 241

    def __post_init__(self):
        if self.nq < 2 or self.np < 2 or self.q_max <= self.q_min or self.p_max <= self.p_min:
            raise ValueError("degenerate quadrature grid")

    @property
    def q(self) -> np.ndarray:
        return np.linspace(self.q_min, self.q_max, self.nq)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.np)

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        return QuadratureGrid(
            self.q_min, self.q_max, self.p_min, self.p_max,
            factor * (self.nq - 1) + 1, factor * (self.np - 1) + 1,
        )

    @classmethod
    def covering(cls, rho: np.ndarray, spacing: float = 0.05, floor: float = 1e-16) -> "QuadratureGrid":
        """Square grid wide enough for the populated Fock support of ``rho``, never smaller than the default."""
        pops = np.real(np.diag(rho))
        nz = np.nonzero(pops > floor)[0]
        n_eff = int(nz[-1]) if len(nz) else 0
        half = max(6.0, math.ceil(math.sqrt(2 * n_eff + 1) + 4.0))
        n = int(round(2 * half / spacing)) + 1
        return cls(-half, half, -half, half, n, n)

    def to_dict(self) -> dict:
        return dict(q_min=self.q_min, q_max=self.q_max, p_min=self.p_min, p_max=self.p_max, nq=self.nq, np=self.np)


@dataclass(frozen=True, eq=False)
class WignerField:
    grid: QuadratureGrid
    values: np.ndarray  # indexed [iq, ip]
    mode: str = ""
    normalization_ok: bool = True

    def integral(self) -> float:
        return _integrate(self.grid, self.values)

    def min(self) -> float:
        return float(self.values.min())


@dataclass(frozen=True)
class EntropyTriple:
    S_nu1: float
    S_nu2: float
    S_nu_m: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.S_nu1, self.S_nu2, self.S_nu_m)


def _integrate(grid: QuadratureGrid, values: np.ndarray) -> float:
    return float(np.trapezoid(np.trapezoid(values, grid.p, axis=1), grid.q))


def _slot(gs: GroundState, pair) -> int:
    if pair in (1, 2):
        return pair - 1
    pairs = gs.params.pairs
    if tuple(pair) not in pairs:
        raise ValueError(f"pair {pair} is not active in the {gs.params.config.value} configuration")
    return pairs.index(tuple(pair))


def _coefficient_table(labels: np.ndarray, kept: np.ndarray, coeffs: np.ndarray, n_kept: int) -> np.ndarray:
    """Matrix M[rest, kept] of coefficients; rows enumerate distinct rest labels."""
    _, rest = np.unique(labels, axis=0, return_inverse=True)
    rest = rest.ravel()
    M = np.zeros((rest.max() + 1 if len(rest) else 0, n_kept), dtype=coeffs.dtype)
    M[rest, kept] = coeffs
    return M


def reduce_to_mode(gs: GroundState, pair) -> ReducedDensityMatrix:
    """Partial trace over matter and the other mode; Fock cutoff = largest occupation in the basis."""
    slot = _slot(gs, pair)
    b = gs.basis
    nu = b.nu[:, slot]
    rest = np.column_stack([b.nu[:, 1 - slot], b.n[:, 0], b.n[:, 2]])
    M = _coefficient_table(rest, nu, gs.coeffs, int(nu.max()) + 1)
    rho = M.T @ M.conj()
    return ReducedDensityMatrix(f"mode{slot + 1}", rho)


def _field_table(gs: GroundState):
    b = gs.basis
    d2 = int(b.nu[:, 1].max()) + 1
    shape = (int(b.nu[:, 0].max()) + 1, d2)
    flat = b.nu[:, 0] * d2 + b.nu[:, 1]
    M = _coefficient_table(b.n[:, [0, 2]], flat, gs.coeffs, shape[0] * shape[1])
    return M, shape


def reduce_to_field_pair(gs: GroundState) -> ReducedDensityMatrix:
    """Partial trace over matter; rows/cols indexed by nu1 * (n2max+1) + nu2."""
    M, shape = _field_table(gs)
    return ReducedDensityMatrix("field", M.T @ M.conj(), shape)


def field_pair_purity(gs: GroundState) -> float:
    """Tr(rho_field^2) via the (small) complementary matter reduction."""
    M, _ = _field_table(gs)
    G = M @ M.conj().T
    return float(np.real(np.vdot(G, G)))


def linear_entropies(gs: GroundState) -> EntropyTriple:
    s1 = 1.0 - reduce_to_mode(gs, 1).purity()
    s2 = 1.0 - reduce_to_mode(gs, 2).purity()
    sm = 1.0 - field_pair_purity(gs)
    return EntropyTriple(max(s1, 0.0), max(s2, 0.0), max(sm, 0.0))


def mean_photons(gs: GroundState) -> tuple[float, float]:
    w = np.abs(gs.coeffs) ** 2
    return float(w @ gs.basis.nu[:, 0]), float(w @ gs.basis.nu[:, 1])


def _weyl_offset_terms(k: int, nmax: int, q: np.ndarray, p: np.ndarray, base: np.ndarray | None = None):
    """Yield (n, W_{|n><n+k|}(q, p)) for n = 0..nmax.

    W_{|n><n+k|} = (-1)^n / pi * (sqrt2 (q + i p))^k / sqrt(k!) * exp(-r^2)
                   * sqrt(n! k! / (n+k)!) L_n^k(2 r^2),
    with the normalised Laguerre factor built by upward recurrence. ``base`` may
    carry the precomputed k-dependent prefactor (everything before the Laguerre factor).
    """
    x = 2.0 * (q * q + p * p)
    if base is None:
        base = _offset_prefactors(q, p, k)[-1]
    lag_prev = np.zeros_like(x)
    lag = np.ones_like(x)
    for n in range(nmax + 1):
        yield n, ((-1) ** n / math.pi) * base * lag
        lag_next = ((2 * n + 1 + k - x) * lag - math.sqrt(n * (n + k)) * lag_prev) / math.sqrt((n + 1) * (n + 1 + k))
        lag_prev, lag = lag, lag_next


def _offset_prefactors(q: np.ndarray, p: np.ndarray, kmax: int):
    """exp(-r^2) (sqrt2 (q + i p))^k / sqrt(k!) for k = 0..kmax."""
    base = np.exp(-(q * q + p * p)).astype(complex)
    z = math.sqrt(2.0) * (q + 1j * p)
    out = [base]
    for j in range(1, kmax + 1):
        base = base * z / math.sqrt(j)
        out.append(base)
    return out


def weyl_symbol(n: int, m: int, q, p):
    """Weyl symbol of |n><m| (Wigner transform, hbar = 1)."""
    if n < 0 or m < 0:
        raise ValueError("Fock indices must be non-negative")
    if n > 10**6 or m > 10**6:
        raise OverflowError("Fock index out of range")
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    lo, k = min(n, m), abs(m - n)
    for i, w in _weyl_offset_terms(k, lo, q, p):
        if i == lo:
            val = w
    if n > m:
        val = np.conj(val)
    return val if val.ndim else complex(val)


def wigner_values(rho: np.ndarray, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Complex sum_{n,m} rho_nm W_{|n><m|}(q, p) on broadcast arrays q, p."""
    d = rho.shape[0]
    q, p = np.broadcast_arrays(np.asarray(q, float), np.asarray(p, float))
    W = np.zeros(q.shape, dtype=complex)
    base = np.exp(-(q * q + p * p)).astype(complex)
    z = math.sqrt(2.0) * (q + 1j * p)
    for k in range(d):
        if k:
            base = base * z / math.sqrt(k)
        upper = np.diagonal(rho, k)
        lower = np.diagonal(rho, -k)
        if not (np.any(upper) or np.any(lower)):
            continue
        for n, w in _weyl_offset_terms(k, d - 1 - k, q, p, base):
            W += upper[n] * w
            if k:
                W += lower[n] * np.conj(w)
    return W


def _trim(rho: np.ndarray, floor: float = 1e-30) -> np.ndarray:
    # drop trailing Fock levels with no weight; by positivity their coherences vanish too
    pops = np.real(np.diag(rho))
    nz = np.nonzero(pops > floor)[0]
    d = int(nz[-1]) + 1 if len(nz) else 1
    return rho[:d, :d]


def wigner_field(rdm: ReducedDensityMatrix | np.ndarray, grid: QuadratureGrid | None = None, mode: str = "") -> WignerField:
    if isinstance(rdm, ReducedDensityMatrix):
        if rdm.subsystem == "field":
            raise ValueError("Wigner fields are computed for single-mode reductions")
        mode = mode or rdm.subsystem
        rho = rdm.rho
    else:
        rho = np.asarray(rdm)
    grid = grid or QuadratureGrid()
    Q, P = np.meshgrid(grid.q, grid.p, indexing="ij")
    W = wigner_values(_trim(rho), Q, P)
    resid = float(np.abs(W.imag).max())
    if resid > 1e-10:
        raise ValueError(f"Wigner function has imaginary residue {resid:.3g}; rho is not Hermitian")
    W = W.real
    ok = abs(_integrate(grid, W) - 1.0) <= NORMALIZATION_TOL
    if not ok:
        warnings.warn("Wigner field normalisation off by more than 1e-4; refine or widen the grid")
    return WignerField(grid, W, mode, ok)


def negativity_volume(wf: WignerField) -> float:
    """int |W| dq dp - 1 (trapezoidal)."""
    return max(_integrate(wf.grid, np.abs(wf.values)) - 1.0, 0.0)


def wigner_purity(wf: WignerField) -> float:
    return 2.0 * math.pi * _integrate(wf.grid, wf.values**2)
