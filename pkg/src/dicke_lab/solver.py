"""Lowest eigenpairs per parity sector, the fidelity-controlled truncation loop,
and selection of the global ground state across the four sectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as sla

from .model import (
    SECTORS,
    HamiltonianMatrix,
    ModelParams,
    ParitySector,
    SectorBasis,
    build_hamiltonian,
)

DENSE_MAX = 3000
K_CEILING = 120
DEGENERACY_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """Raised when an eigensolver or the truncation loop fails to converge."""

    def __init__(self, message: str, residual: float | None = None, infidelity: float | None = None):
        super().__init__(message)
        self.residual = residual
        self.infidelity = infidelity


@dataclass(frozen=True)
class TruncationReport:
    kcaps: tuple[int, int]
    dim: int
    infidelity: float
    tol: float
    steps: int = 0
    energies: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class GroundState:
    params: ModelParams
    sector: ParitySector
    basis: SectorBasis
    coeffs: np.ndarray
    energy: float
    truncation: TruncationReport | None = None
    degenerate: bool = False
    sector_energies: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.basis.dim


@lru_cache(maxsize=256)
def cached_basis(params: ModelParams, sector: ParitySector, kcaps: tuple[int, int]) -> SectorBasis:
    """Basis for ``params`` ignoring couplings, so that sweeps reuse assembled terms."""
    return SectorBasis(params.with_x((0.0, 0.0)), sector, kcaps)


def fix_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def sector_ground_state(
    H: HamiltonianMatrix, dense_max: int = DENSE_MAX, residual_tol: float = 1e-10
) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue and its unit eigenvector, with the sign convention applied."""
    n = H.dimension
    if n < 1:
        raise ValueError("empty Hamiltonian")
    if n <= dense_max:
        w, v = la.eigh(H.toarray(), subset_by_index=[0, 0], driver="evr")
        return float(w[0]), fix_sign(v[:, 0])
    return _iterative_ground_state(H.matrix, residual_tol)


def _iterative_ground_state(M, residual_tol: float) -> tuple[float, np.ndarray]:
    n = M.shape[0]
    v0 = np.ones(n) / np.sqrt(n)
    try:
        w, v = sla.eigsh(M, k=1, which="SA", v0=v0, tol=1e-14, maxiter=max(20 * n, 2000))
    except sla.ArpackNoConvergence as exc:
        res = float("nan")
        if len(exc.eigenvalues):
            res = float(np.linalg.norm(M @ exc.eigenvectors[:, 0] - exc.eigenvalues[0] * exc.eigenvectors[:, 0]))
        raise ConvergenceError("iterative eigensolver did not converge", residual=res) from exc
    vec = v[:, 0] / np.linalg.norm(v[:, 0])
    res = float(np.linalg.norm(M @ vec - w[0] * vec))
    if res > residual_tol:
        raise ConvergenceError(f"eigensolver residual {res:.3g} above {residual_tol:.1g}", residual=res)
    return float(w[0]), fix_sign(vec)


def start_caps(params: ModelParams, sector: ParitySector) -> tuple[int, int]:
    """Smallest caps (by k1+k2, then k1) with the sector's parities and a nonempty basis."""
    for s in range(0, 2 * K_CEILING + 2):
        for c1 in range(sector.p1, s + 1, 2):
            c2 = s - c1
            if c2 % 2 != sector.p2:
                continue
            if SectorBasis(params, sector, (c1, c2)).dim:
                return (c1, c2)
    raise ValueError(f"sector {sector} has no states below the cap ceiling")


def overlap(a_basis: SectorBasis, a: np.ndarray, b_basis: SectorBasis, b: np.ndarray) -> float:
    """<a|b> with both vectors embedded in the union basis (missing entries are zero)."""
    if a_basis.dim > b_basis.dim:
        a_basis, a, b_basis, b = b_basis, b, a_basis, a
    idx = b_basis.lookup(a_basis.nu, a_basis.n)
    hit = idx >= 0
    return float(a[hit] @ b[idx[hit]])


def solve_fixed(params: ModelParams, sector: ParitySector, kcaps, dense_max: int = DENSE_MAX) -> GroundState:
    """Sector ground state on a fixed truncation (no convergence check)."""
    basis = cached_basis(params, sector, tuple(kcaps))
    if basis.dim == 0:
        raise ValueError(f"empty basis for sector {sector} at caps {kcaps}")
    H = build_hamiltonian(params, basis)
    e, v = sector_ground_state(H, dense_max)
    return GroundState(params, sector, basis, v, e)


def converged_ground_state(
    params: ModelParams,
    sector: ParitySector,
    tol: float = 1e-10,
    k_max: int = K_CEILING,
    start: tuple[int, int] | None = None,
    dense_max: int = DENSE_MAX,
) -> GroundState:
    """Grow caps by (2, 2) until 1 - |<psi(k)|psi(k+2)>|^2 <= tol."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    caps = start if start is not None else start_caps(params, sector)
    prev = solve_fixed(params, sector, caps, dense_max)
    energies = [prev.energy]
    best = 1.0
    steps = 0
    while max(caps) + 2 <= k_max:
        caps = (caps[0] + 2, caps[1] + 2)
        cur = solve_fixed(params, sector, caps, dense_max)
        energies.append(cur.energy)
        steps += 1
        infid = max(0.0, 1.0 - overlap(prev.basis, prev.coeffs, cur.basis, cur.coeffs) ** 2)
        best = min(best, infid)
        if infid <= tol:
            report = TruncationReport(caps, cur.basis.dim, infid, tol, steps, tuple(energies))
            return GroundState(params, sector, cur.basis, cur.coeffs, cur.energy, report)
        prev = cur
    raise ConvergenceError(
        f"no truncation below k_max={k_max} reaches infidelity {tol:.1g} (best {best:.3g})",
        infidelity=best,
    )


def select_ground(candidates: list[GroundState]) -> GroundState:
    """Lowest-energy candidate; ties (within DEGENERACY_TOL) go to the first in ee, eo, oe, oo order."""
    order = {s: i for i, s in enumerate(SECTORS)}
    cands = sorted(candidates, key=lambda g: order[g.sector])
    energies = {g.sector.label: g.energy for g in cands}
    best = min(cands, key=lambda g: g.energy)
    emin = best.energy
    tied = [g for g in cands if abs(g.energy - emin) < DEGENERACY_TOL]
    chosen = tied[0]
    return GroundState(
        chosen.params,
        chosen.sector,
        chosen.basis,
        chosen.coeffs,
        chosen.energy,
        chosen.truncation,
        degenerate=len(tied) > 1,
        sector_energies=energies,
    )


def global_ground_state(params: ModelParams, tol: float = 1e-10, **kw) -> GroundState:
    return select_ground([converged_ground_state(params, s, tol, **kw) for s in SECTORS])


def global_ground_state_fixed(params: ModelParams, caps: dict, dense_max: int = DENSE_MAX) -> GroundState:
    """Ground state over all sectors with per-sector caps given as {sector: (k1max, k2max)}."""
    return select_ground([solve_fixed(params, s, caps[s], dense_max) for s in SECTORS])


def sufficient_caps(params_list, tol: float = 1e-10, **kw) -> dict:
    """Per-sector caps that converge at every parameter point in ``params_list``.

    Sweeps solve on these fixed truncations; a larger basis can only reduce the
    truncation error, so converging at the extreme points of a region covers it.
    """
    caps = {}
    for s in SECTORS:
        c1 = c2 = None
        for p in params_list:
            k = converged_ground_state(p, s, tol, **kw).truncation.kcaps
            c1 = k[0] if c1 is None else max(c1, k[0])
            c2 = k[1] if c2 is None else max(c2, k[1])
        caps[s] = (c1, c2)
    return caps
