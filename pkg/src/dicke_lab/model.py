"""Parameter space, parity-resolved Fock x matter bases and Hamiltonian assembly.

Basis states are |nu_a, nu_b> (x) |n1, n2, n3>, where nu_a, nu_b are the photon
numbers of the two active modes (ordered as ``AtomicConfig.pairs``) and the
matter part lives in the totally symmetric irrep of U(3), realised with three
Schwinger bosons (A_jk -> b_j^dag b_k).

Levels and pairs are labelled 1-based, as (1, 3) for the 1<->3 transition.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class AtomicConfig(enum.Enum):
    XI = "Xi"
    LAMBDA = "Lambda"
    V = "V"

    @property
    def pairs(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return _PAIRS[self]

    @classmethod
    def parse(cls, name: str) -> "AtomicConfig":
        key = name.strip().lower()
        for cfg in cls:
            if cfg.value.lower() == key or cfg.name.lower() == key:
                return cfg
        raise ValueError(f"unknown atomic configuration {name!r}")


_PAIRS = {
    AtomicConfig.XI: ((1, 2), (2, 3)),
    AtomicConfig.LAMBDA: ((1, 3), (2, 3)),
    AtomicConfig.V: ((1, 2), (1, 3)),
}

# K_s = P[s] . (nu_a, nu_b) + Q[s] . (n1, n2, n3). Every RWA term conserves both.
_K_PHOTON = {
    AtomicConfig.XI: np.array([[1, 1], [0, 1]]),
    AtomicConfig.LAMBDA: np.array([[1, 1], [0, 1]]),
    AtomicConfig.V: np.array([[1, 0], [0, 1]]),
}
_K_MATTER = {
    AtomicConfig.XI: np.array([[0, 1, 2], [0, 0, 1]]),
    AtomicConfig.LAMBDA: np.array([[0, 0, 1], [1, 0, 1]]),
    AtomicConfig.V: np.array([[0, 1, 0], [0, 0, 1]]),
}


def active_pairs(config: AtomicConfig) -> list[tuple[int, int]]:
    return list(config.pairs)


def k_operator_coefficients(config: AtomicConfig) -> tuple[np.ndarray, np.ndarray]:
    """Integer coefficient tables (photon part 2x2, matter part 2x3) of K1, K2."""
    return _K_PHOTON[config].copy(), _K_MATTER[config].copy()


def critical_coupling(Omega_jk: float, omega_j: float, omega_k: float) -> float:
    """Two-level critical coupling mu_c = sqrt(Omega (omega_k - omega_j)) / 2."""
    if omega_k == omega_j:
        raise ValueError("no two-level critical coupling for degenerate levels")
    if Omega_jk <= 0 or omega_k < omega_j:
        raise ValueError("critical coupling needs Omega > 0 and omega_k > omega_j")
    return 0.5 * math.sqrt(Omega_jk * (omega_k - omega_j))


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters; couplings are stored dimensionlessly as x = mu / mu_c.

    ``Omega`` and ``x`` are ordered like ``config.pairs``.
    """

    config: AtomicConfig
    omega2: float
    Omega: tuple[float, float]
    x: tuple[float, float] = (0.0, 0.0)
    Na: int = 1

    def __post_init__(self):
        object.__setattr__(self, "Omega", tuple(float(v) for v in self.Omega))
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if len(self.Omega) != 2 or len(self.x) != 2:
            raise ValueError("Omega and x need one entry per active pair")
        if not 0.0 <= self.omega2 <= 1.0:
            raise ValueError("omega2 must lie in [omega1, omega3] = [0, 1]")
        if any(v <= 0 for v in self.Omega):
            raise ValueError("mode frequencies must be positive")
        if any(v < 0 for v in self.x):
            raise ValueError("couplings must be non-negative")
        if int(self.Na) != self.Na or self.Na < 1:
            raise ValueError("Na must be a positive integer")
        object.__setattr__(self, "Na", int(self.Na))
        for pair in self.pairs:
            j, k = pair
            critical_coupling(1.0, self.omega[j - 1], self.omega[k - 1])

    @property
    def omega(self) -> tuple[float, float, float]:
        return (0.0, float(self.omega2), 1.0)

    @property
    def pairs(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return self.config.pairs

    @property
    def mu_c(self) -> tuple[float, float]:
        w = self.omega
        return tuple(
            critical_coupling(Om, w[j - 1], w[k - 1]) for Om, (j, k) in zip(self.Omega, self.pairs)
        )

    @property
    def mu(self) -> tuple[float, float]:
        return tuple(xi * mc for xi, mc in zip(self.x, self.mu_c))

    def with_x(self, x) -> "ModelParams":
        return replace(self, x=tuple(x))

    def with_Na(self, Na: int) -> "ModelParams":
        return replace(self, Na=Na)

    def to_dict(self) -> dict:
        return {
            "config": self.config.value,
            "omega2": self.omega2,
            "Omega": list(self.Omega),
            "x": list(self.x),
            "Na": self.Na,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(
            config=AtomicConfig.parse(d["config"]),
            omega2=float(d["omega2"]),
            Omega=tuple(d["Omega"]),
            x=tuple(d.get("x", (0.0, 0.0))),
            Na=int(d.get("Na", 1)),
        )


# Named presets. "*-fig3" are the resonant single-atom sets, "*-fig2" the
# variational ones (only omega2 is fixed there; modes taken resonant).
PRESETS = {
    "xi-fig3": dict(config=AtomicConfig.XI, omega2=0.25, Omega=(0.25, 0.75)),
    "lambda-fig3": dict(config=AtomicConfig.LAMBDA, omega2=0.1, Omega=(1.0, 0.9)),
    "v-fig3": dict(config=AtomicConfig.V, omega2=0.8, Omega=(0.8, 1.0)),
    "xi-fig2": dict(config=AtomicConfig.XI, omega2=1 / 3, Omega=(1 / 3, 2 / 3)),
    "lambda-fig2": dict(config=AtomicConfig.LAMBDA, omega2=0.1, Omega=(1.0, 0.9)),
    "v-fig2": dict(config=AtomicConfig.V, omega2=0.8, Omega=(0.8, 1.0)),
}


def preset(name: str, x=(0.0, 0.0), Na: int = 1) -> ModelParams:
    try:
        kw = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    return ModelParams(x=tuple(x), Na=Na, **kw)


@dataclass(frozen=True)
class BasisState:
    nu: tuple[int, int]
    n: tuple[int, int, int]


@dataclass(frozen=True)
class ParitySector:
    p1: int  # 0 even, 1 odd
    p2: int

    def __post_init__(self):
        if self.p1 not in (0, 1) or self.p2 not in (0, 1):
            raise ValueError("parities are 0 (even) or 1 (odd)")

    @property
    def label(self) -> str:
        return "eo"[self.p1] + "eo"[self.p2]

    @classmethod
    def parse(cls, label: str) -> "ParitySector":
        if len(label) != 2 or any(c not in "eo" for c in label):
            raise ValueError(f"bad sector label {label!r}")
        return cls("eo".index(label[0]), "eo".index(label[1]))

    def __str__(self):
        return self.label


SECTORS = tuple(ParitySector(a, b) for a in (0, 1) for b in (0, 1))


def constants_of_motion(config: AtomicConfig, state: BasisState) -> tuple[int, int]:
    P, Q = _K_PHOTON[config], _K_MATTER[config]
    k = P @ np.asarray(state.nu) + Q @ np.asarray(state.n)
    return int(k[0]), int(k[1])


def parity_sector(k1: int, k2: int) -> ParitySector:
    return ParitySector(k1 % 2, k2 % 2)


def matter_states(Na: int) -> np.ndarray:
    """All (n1, n2, n3) with n1+n2+n3 = Na, ordered by (n1, n3)."""
    rows = [(n1, Na - n1 - n3, n3) for n1 in range(Na + 1) for n3 in range(Na + 1 - n1)]
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def matter_ladder_element(n, j: int, k: int) -> tuple[tuple[int, int, int], float]:
    """Action of A_jk = b_j^dag b_k on |n1, n2, n3>; amplitude 0 annihilates."""
    if j == k:
        raise ValueError("ladder element needs j != k")
    n = list(n)
    if n[k - 1] == 0:
        return tuple(n), 0.0
    amp = math.sqrt((n[j - 1] + 1) * n[k - 1])
    n[k - 1] -= 1
    n[j - 1] += 1
    return tuple(n), amp


class SectorBasis:
    """Truncated basis: states with K1 <= k1max, K2 <= k2max and given K parities.

    ``sector=None`` gives the union over all four sectors (used for mixed-sector
    checks). Order is lexicographic in (k1, k2, n1, n3).
    """

    def __init__(self, params: ModelParams, sector: ParitySector | None, kcaps: tuple[int, int]):
        k1max, k2max = (int(c) for c in kcaps)
        if k1max < 0 or k2max < 0:
            raise ValueError("truncation caps must be non-negative")
        self.params = params
        self.sector = sector
        self.kcaps = (k1max, k2max)
        config = params.config
        P, Q = _K_PHOTON[config], _K_MATTER[config]
        Pinv = np.array([[P[1, 1], -P[0, 1]], [-P[1, 0], P[0, 0]]])  # det P = 1
        step = 1 if sector is None else 2
        k1s = np.arange(0 if sector is None else sector.p1, k1max + 1, step)
        k2s = np.arange(0 if sector is None else sector.p2, k2max + 1, step)
        mats = matter_states(params.Na)
        K1, K2, M = np.meshgrid(k1s, k2s, np.arange(len(mats)), indexing="ij")
        K = np.stack([K1.ravel(), K2.ravel()], axis=1)
        n = mats[M.ravel()]
        nu = (K - n @ Q.T) @ Pinv.T
        keep = np.all(nu >= 0, axis=1)
        self.k = K[keep]
        self.nu = nu[keep]
        self.n = n[keep]
        self._photon_bound = int(self.nu.max()) + 2 if len(self.nu) else 2

    def __len__(self):
        return len(self.nu)

    @property
    def dim(self) -> int:
        return len(self.nu)

    @cached_property
    def states(self) -> list[BasisState]:
        return [
            BasisState((int(a), int(b)), (int(c), int(d), int(e)))
            for (a, b), (c, d, e) in zip(self.nu, self.n)
        ]

    @cached_property
    def index(self) -> dict[BasisState, int]:
        return {s: i for i, s in enumerate(self.states)}

    def encode(self, nu: np.ndarray, n: np.ndarray) -> np.ndarray:
        """Integer key for (nu, n) rows; injective for nu below a fixed bound."""
        B = 1 << 20
        Na1 = self.params.Na + 1
        return ((nu[:, 0] * B + nu[:, 1]) * Na1 + n[:, 0]) * Na1 + n[:, 2]

    @cached_property
    def _sorted_keys(self):
        keys = self.encode(self.nu, self.n)
        order = np.argsort(keys, kind="stable")
        return keys[order], order

    def lookup(self, nu: np.ndarray, n: np.ndarray) -> np.ndarray:
        """Positions of (nu, n) rows in this basis, -1 where absent."""
        keys, order = self._sorted_keys
        q = self.encode(nu, n)
        pos = np.searchsorted(keys, q)
        pos = np.minimum(pos, len(keys) - 1)
        hit = (len(keys) > 0) & (keys[pos] == q) if len(keys) else np.zeros(len(q), bool)
        out = np.full(len(q), -1, dtype=np.int64)
        out[hit] = order[pos[hit]]
        return out

    @cached_property
    def _terms(self) -> dict:
        """Sparse building blocks: diagonal H_D and raising terms per pair."""
        return _assemble_terms(self)

    def __repr__(self):
        label = "all" if self.sector is None else self.sector.label
        return f"SectorBasis({self.params.config.value}, {label}, kcaps={self.kcaps}, dim={self.dim})"


def enumerate_sector_basis(params: ModelParams, sector: ParitySector | None, kcaps) -> SectorBasis:
    return SectorBasis(params, sector, kcaps)


def _assemble_terms(basis: SectorBasis) -> dict:
    params = basis.params
    N = basis.dim
    diag = basis.nu @ np.asarray(params.Omega) + basis.n @ np.asarray(params.omega)
    out = {"diag": diag, "rwa": [], "counter": []}
    for slot, (j, k) in enumerate(params.pairs):
        jj, kk = j - 1, k - 1
        # A_kj raises one atom j -> k
        n_src = basis.n
        ok = n_src[:, jj] > 0
        m_amp = np.sqrt(n_src[:, jj] * (n_src[:, kk] + 1.0))
        n_new = n_src.copy()
        n_new[:, jj] -= 1
        n_new[:, kk] += 1
        for name, dnu in (("rwa", -1), ("counter", +1)):
            nu_new = basis.nu.copy()
            nu_new[:, slot] += dnu
            valid = ok & (nu_new[:, slot] >= 0)
            if dnu < 0:
                p_amp = np.sqrt(basis.nu[:, slot].astype(float))
            else:
                p_amp = np.sqrt(basis.nu[:, slot] + 1.0)
            src = np.nonzero(valid)[0]
            dst = basis.lookup(nu_new[src], n_new[src])
            hit = dst >= 0
            src, dst = src[hit], dst[hit]
            amp = m_amp[src] * p_amp[src]
            # out-of-truncation targets are dropped
            T = sp.csr_matrix((amp, (dst, src)), shape=(N, N))
            out[name].append(T)
    return out


@dataclass(frozen=True)
class HamiltonianMatrix:
    matrix: sp.csr_matrix
    rwa: bool = False

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def interaction_blocks(basis: SectorBasis, rwa: bool = False) -> list[sp.csr_matrix]:
    """Per-pair interaction -(1/sqrt(Na)) (A_jk + A_kj)(a + a^dag) for unit mu."""
    terms = basis._terms
    scale = -1.0 / math.sqrt(basis.params.Na)
    blocks = []
    for slot in range(2):
        T = terms["rwa"][slot]
        if not rwa:
            T = T + terms["counter"][slot]
        blocks.append((scale * (T + T.T)).tocsr())
    return blocks


def build_hamiltonian(params: ModelParams, basis: SectorBasis, rwa: bool = False) -> HamiltonianMatrix:
    """Hamiltonian over ``basis`` at the couplings of ``params``.

    ``basis`` may have been enumerated with different couplings; only the
    frequencies and Na have to agree.
    """
    if basis.dim == 0:
        raise ValueError("cannot build a Hamiltonian on an empty basis")
    _check_compatible(params, basis.params)
    H = sp.diags(basis._terms["diag"]).tocsr()
    for mu, V in zip(params.mu, interaction_blocks(basis, rwa)):
        if mu != 0.0:
            H = H + mu * V
    return HamiltonianMatrix(H.tocsr(), rwa=rwa)


def _check_compatible(a: ModelParams, b: ModelParams):
    if (a.config, a.omega2, a.Omega, a.Na) != (b.config, b.omega2, b.Omega, b.Na):
        raise ValueError("basis was built for different model parameters")


def k_diagonal(basis: SectorBasis, which: int, drop_matter: tuple[int, ...] = ()) -> np.ndarray:
    """Diagonal of K_which over the basis; ``drop_matter`` removes A_ll terms (negative controls)."""
    P, Q = _K_PHOTON[basis.params.config], _K_MATTER[basis.params.config]
    q = Q[which - 1].copy()
    for level in drop_matter:
        q[level - 1] = 0
    return basis.nu @ P[which - 1] + basis.n @ q


def commutator_norm(
    params: ModelParams, basis: SectorBasis, which: int, drop_matter: tuple[int, ...] = ()
) -> float:
    """Max-norm of [K_which, H_RWA] on ``basis``."""
    H = build_hamiltonian(params, basis, rwa=True).matrix.tocoo()
    K = k_diagonal(basis, which, drop_matter).astype(float)
    vals = (K[H.row] - K[H.col]) * H.data
    return float(np.abs(vals).max()) if len(vals) else 0.0
