"""Coherent-state mean-field energy surface and its phase diagram.

Trial state |alpha_a> |alpha_b> (x) (sum_j c_j |j>)^{(x) Na}, amplitudes intensive
(alpha = sqrt(Na) * alpha_tilde). Per particle,

    E / Na = sum_p Omega_p |a_p|^2 + sum_j omega_j |c_j|^2
             - sum_p 4 mu_p Re(conj(c_j) c_k) Re(a_p)

with a_p the intensive amplitude of pair p = (j, k). The field amplitudes enter
quadratically, so they are eliminated exactly (a_p = 2 mu_p Re(conj(c_j) c_k) / Omega_p);
on u_j = |c_j|^2 the remaining problem is a quadratic on the 2-simplex, solved by
enumerating its faces.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .model import ModelParams

EPS_ALPHA = 1e-6


@dataclass(frozen=True)
class CoherentParams:
    alpha: tuple[complex, complex]  # intensive field amplitudes, ordered like config.pairs
    c: tuple[complex, complex, complex]

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        if abs(np.linalg.norm(c) - 1.0) > 1e-12:
            raise ValueError("single-atom amplitudes must be normalised")


@dataclass(frozen=True)
class VariationalResult:
    energy_pp: float
    minimizer: CoherentParams
    region: str  # "N", "S13", ... or "mixed"
    multistart_count: int
    converged: bool


def variational_energy(params: ModelParams, cp: CoherentParams) -> float:
    c = np.asarray(cp.c, dtype=complex)
    a = np.asarray(cp.alpha, dtype=complex)
    e = float(np.dot(params.Omega, np.abs(a) ** 2) + np.dot(params.omega, np.abs(c) ** 2))
    for slot, (j, k) in enumerate(params.pairs):
        e -= 4.0 * params.mu[slot] * (np.conj(c[j - 1]) * c[k - 1]).real * a[slot].real
    return e


def region_of(params: ModelParams, alpha, eps: float = EPS_ALPHA) -> str:
    active = [f"S{j}{k}" for (j, k), a in zip(params.pairs, alpha) if abs(a) >= eps]
    if not active:
        return "N"
    return active[0] if len(active) == 1 else "mixed"


def _simplex_energy(params: ModelParams, u: np.ndarray) -> float:
    e = float(np.dot(params.omega, u))
    for slot, (j, k) in enumerate(params.pairs):
        g = 4.0 * params.mu[slot] ** 2 / params.Omega[slot]
        e -= g * u[j - 1] * u[k - 1]
    return e


def _quadratic_form(params: ModelParams):
    """(w, Q) with E(u) = w.u + u^T Q u."""
    w = np.asarray(params.omega, dtype=float)
    Q = np.zeros((3, 3))
    for slot, (j, k) in enumerate(params.pairs):
        g = 4.0 * params.mu[slot] ** 2 / params.Omega[slot]
        Q[j - 1, k - 1] -= g / 2
        Q[k - 1, j - 1] -= g / 2
    return w, Q


def _simplex_candidates(params: ModelParams) -> list[np.ndarray]:
    """Stationary points of E restricted to every face of the simplex."""
    w, Q = _quadratic_form(params)
    out = []
    for size in (1, 2, 3):
        for face in itertools.combinations(range(3), size):
            f = list(face)
            # minimise w_f.u + u^T Q_ff u subject to sum u = 1 (KKT linear system)
            A = np.zeros((size + 1, size + 1))
            A[:size, :size] = 2 * Q[np.ix_(f, f)]
            A[:size, size] = 1.0
            A[size, :size] = 1.0
            rhs = np.concatenate([-w[f], [1.0]])
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            uf = sol[:size]
            if np.all(uf >= -1e-14):
                u = np.zeros(3)
                u[f] = np.clip(uf, 0.0, None)
                out.append(u / u.sum())
    return out


def coherent_from_simplex(params: ModelParams, u: np.ndarray) -> CoherentParams:
    c = np.sqrt(np.clip(u, 0.0, None))
    c = c / np.linalg.norm(c)
    alpha = tuple(
        complex(2.0 * params.mu[slot] * c[j - 1] * c[k - 1] / params.Omega[slot])
        for slot, (j, k) in enumerate(params.pairs)
    )
    return CoherentParams(alpha, tuple(complex(v) for v in c))


def minimize_variational(params: ModelParams, eps_alpha: float = EPS_ALPHA) -> VariationalResult:
    """Global minimum of the mean-field energy by exact enumeration of simplex faces."""
    cands = _simplex_candidates(params)
    energies = np.array([_simplex_energy(params, u) for u in cands])
    order = np.argsort(energies, kind="stable")
    best = cands[order[0]]
    cp = coherent_from_simplex(params, best)
    e = variational_energy(params, cp)
    return VariationalResult(e, cp, region_of(params, cp.alpha, eps_alpha), len(cands), True)


def _unpack(theta: np.ndarray) -> CoherentParams:
    # theta = (Re a1, Im a1, Re a2, Im a2, polar, azimuth, phase2, phase3)
    a = (complex(theta[0], theta[1]), complex(theta[2], theta[3]))
    t, f = theta[4], theta[5]
    mags = np.array([math.cos(t), math.sin(t) * math.cos(f), math.sin(t) * math.sin(f)])
    c = mags * np.exp(1j * np.array([0.0, theta[6], theta[7]]))
    c = c / np.linalg.norm(c)
    return CoherentParams(a, tuple(complex(v) for v in c))


def minimize_variational_multistart(params: ModelParams, n_starts: int = 32, seed: int = 0) -> VariationalResult:
    """Independent route: derivative-free local searches over all trial parameters."""
    rng = np.random.default_rng(seed)
    corners = [(0.0, 0.0), (math.pi / 2, 0.0), (math.pi / 2, math.pi / 2)]
    seeds = []
    for t, f in corners:
        for s in (0.0, 1.0, -1.0):
            a = [s * xi for xi in params.x]
            seeds.append([a[0], 0.0, a[1], 0.0, t, f, 0.0, 0.0])
    while len(seeds) < n_starts:
        seeds.append(
            [*rng.normal(0, 1 + max(params.x), 4), rng.uniform(0, math.pi), rng.uniform(0, math.pi), 0.0, 0.0]
        )

    def fun(th):
        return variational_energy(params, _unpack(th))

    results = []
    for s in seeds[:n_starts]:
        r = minimize(fun, np.asarray(s, float), method="Powell", options=dict(xtol=1e-10, ftol=1e-14, maxfev=40000))
        r = minimize(fun, r.x, method="Nelder-Mead", options=dict(xatol=1e-11, fatol=1e-15, maxfev=40000))
        results.append((float(r.fun), r.x))
    results.sort(key=lambda t: t[0])
    cp = _unpack(results[0][1])
    converged = len(results) > 1 and abs(results[0][0] - results[1][0]) <= 1e-8
    return VariationalResult(results[0][0], cp, region_of(params, cp.alpha), len(results), converged)


@dataclass(frozen=True)
class Transition:
    location: tuple[float, float]
    s: float  # arc-length position along the path
    order: int
    left: str
    right: str


def _path_energy(template: ModelParams, x) -> tuple[float, str]:
    r = minimize_variational(template.with_x(x))
    return r.energy_pp, r.region


def transition_order_along_path(template: ModelParams, path) -> list[Transition]:
    """Ehrenfest order of each transition crossed by a polyline in the coupling plane.

    Transitions are bracketed where the region label changes between neighbouring
    path points, located by bisection, and ordered by comparing one-sided
    derivatives of the minimised energy; thresholds scale with the path step.
    """
    pts = np.asarray(path, dtype=float)
    if len(pts) < 5:
        raise ValueError("path needs at least 5 points")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s_nodes = np.concatenate([[0.0], np.cumsum(seg)])
    step = float(np.median(seg))

    def point_at(s):
        i = int(np.clip(np.searchsorted(s_nodes, s) - 1, 0, len(seg) - 1))
        t = (s - s_nodes[i]) / seg[i] if seg[i] > 0 else 0.0
        return pts[i] + t * (pts[i + 1] - pts[i])

    labels = [_path_energy(template, p)[1] for p in pts]
    out = []
    eta = step * 1e-2
    for i in range(len(pts) - 1):
        if labels[i] == labels[i + 1]:
            continue
        lo, hi = s_nodes[i], s_nodes[i + 1]
        left = labels[i]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _path_energy(template, point_at(mid))[1] == left:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-13:
                break
        s_star = 0.5 * (lo + hi)
        # one-sided quadratic fits of E(s) on either side of s_star
        hs = eta * np.array([1.0, 2.0, 3.0])
        eL = np.array([_path_energy(template, point_at(s_star - h))[0] for h in hs])
        eR = np.array([_path_energy(template, point_at(s_star + h))[0] for h in hs])
        e0 = _path_energy(template, point_at(s_star))[0]
        cl = np.polyfit(np.concatenate([[0.0], -hs]), np.concatenate([[e0], eL]), 2)
        cr = np.polyfit(np.concatenate([[0.0], hs]), np.concatenate([[e0], eR]), 2)
        d1 = abs(cl[1] - cr[1])
        d2 = abs(2 * cl[0] - 2 * cr[0])
        curv = max(1.0, abs(2 * cl[0]), abs(2 * cr[0]))
        if d1 > 50 * eta * curv:
            order = 1
        elif d2 > 1e-2 * curv:
            order = 2
        else:
            continue
        loc = point_at(s_star)
        out.append(Transition((float(loc[0]), float(loc[1])), float(s_star), order, left, labels[i + 1]))
    return out
