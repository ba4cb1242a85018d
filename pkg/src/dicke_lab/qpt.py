"""Fidelity between neighbouring ground states, minimum-fidelity separatrices in the
coupling plane and their classification by finite-size scaling in Na."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.ndimage import label as connected_components

from .model import ModelParams
from .solver import (
    DENSE_MAX,
    ConvergenceError,
    GroundState,
    global_ground_state,
    global_ground_state_fixed,
    overlap,
    solve_fixed,
    sufficient_caps,
)
from .io import write_csv

EPS_F = 1e-8
NOISE_TOL = 1e-12

DIRECTIONS = {
    "axis1": (1.0, 0.0),
    "axis2": (0.0, 1.0),
    "identity": (math.sqrt(0.5), math.sqrt(0.5)),
    "anti": (math.sqrt(0.5), -math.sqrt(0.5)),
}
# grid-index offsets of the neighbours along each direction family
_GRID_STEPS = {"axis1": (1, 0), "axis2": (0, 1), "identity": (1, 1), "anti": (1, -1)}


class TransitionType(enum.Enum):
    DISCONTINUOUS = "Discontinuous"
    STABLE = "StableContinuous"
    UNSTABLE = "UnstableContinuous"
    UNCLASSIFIED = "UnclassifiedContinuous"


def _check_compatible(a: GroundState, b: GroundState) -> None:
    pa, pb = a.params, b.params
    if pa.Na != pb.Na or pa.config != pb.config:
        raise ValueError("fidelity needs states with the same configuration and Na")
    if pa.omega2 != pb.omega2 or pa.Omega != pb.Omega:
        raise ValueError("fidelity needs states that differ only in the couplings")


def fidelity(a: GroundState, b: GroundState) -> float:
    """|<a|b>|^2 on the union basis; states from different parity sectors are orthogonal."""
    _check_compatible(a, b)
    if a.sector != b.sector:
        return 0.0
    if a is b:
        return 1.0
    return float(min(1.0, overlap(a.basis, a.coeffs, b.basis, b.coeffs) ** 2))


def bures_distance(a: GroundState, b: GroundState) -> float:
    f = fidelity(a, b)
    return math.sqrt(max(0.0, 2.0 * (1.0 - math.sqrt(f))))


@dataclass(frozen=True)
class ParamPoint:
    x: tuple[float, float]  # couplings ordered like config.pairs

    def __post_init__(self):
        if len(self.x) != 2 or min(self.x) < 0:
            raise ValueError("coupling point needs two non-negative entries")

    def shifted(self, direction, step: float) -> "ParamPoint":
        return ParamPoint((max(0.0, self.x[0] + step * direction[0]), max(0.0, self.x[1] + step * direction[1])))


class GroundStateSolver:
    """Memoised global ground states for one template.

    With ``caps`` the solves use that fixed truncation per sector; otherwise each
    point runs the convergence loop at ``tol``.
    """

    def __init__(self, template: ModelParams, tol: float = 1e-10, caps: dict | None = None, dense_max: int = DENSE_MAX):
        self.template = template
        self.tol = tol
        self.caps = caps
        self.dense_max = dense_max
        self._cache: dict = {}

    @classmethod
    def for_region(cls, template: ModelParams, corners, tol: float = 1e-10, dense_max: int = DENSE_MAX):
        """Fixed caps that converge at every corner of the region."""
        pts = [template.with_x(tuple(c)) for c in corners]
        return cls(template, tol, sufficient_caps(pts, tol, dense_max=dense_max), dense_max)

    def spec(self) -> tuple:
        return (self.template, self.tol, self.caps, self.dense_max)

    def __call__(self, x) -> GroundState:
        x = ParamPoint(tuple(float(v) for v in (x.x if isinstance(x, ParamPoint) else x))).x
        gs = self._cache.get(x)
        if gs is None:
            params = self.template.with_x(x)
            if self.caps is not None:
                gs = global_ground_state_fixed(params, self.caps, self.dense_max)
            else:
                gs = global_ground_state(params, self.tol, dense_max=self.dense_max)
            self._cache[x] = gs
        return gs

    def pair_fidelity(self, x, y) -> tuple[float, GroundState, GroundState]:
        a, b = self(x), self(y)
        if self.caps is None and a.sector == b.sector and a.truncation and b.truncation:
            if a.truncation.kcaps != b.truncation.kcaps:
                # put both states on the larger truncation before comparing
                big = tuple(max(u, v) for u, v in zip(a.truncation.kcaps, b.truncation.kcaps))
                a = solve_fixed(a.params, a.sector, big, self.dense_max)
                b = solve_fixed(b.params, b.sector, big, self.dense_max)
        return fidelity(a, b), a, b


@dataclass(frozen=True, eq=False)
class FidelityProfile:
    trajectory: tuple[ParamPoint, ...]
    delta: float
    F: np.ndarray
    sectors: tuple
    minima: tuple[int, ...] = ()  # indices i into F that are strict local minima
    degenerate: tuple[bool, ...] = ()

    def __post_init__(self):
        if len(self.F) != max(0, len(self.trajectory) - 1):
            raise ValueError("profile needs one fidelity per consecutive pair")

    def zero_events(self, eps: float = EPS_F) -> list[int]:
        return [i for i, f in enumerate(self.F) if f < eps]

    def sector_flips(self) -> list[int]:
        return [i for i in range(len(self.sectors) - 1) if self.sectors[i] != self.sectors[i + 1]]


def _strict_minima(F: np.ndarray, noise: float = NOISE_TOL) -> tuple[int, ...]:
    return tuple(i for i in range(1, len(F) - 1) if F[i] < F[i - 1] - noise and F[i] < F[i + 1] - noise)


def fidelity_profile(
    template: ModelParams,
    trajectory,
    delta: float,
    tol: float = 1e-10,
    solver: GroundStateSolver | None = None,
) -> FidelityProfile:
    pts = tuple(p if isinstance(p, ParamPoint) else ParamPoint(tuple(p)) for p in trajectory)
    for a, b in zip(pts, pts[1:]):
        step = math.dist(a.x, b.x)
        if abs(step - delta) > 1e-9 * max(1.0, delta):
            raise ValueError(f"trajectory step {step:.6g} differs from delta {delta:.6g}")
    solver = solver or GroundStateSolver(template, tol)
    states = [solver(p) for p in pts]
    F = np.array([fidelity(a, b) for a, b in zip(states, states[1:])])
    return FidelityProfile(
        pts,
        delta,
        F,
        tuple(s.sector for s in states),
        _strict_minima(F),
        tuple(s.degenerate for s in states),
    )


def line_trajectory(start, direction, delta: float, n_steps: int) -> list[ParamPoint]:
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    s = np.asarray(start, float)
    return [ParamPoint(tuple(s + i * delta * d)) for i in range(n_steps + 1)]


@dataclass(frozen=True)
class SeparatrixPoint:
    location: ParamPoint
    direction: tuple[float, float]
    F_min: float
    type: TransitionType
    sector_change: bool
    family: str = ""
    sector: str = ""  # ground sector at the node
    degenerate: bool = False

    def __post_init__(self):
        if self.type is TransitionType.DISCONTINUOUS and not (self.F_min < EPS_F and self.sector_change):
            raise ValueError("a discontinuous point needs zero fidelity and a sector change")


@dataclass(frozen=True, eq=False)
class FidelityField:
    """Fidelity between each node and its shift by delta along every direction family."""

    xs: np.ndarray
    ys: np.ndarray
    delta: float
    F: dict  # family -> array [i, j]
    flip: dict  # family -> bool array [i, j]
    sectors: np.ndarray  # labels [i, j]
    degenerate: np.ndarray


def _fidelity_row(args):
    spec, i, xs, ys, delta = args
    solver = GroundStateSolver(*spec)
    n = len(ys)
    F = {f: np.empty(n) for f in DIRECTIONS}
    flip = {f: np.zeros(n, bool) for f in DIRECTIONS}
    sectors, degen = [], []
    for j in range(n):
        node = ParamPoint((xs[i], ys[j]))
        g = solver(node)
        sectors.append(g.sector.label)
        degen.append(g.degenerate)
        for fam, d in DIRECTIONS.items():
            f, a, b = solver.pair_fidelity(node, node.shifted(d, delta))
            F[fam][j] = f
            flip[fam][j] = a.sector != b.sector
    return i, F, flip, sectors, degen


def fidelity_field(solver: GroundStateSolver, xs, ys, delta: float, workers: int = 1) -> FidelityField:
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    jobs = [(solver.spec(), i, xs, ys, delta) for i in range(len(xs))]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_fidelity_row, jobs))
    else:
        rows = [_fidelity_row(j) for j in jobs]
    rows.sort(key=lambda r: r[0])
    F = {f: np.vstack([r[1][f] for r in rows]) for f in DIRECTIONS}
    flip = {f: np.vstack([r[2][f] for r in rows]) for f in DIRECTIONS}
    sectors = np.array([r[3] for r in rows])
    degen = np.array([r[4] for r in rows])
    return FidelityField(xs, ys, delta, F, flip, sectors, degen)


def separatrix_from_field(ff: FidelityField, eps_F: float = EPS_F, noise: float = NOISE_TOL) -> list[SeparatrixPoint]:
    """Nodes whose fidelity is a strict local minimum along at least one direction family."""
    nx, ny = len(ff.xs), len(ff.ys)
    out = []
    for i in range(nx):
        for j in range(ny):
            best = None
            for fam, (di, dj) in _GRID_STEPS.items():
                lo, hi = (i - di, j - dj), (i + di, j + dj)
                if not all(0 <= a < nx and 0 <= b < ny for a, b in (lo, hi)):
                    continue
                Fg = ff.F[fam]
                f = Fg[i, j]
                if f < Fg[lo] - noise and f < Fg[hi] - noise and (best is None or f < best[1]):
                    best = (fam, f)
            if best is None:
                continue
            fam, f = best
            change = bool(ff.flip[fam][i, j])
            kind = TransitionType.DISCONTINUOUS if (f < eps_F and change) else TransitionType.UNCLASSIFIED
            out.append(
                SeparatrixPoint(
                    ParamPoint((float(ff.xs[i]), float(ff.ys[j]))),
                    DIRECTIONS[fam],
                    float(f),
                    kind,
                    change,
                    fam,
                    str(ff.sectors[i, j]),
                    bool(ff.degenerate[i, j]),
                )
            )
    return out


def minimum_fidelity_surface(
    template: ModelParams,
    grid,
    delta: float = 0.01,
    tol: float = 1e-10,
    solver: GroundStateSolver | None = None,
    workers: int = 1,
    eps_F: float = EPS_F,
) -> list[SeparatrixPoint]:
    """Separatrix points on a rectangular grid given as (xs, ys)."""
    xs, ys = (np.asarray(g, float) for g in grid)
    spacing = min(np.min(np.diff(xs)) if len(xs) > 1 else np.inf, np.min(np.diff(ys)) if len(ys) > 1 else np.inf)
    if spacing < delta:
        raise ValueError("grid spacing must be at least delta")
    if solver is None:
        corners = [(a, b) for a in (xs[0], xs[-1]) for b in (ys[0], ys[-1])]
        solver = GroundStateSolver.for_region(template, corners, tol, dense_max=min(DENSE_MAX, 500))
    return separatrix_from_field(fidelity_field(solver, xs, ys, delta, workers), eps_F)


# ---------------------------------------------------------------- classification


@dataclass(frozen=True)
class Classification:
    type: TransitionType
    Na: tuple[int, ...]
    F_min: tuple[float, ...]
    locations: tuple[tuple[float, float], ...]
    log_slope: float  # d ln F_min / d Na
    infidelity_exponent: float  # d ln(1 - F_min) / d ln Na
    partial: bool = False


@dataclass(frozen=True)
class ClassifierThresholds:
    s0: float = 0.5
    s_stable: float = 0.05
    gamma_unstable: float = 3.0
    gamma_stable: float = 2.0
    eps_F: float = EPS_F


def _decide(Na, Fm, th: ClassifierThresholds) -> tuple[TransitionType, float, float]:
    Na = np.asarray(Na, float)
    Fm = np.asarray(Fm, float)
    if np.any(Fm >= 1.0):
        return TransitionType.UNCLASSIFIED, math.nan, math.nan
    slope = float(np.polyfit(Na, np.log(np.maximum(Fm, 1e-300)), 1)[0])
    gamma = float(np.polyfit(np.log(Na), np.log(np.maximum(1.0 - Fm, 1e-300)), 1)[0])
    if slope < -th.s0 or gamma >= th.gamma_unstable:
        return TransitionType.UNSTABLE, slope, gamma
    if slope > -th.s_stable and gamma <= th.gamma_stable:
        return TransitionType.STABLE, slope, gamma
    return TransitionType.UNCLASSIFIED, slope, gamma


def _local_minimum_along(solver: GroundStateSolver, origin, direction, delta, centre, window, coarse, eps_F):
    """Refined minimum of s -> F(p(s), p(s + delta)) nearest to ``centre`` within the window."""
    d = np.asarray(direction, float)
    p0 = np.asarray(origin, float)

    def point(s):
        return tuple(np.maximum(p0 + s * d, 0.0))

    def f(s):
        return solver.pair_fidelity(point(s), point(s + delta))[0]

    ss = centre + np.arange(-window, window + 0.5 * coarse, coarse)
    vals = np.array([f(s) for s in ss])
    cands = [
        k
        for k in range(1, len(ss) - 1)
        if vals[k] < vals[k - 1] - NOISE_TOL and vals[k] < vals[k + 1] - NOISE_TOL and vals[k] >= eps_F
    ]
    if not cands:
        return None
    k = min(cands, key=lambda c: abs(ss[c] - centre))
    def f_continuous(s):
        # a sector flip inside the bracket is not the minimum being tracked
        v = f(s)
        return v if v >= eps_F else 2.0

    lo, hi = ss[max(k - 1, 0)], ss[min(k + 1, len(ss) - 1)]
    res = minimize_scalar(f_continuous, bounds=(lo, hi), method="bounded", options=dict(xatol=1e-4))
    s_best, f_best = (res.x, res.fun) if res.fun <= vals[k] else (ss[k], vals[k])
    return float(s_best), float(f_best), point(s_best)


def classify_transition(
    point: SeparatrixPoint,
    template: ModelParams,
    Na_list=(1, 2, 3, 4),
    delta: float = 0.01,
    tol: float = 1e-10,
    thresholds: ClassifierThresholds | None = None,
    window: float = 1.0,
    coarse: float = 0.1,
    dense_max: int = 500,
) -> Classification:
    """Finite-size scaling of the fidelity minimum through ``point`` along its direction.

    For each Na the minimum is re-located near the previous one (its position drifts
    with Na) and refined. Unstable if F_min decays fast in Na, stable if it stays put.
    """
    th = thresholds or ClassifierThresholds()
    Na_list = tuple(Na_list)
    if len(Na_list) < 3 or list(Na_list) != sorted(Na_list):
        raise ValueError("Na_list must be ascending with at least three entries")
    if point.F_min < th.eps_F:
        return Classification(TransitionType.DISCONTINUOUS, (template.Na,), (point.F_min,), (point.location.x,), math.nan, math.nan)
    d = np.asarray(point.direction, float)
    origin = np.asarray(point.location.x, float)
    centre = 0.0
    Fm, locs, done = [], [], []
    partial = False
    for Na in Na_list:
        base = template.with_Na(Na)
        ends = [tuple(np.maximum(origin + s * d, 0.0)) for s in (centre - window, centre + window + 2 * delta)]
        try:
            solver = GroundStateSolver.for_region(base, ends, tol, dense_max=dense_max)
            found = _local_minimum_along(solver, origin, d, delta, centre, window, coarse, th.eps_F)
        except ConvergenceError:
            partial = True
            break
        if found is None:
            # the minimum left the window (or never existed on this cut)
            break
        centre, f, loc = found
        Fm.append(f)
        locs.append(loc)
        done.append(Na)
    if len(done) < 3:
        return Classification(TransitionType.UNCLASSIFIED, tuple(done), tuple(Fm), tuple(locs), math.nan, math.nan, partial)
    kind, slope, gamma = _decide(done, Fm, th)
    return Classification(kind, tuple(done), tuple(Fm), tuple(locs), slope, gamma, partial)


def separatrix_components(points: list[SeparatrixPoint], xs, ys) -> list[list[int]]:
    """Indices of points grouped by 8-connectivity on the grid, split by kind and direction family."""
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    groups: dict = {}
    for n, p in enumerate(points):
        key = (p.type is TransitionType.DISCONTINUOUS, p.family)
        groups.setdefault(key, []).append(n)
    comps = []
    for key in sorted(groups, key=str):
        idx = groups[key]
        mask = np.zeros((len(xs), len(ys)), int)
        where = {}
        for n in idx:
            i = int(np.argmin(np.abs(xs - points[n].location.x[0])))
            j = int(np.argmin(np.abs(ys - points[n].location.x[1])))
            mask[i, j] = 1
            where[(i, j)] = n
        lab, count = connected_components(mask, structure=np.ones((3, 3), int))
        for c in range(1, count + 1):
            comps.append(sorted(where[tuple(ij)] for ij in np.argwhere(lab == c)))
    comps.sort(key=lambda c: c[0])
    return comps


def representative(points: list[SeparatrixPoint], comp: list[int]) -> int:
    """Member farthest from every discontinuous point (junctions with sector flips
    distort the fidelity profile); ties go to the lower fidelity."""
    disc = np.array([p.location.x for p in points if p.type is TransitionType.DISCONTINUOUS]).reshape(-1, 2)

    def key(n):
        x = np.asarray(points[n].location.x)
        dist = np.min(np.linalg.norm(disc - x, axis=1)) if len(disc) else 0.0
        return (-round(float(dist), 9), points[n].F_min, n)

    return min(comp, key=key)


def normal_family(points: list[SeparatrixPoint], comp: list[int]) -> str:
    """Direction family closest to the normal of the component's principal axis.

    Oblique cuts also see a minimum, but as Na grows the tracked minimum slides
    along the line; scanning across it keeps the location pinned."""
    xy = np.array([points[n].location.x for n in comp], float)
    if len(xy) < 3:
        return points[comp[0]].family
    _, _, vt = np.linalg.svd(xy - xy.mean(axis=0))
    normal = vt[1]
    return max(DIRECTIONS, key=lambda f: (abs(float(np.dot(DIRECTIONS[f], normal))), f == points[comp[0]].family))


def classify_separatrix(
    points: list[SeparatrixPoint],
    template: ModelParams,
    xs,
    ys,
    min_size: int = 1,
    **kw,
) -> tuple[list[SeparatrixPoint], list[tuple[list[int], Classification | None]]]:
    """Label every continuous component by classifying its representative point."""
    out = list(points)
    report = []
    for comp in separatrix_components(points, xs, ys):
        if points[comp[0]].type is TransitionType.DISCONTINUOUS:
            report.append((comp, None))
            continue
        if len(comp) < min_size:
            report.append((comp, None))
            continue
        rep = points[representative(points, comp)]
        fam = normal_family(points, comp)
        rep = SeparatrixPoint(rep.location, DIRECTIONS[fam], rep.F_min, rep.type, rep.sector_change, fam, rep.sector)
        cls = classify_transition(rep, template, **kw)
        for n in comp:
            p = points[n]
            out[n] = SeparatrixPoint(p.location, p.direction, p.F_min, cls.type, p.sector_change, p.family, p.sector, p.degenerate)
        report.append((comp, cls))
    return out, report


def write_separatrix_csv(path, points: list[SeparatrixPoint], delta: float) -> None:
    """x1, x2, F_min, direction, type, sector, susceptibility 2(1-F)/delta^2."""
    rows = [
        (p.location.x[0], p.location.x[1], p.F_min, p.family, p.type.value, p.sector, 2.0 * (1.0 - p.F_min) / delta**2)
        for p in points
    ]
    write_csv(path, ["x1", "x2", "F_min", "direction", "type", "sector", "chi_F"], rows)
