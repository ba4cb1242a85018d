"""Command-line runner: config parsing, sweep orchestration and file output.

    dicke-lab <analysis> --config FILE [--workers N] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import functools
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .io import sha256, write_csv, write_json
from .model import PRESETS, ModelParams, preset
from .qpt import (
    EPS_F,
    ClassifierThresholds,
    GroundStateSolver,
    classify_separatrix,
    fidelity,
    fidelity_field,
    separatrix_from_field,
)
from .solver import ConvergenceError, global_ground_state
from .tomography import (
    QuadratureGrid,
    linear_entropies,
    mean_photons,
    negativity_volume,
    reduce_to_mode,
    wigner_field,
)
from .variational import minimize_variational

ANALYSES = ("ground", "sweep", "separatrix", "wigner", "entropy", "variational", "classify")
WORKERS_ENV = "DICKE_LAB_WORKERS"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    x1: tuple[float, float] = (0.0, 3.0)
    x2: tuple[float, float] = (0.0, 3.0)
    n1: int = 61
    n2: int = 61

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(*self.x1, self.n1), np.linspace(*self.x2, self.n2)


@dataclass(frozen=True)
class TrajectorySpec:
    """Polyline through ``points`` sampled every ``step`` in arc length (vertices kept)."""

    points: tuple[tuple[float, float], ...] = ()
    step: float = 0.05

    def sample(self) -> list[tuple[float, float]]:
        pts = [np.asarray(p, float) for p in self.points]
        if not pts:
            return []
        out = [tuple(pts[0])]
        for a, b in zip(pts, pts[1:]):
            n = max(1, int(round(np.linalg.norm(b - a) / self.step)))
            out += [tuple(a + (b - a) * k / n) for k in range(1, n + 1)]
        return [(float(u), float(v)) for u, v in out]


@dataclass(frozen=True)
class RunConfig:
    analysis: str
    params: ModelParams
    preset: str | None = None
    grid: GridSpec = GridSpec()
    trajectory: TrajectorySpec = TrajectorySpec()
    tol: float = 1e-10
    delta: float = 0.01
    eps_F: float = EPS_F
    quadrature: QuadratureGrid = QuadratureGrid()
    classifier: ClassifierThresholds = ClassifierThresholds()
    Na_list: tuple[int, ...] = (1, 2, 3, 4)
    out: str = "out"
    workers: int = 1

    def echo(self) -> dict:
        d = {
            "analysis": self.analysis,
            "preset": self.preset,
            "model": self.params.to_dict(),
            "grid": asdict(self.grid),
            "trajectory": {"points": [list(p) for p in self.trajectory.points], "step": self.trajectory.step},
            "tolerances": {"truncation": self.tol, "delta": self.delta, "eps_F": self.eps_F},
            "quadrature": self.quadrature.to_dict(),
            "classify": {"Na_list": list(self.Na_list), **asdict(self.classifier)},
        }
        d["grid"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["grid"].items()}
        return d


# ---------------------------------------------------------------- parsing


def _line_index(node, prefix=()) -> dict:
    """Map key paths to 1-based source lines."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (k.value,)
            out[path] = k.start_mark.line + 1
            out.update(_line_index(v, path))
    return out


def parse_config(text: str, analysis: str | None = None) -> RunConfig:
    """Validate a YAML (or JSON) run description and fill in defaults."""
    try:
        lines = _line_index(yaml.compose(text)) if text.strip() else {}
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark else ""
        raise ConfigError(f"{where}malformed config: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(doc, dict):
        raise ConfigError("line 1: config must be a mapping of keys to values")

    def fail(path, msg):
        line = lines.get(tuple(path))
        raise ConfigError(f"line {line}: {msg}" if line else msg)

    def num(path, default, positive=True, kind=float):
        node = doc
        for k in path:
            if not isinstance(node, dict) or k not in node:
                return default
            node = node[k]
        try:
            v = kind(node)
        except (TypeError, ValueError):
            fail(path, f"{'.'.join(path)} must be a number, got {node!r}")
        if positive and not v > 0:
            fail(path, f"{'.'.join(path)} must be positive, got {node!r}")
        return v

    known = {"analysis", "preset", "model", "Na", "x", "grid", "trajectory", "tolerances", "quadrature", "classify", "out", "workers"}
    for k in doc:
        if k not in known:
            fail([k], f"unknown key {k!r}")

    name = doc.get("analysis")
    if analysis is not None:
        if name not in (None, "") and name != analysis:
            fail(["analysis"], f"config analysis {name!r} conflicts with command {analysis!r}")
        name = analysis
    if name in (None, ""):
        fail(["analysis"], "missing required field 'analysis'")
    if name not in ANALYSES:
        fail(["analysis"], f"unknown analysis {name!r}; choose one of {', '.join(ANALYSES)}")

    Na = num(["Na"], 1, kind=int)
    x = doc.get("x", (0.0, 0.0))
    preset_name = doc.get("preset")
    if preset_name is not None and "model" in doc:
        fail(["model"], "give either 'preset' or 'model', not both")
    try:
        if preset_name is not None:
            if preset_name not in PRESETS:
                fail(["preset"], f"unknown preset {preset_name!r}; known: {', '.join(sorted(PRESETS))}")
            params = preset(preset_name, x=x, Na=Na)
        elif "model" in doc:
            m = dict(doc["model"])
            m.setdefault("Na", Na)
            m.setdefault("x", x)
            params = ModelParams.from_dict(m)
        else:
            fail(["analysis"], "missing required field 'preset' or 'model'")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        fail(["model"] if "model" in doc else ["preset"], f"invalid model: {exc}")

    g = doc.get("grid") or {}
    try:
        grid = GridSpec(
            tuple(float(v) for v in g.get("x1", (0.0, 3.0))),
            tuple(float(v) for v in g.get("x2", (0.0, 3.0))),
            int(g.get("n1", 61)),
            int(g.get("n2", 61)),
        )
    except (TypeError, ValueError) as exc:
        fail(["grid"], f"invalid grid: {exc}")
    if len(grid.x1) != 2 or len(grid.x2) != 2 or grid.n1 < 1 or grid.n2 < 1 or min(grid.x1 + grid.x2) < 0:
        fail(["grid"], "grid needs x1/x2 ranges of two non-negative numbers and positive counts")

    t = doc.get("trajectory") or {}
    try:
        if "points" in t:
            tpts = tuple(tuple(float(v) for v in p) for p in t["points"])
        elif "start" in t or "end" in t:
            tpts = (tuple(float(v) for v in t["start"]), tuple(float(v) for v in t["end"]))
        else:
            tpts = ()
    except (KeyError, TypeError, ValueError) as exc:
        fail(["trajectory"], f"invalid trajectory: {exc}")
    if any(len(p) != 2 or min(p) < 0 for p in tpts):
        fail(["trajectory"], "trajectory points need two non-negative couplings")
    traj = TrajectorySpec(tpts, num(["trajectory", "step"], 0.05))

    tol = num(["tolerances", "truncation"], 1e-10)
    delta = num(["tolerances", "delta"], 0.01)
    eps_F = num(["tolerances", "eps_F"], EPS_F)
    q = doc.get("quadrature") or {}
    try:
        quad = QuadratureGrid(
            *(float(v) for v in q.get("q", (-6.0, 6.0))),
            *(float(v) for v in q.get("p", (-6.0, 6.0))),
            int(q.get("nq", 241)),
            int(q.get("np", 241)),
        )
    except (TypeError, ValueError) as exc:
        fail(["quadrature"], f"invalid quadrature grid: {exc}")
    c = doc.get("classify") or {}
    try:
        Na_list = tuple(int(v) for v in c.get("Na_list", (1, 2, 3, 4)))
    except (TypeError, ValueError) as exc:
        fail(["classify", "Na_list"], f"invalid Na_list: {exc}")
    if len(Na_list) < 3 or list(Na_list) != sorted(set(Na_list)) or Na_list[0] < 1:
        fail(["classify", "Na_list"], "Na_list must be ascending positive integers, at least three")
    th = ClassifierThresholds(
        num(["classify", "s0"], 0.5),
        num(["classify", "s_stable"], 0.05),
        num(["classify", "gamma_unstable"], 3.0),
        num(["classify", "gamma_stable"], 2.0),
        eps_F,
    )
    workers = num(["workers"], 1, kind=int)
    return RunConfig(
        name, params, preset_name, grid, traj, tol, delta, eps_F, quad, th, Na_list, str(doc.get("out", "out")), workers
    )


# ---------------------------------------------------------------- execution


@dataclass
class ResultManifest:
    config: dict
    version: str
    files: dict = field(default_factory=dict)  # name -> sha256
    truncation: dict = field(default_factory=dict)
    failed: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def ok(self) -> bool:
        return not self.failed


def _pool_map(fn, items: list, workers: int) -> list:
    """Ordered map; results do not depend on the worker count."""
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
    return [fn(it) for it in items]


def _region_solver(cfg: RunConfig, pts) -> GroundStateSolver:
    pts = np.asarray(pts, float).reshape(-1, 2)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    corners = sorted({(a, b) for a in (lo[0], hi[0]) for b in (lo[1], hi[1])})
    return GroundStateSolver.for_region(cfg.params, corners, cfg.tol, dense_max=500)


def _caps_record(solver: GroundStateSolver) -> dict:
    return {s.label: list(c) for s, c in sorted(solver.caps.items(), key=lambda t: t[0].label)}


def _guarded(fn, item):
    try:
        return True, fn(item)
    except (ConvergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return False, f"{type(exc).__name__}: {exc}"


def _safe(fn):
    return functools.partial(_guarded, fn)


def _ground_cell(args):
    params, tol, x = args
    g = global_ground_state(params.with_x(x), tol, dense_max=500)
    m1, m2 = mean_photons(g)
    t = g.truncation
    return [x[0], x[1], g.sector.label, g.energy, g.dim, int(g.degenerate), m1, m2, t.kcaps[0], t.kcaps[1], t.infidelity]


def _solver_cell(args):
    spec, x, what, *extra = args
    solver = GroundStateSolver(*spec)
    g = solver(x)
    if what == "profile":
        h = solver(extra[0])
        return [g.sector.label, g.energy, int(g.degenerate), fidelity(g, h)]
    if what == "entropy":
        e = linear_entropies(g)
        m1, m2 = mean_photons(g)
        return [g.sector.label, e.S_nu1, e.S_nu2, e.S_nu_m, m1, m2]
    if what == "wigner":
        quad = extra[0]
        out = []
        for mode in (1, 2):
            wf = wigner_field(reduce_to_mode(g, mode), quad)
            out.append((wf.values, wf.normalization_ok, negativity_volume(wf), wf.integral()))
        return g.sector.label, out
    raise ValueError(what)


def _variational_cell(args):
    params, x = args
    r = minimize_variational(params.with_x(x))
    a = r.minimizer.alpha
    return [x[0], x[1], r.energy_pp, r.region, abs(a[0]), abs(a[1])]


def _run_cells(fn, items, workers, manifest, labels):
    results = _pool_map(_safe(fn), items, workers)
    good = []
    for lab, (ok, val) in zip(labels, results):
        if ok:
            good.append(val)
        else:
            manifest.failed.append({"cell": lab, "error": val})
            good.append(None)
    return good


def run_sweep(cfg: RunConfig, out: str | Path | None = None) -> ResultManifest:
    """Run the configured analysis, write its data files and ``manifest.json``."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    man = ResultManifest(cfg.echo(), __version__)
    files: list[Path] = []
    a = cfg.analysis
    traj = cfg.trajectory.sample()
    xs, ys = cfg.grid.axes
    nodes = [(float(u), float(v)) for u in xs for v in ys]

    if a == "ground":
        pts = traj or [tuple(cfg.params.x)]
        rows = _run_cells(_ground_cell, [(cfg.params, cfg.tol, p) for p in pts], cfg.workers, man, pts)
        head = ["x1", "x2", "sector", "energy", "dim", "degenerate", "n1_mean", "n2_mean", "k1max", "k2max", "trunc_infidelity"]
        files.append(write_csv(out / "ground.csv", head, [r for r in rows if r is not None]))

    elif a in ("sweep", "entropy", "wigner") and traj:
        solver = _region_solver(cfg, traj + [(p[0] + cfg.delta, p[1] + cfg.delta) for p in traj])
        man.truncation = {"caps": _caps_record(solver)}
        spec = solver.spec()
        if a == "sweep":
            d = np.diff(np.asarray(traj), axis=0)
            items = []
            for i, p in enumerate(traj):
                u = d[min(i, len(d) - 1)] if len(d) else np.array([1.0, 0.0])
                u = u / np.linalg.norm(u)
                q = (max(0.0, p[0] + cfg.delta * u[0]), max(0.0, p[1] + cfg.delta * u[1]))
                items.append((spec, p, "profile", q))
            rows = _run_cells(_solver_cell, items, cfg.workers, man, traj)
            F = np.array([r[3] if r else np.nan for r in rows])
            out_rows = []
            s = 0.0
            for i, (p, r) in enumerate(zip(traj, rows)):
                if i:
                    s += math.dist(traj[i - 1], p)
                if r is None:
                    continue
                is_min = 0 < i < len(F) - 1 and F[i] < F[i - 1] - 1e-12 and F[i] < F[i + 1] - 1e-12
                out_rows.append([s, p[0], p[1], r[0], r[1], r[2], r[3], 2 * (1 - r[3]) / cfg.delta**2, int(is_min)])
            head = ["s", "x1", "x2", "sector", "energy", "degenerate", "F_delta", "chi_F", "local_min"]
            files.append(write_csv(out / "profile.csv", head, out_rows))
        elif a == "entropy":
            rows = _run_cells(_solver_cell, [(spec, p, "entropy") for p in traj], cfg.workers, man, traj)
            head = ["x1", "x2", "sector", "S_nu1", "S_nu2", "S_nu_m", "n1_mean", "n2_mean"]
            files.append(write_csv(out / "entropy.csv", head, [[p[0], p[1], *r] for p, r in zip(traj, rows) if r]))
        else:
            rows = _run_cells(_solver_cell, [(spec, p, "wigner", cfg.quadrature) for p in traj], cfg.workers, man, traj)
            summary = []
            for i, (p, r) in enumerate(zip(traj, rows)):
                if r is None:
                    continue
                sector, modes = r
                for mode, (W, ok, neg, integ) in zip((1, 2), modes):
                    stem = f"wigner_mode{mode}_frame{i:04d}"
                    files.append(write_csv(out / f"{stem}.csv", None, W.tolist()))
                    meta = {
                        "frame": i,
                        "mode": mode,
                        "pair": list(cfg.params.pairs[mode - 1]),
                        "x": list(p),
                        "sector": sector,
                        "grid": cfg.quadrature.to_dict(),
                        "rows": "q",
                        "columns": "p",
                        "normalization_ok": ok,
                        "integral": float(integ),
                        "negativity_volume": float(neg),
                        "params": cfg.params.with_x(p).to_dict(),
                    }
                    files.append(write_json(out / f"{stem}.meta.json", meta))
                    summary.append([i, mode, p[0], p[1], sector, neg, integ, int(ok)])
            head = ["frame", "mode", "x1", "x2", "sector", "negativity_volume", "integral", "normalization_ok"]
            files.append(write_csv(out / "wigner_frames.csv", head, summary))

    elif a == "variational":
        rows = _run_cells(_variational_cell, [(cfg.params, p) for p in nodes], cfg.workers, man, nodes)
        head = ["x1", "x2", "energy_pp", "region", "abs_alpha1", "abs_alpha2"]
        files.append(write_csv(out / "variational.csv", head, [r for r in rows if r]))

    elif a in ("separatrix", "classify"):
        corners = [(u, v) for u in (xs[0], xs[-1]) for v in (ys[0], ys[-1])]
        solver = GroundStateSolver.for_region(cfg.params, corners, cfg.tol, dense_max=500)
        man.truncation = {"caps": _caps_record(solver)}
        try:
            ff = fidelity_field(solver, xs, ys, cfg.delta, cfg.workers)
        except ConvergenceError as exc:
            man.failed.append({"cell": "fidelity_field", "error": str(exc)})
            ff = None
        if ff is not None:
            pts = separatrix_from_field(ff, cfg.eps_F)
            if a == "classify":
                pts, report = classify_separatrix(
                    pts, cfg.params, xs, ys, Na_list=cfg.Na_list, delta=cfg.delta, tol=cfg.tol, thresholds=cfg.classifier
                )
                crow = []
                for k, (comp, cls) in enumerate(report):
                    if cls is None:
                        continue
                    if cls.partial:
                        man.failed.append({"cell": f"component {k}", "error": "classification incomplete at large Na"})
                    for Na, f, loc in zip(cls.Na, cls.F_min, cls.locations):
                        crow.append([k, len(comp), cls.type.value, Na, f, loc[0], loc[1], cls.log_slope, cls.infidelity_exponent])
                head = ["component", "size", "type", "Na", "F_min", "x1", "x2", "log_slope", "infidelity_exponent"]
                files.append(write_csv(out / "classification.csv", head, crow))
            rows = [
                (p.location.x[0], p.location.x[1], p.F_min, p.family, p.type.value, p.sector, int(p.sector_change),
                 2.0 * (1.0 - p.F_min) / cfg.delta**2)
                for p in pts
            ]
            head = ["x1", "x2", "F_min", "direction", "type", "sector", "sector_change", "chi_F"]
            files.append(write_csv(out / "separatrix.csv", head, rows))

    man.files = {f.name: sha256(f) for f in sorted(files)}
    man.timing = {"wall_seconds": round(time.perf_counter() - t0, 3)}
    write_json(out / "manifest.json", man.to_dict())
    return man


# ---------------------------------------------------------------- entry point


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dicke-lab", description="Ground-state phase structure of the three-level two-mode Dicke model.")
    ap.add_argument("analysis", choices=ANALYSES)
    ap.add_argument("--config", required=True, help="YAML or JSON run description")
    ap.add_argument("--workers", type=int, default=None, help=f"worker processes (default from ${WORKERS_ENV} or the config)")
    ap.add_argument("--out", default=None, help="output directory")
    args = ap.parse_args(argv)
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text, analysis=args.analysis)
        if args.workers is not None:
            workers = args.workers
        elif os.environ.get(WORKERS_ENV):
            workers = int(os.environ[WORKERS_ENV])
        else:
            workers = cfg.workers
        if workers < 1:
            raise ConfigError("worker count must be positive")
    except (OSError, ConfigError, ValueError) as exc:
        print(f"dicke-lab: config error: {exc}", file=sys.stderr)
        return 2
    cfg = RunConfig(**{**cfg.__dict__, "workers": workers})
    try:
        man = run_sweep(cfg, args.out)
    except (ConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"dicke-lab: numerical failure: {exc}", file=sys.stderr)
        return 3
    if not man.ok:
        print(f"dicke-lab: {len(man.failed)} cells failed; see manifest.json", file=sys.stderr)
        return 3
    print(f"wrote {len(man.files)} data files to {args.out or cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
