"""Batch driver: root sweep, assembly, reference and metrics for every final time.

One job per final time: trajectories do not depend on the expansion order,
so the branch sweep is shared by all orders of that job. Jobs run in
worker processes when ``parallelism > 1``; files are written by the parent
in job order.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__, io, plots
from .assembly import DIVERGENT, NEGLIGIBLE, WavefunctionProfile, assemble, evaluate_curves
from .config import RunConfig, dump_config
from .engine import TrajectoryEngine, layout_for
from .errors import CTMError
from .reference import (GridWavefunction, analytic_values, gaussian_on_grid,
                        metric_mask, relative_error, split_operator_propagate)
from .roots import REAL_BRANCH, BranchCurve, sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_FAILURE = 2
EXIT_PARTIAL = 3


@dataclass
class JobOutcome:
    """Everything one final time produced, before anything is written."""

    t_f: float
    targets: np.ndarray
    curves: List[BranchCurve] = field(default_factory=list)
    profiles: Dict[int, WavefunctionProfile] = field(default_factory=dict)
    reference: Optional[GridWavefunction] = None
    reference_method: str = ""
    exact_at_targets: Optional[np.ndarray] = None
    trajectories: list = field(default_factory=list)
    errors: List[tuple] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return not self.profiles


@dataclass
class RunReport:
    version: str
    config: dict
    jobs: List[dict]
    status: str
    exit_code: int
    problems: List[str]
    wall_time: float
    output_dir: str

    def to_dict(self) -> dict:
        return {"tool": "ctwkb", "version": self.version, "status": self.status, "exit_code": self.exit_code,
                "problems": self.problems, "wall_time_s": self.wall_time, "output_dir": self.output_dir,
                "jobs": self.jobs, "config": self.config}


class _Collect(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages: List[str] = []

    def emit(self, record):
        self.messages.append(f"{record.name}: {record.getMessage()}")


def reference_method(cfg: RunConfig) -> str:
    m = cfg.reference.method
    if m == "auto":
        quad = cfg.potential.degree <= 2 and cfg.potential.is_real
        return "analytic" if quad else "split-operator"
    return m


def run_job(cfg: RunConfig, t_f: float) -> JobOutcome:
    """Sweep, assemble every order and solve the reference for one final time."""
    targets = cfg.targets.points()
    out = JobOutcome(float(t_f), targets)
    collect = _Collect()
    pkg_log = logging.getLogger("ctwkb")
    pkg_log.addHandler(collect)
    try:
        _stage(out, "root-search", lambda: _sweep(cfg, out))
        if out.curves:
            _stage(out, "assembly", lambda: _assemble(cfg, out))
            if cfg.emit.trajectories:
                _stage(out, "trajectories", lambda: _trace(cfg, out))
        if cfg.reference.enabled:
            _stage(out, "reference", lambda: _reference(cfg, out))
    finally:
        pkg_log.removeHandler(collect)
    out.warnings.extend(collect.messages)
    for c in out.curves:
        out.warnings.extend(f"branch {c.branch_id}: {f}" for f in c.flags if "merged" not in f)
    return out


def _stage(out: JobOutcome, name: str, fn):
    t0 = time.perf_counter()
    try:
        fn()
    except CTMError as exc:
        out.errors.append((name, f"{type(exc).__name__}: {exc}"))
        logger.error("t_f=%g: %s stage failed: %s", out.t_f, name, exc)
    finally:
        out.timings[name] = time.perf_counter() - t0


def _engine(cfg: RunConfig, order: int) -> TrajectoryEngine:
    return TrajectoryEngine(cfg.wavepacket, cfg.potential, layout_for(cfg.wavepacket, order), cfg.stepper)


def _sweep(cfg, out):
    out.curves = sweep(out.targets, out.t_f, _engine(cfg, min(cfg.orders)), cfg.root_search)


def _assemble(cfg, out):
    for N in cfg.orders:
        contribs = evaluate_curves(out.curves, _engine(cfg, N), out.t_f)
        out.profiles[N] = assemble(contribs, out.targets, cfg.pruning, out.t_f, N)


def _trace(cfg, out):
    eng = _engine(cfg, min(cfg.orders))
    stride = cfg.emit.trajectory_stride
    for c in out.curves:
        pts = c.points[::stride]
        if not pts:
            continue
        res = eng.propagate_batch([p.x0 for p in pts], out.t_f, trace=True)
        for p, path in zip(pts, res.paths):
            out.trajectories.append((c.branch_id, c.kind, p.target, res.path_times, path))


def _reference(cfg, out):
    rc, spec = cfg.reference, cfg.wavepacket
    method = reference_method(cfg)
    out.reference_method = method
    grid = gaussian_on_grid(spec, rc.x_min, rc.x_max, rc.n_points)
    if method == "analytic":
        out.reference = GridWavefunction(grid.x_min, grid.x_max, grid.n_points,
                                         analytic_values(spec, cfg.potential, grid.x, out.t_f), out.t_f)
        out.exact_at_targets = analytic_values(spec, cfg.potential, out.targets, out.t_f)
        return
    ref = split_operator_propagate(grid, cfg.potential, out.t_f, rc.dt, spec.mass, spec.hbar)
    out.reference = ref
    exact = np.full(out.targets.shape, np.nan + 0j)
    inside = (out.targets >= ref.x_min) & (out.targets <= ref.x[-1])
    exact[inside] = ref.interpolate(out.targets[inside])
    out.exact_at_targets = exact


def job_metrics(cfg: RunConfig, out: JobOutcome) -> dict:
    """Per-order errors against the reference, plus the floor and region they used."""
    if out.reference is None or out.exact_at_targets is None:
        return {}
    region = cfg.reference.bounds()
    floor = cfg.reference.floor_fraction * float(np.max(np.abs(out.reference.values)))
    ex = out.exact_at_targets
    ex_abs = np.abs(ex)
    scale = float(np.nanmax(ex_abs)) if np.any(np.isfinite(ex_abs)) else np.nan
    res = {"floor": floor, "region": [region[0], region[1]], "orders": {}}
    for N, prof in sorted(out.profiles.items()):
        m = {}
        for key, approx in (("mean_rel_error", np.abs(prof.psi)), ("mean_rel_error_real_branch", real_abs(prof))):
            try:
                m[key] = relative_error(approx, ex_abs, out.targets, region, floor)
            except CTMError as exc:
                m[key] = None
                out.warnings.append(f"N={N} {key}: {exc}")
        mask = metric_mask(np.abs(prof.psi), ex_abs, out.targets, region, floor)
        m["n_metric_points"] = int(mask.sum())
        ok = np.isfinite(ex)
        m["max_rel_deviation"] = float(np.max(np.abs(prof.psi[ok] - ex[ok])) / scale) if ok.any() else None
        res["orders"][str(N)] = m
    return res


def real_abs(prof: WavefunctionProfile) -> np.ndarray:
    """|psi| of the real branch alone (NaN where it is absent)."""
    real_ids = {c.branch_id for row in prof.per_branch for c in row if c.kind == REAL_BRANCH}
    out = np.full(prof.targets.size, np.nan)
    for bid in real_ids:
        out = np.where(np.isnan(out), prof.branch_abs(bid), out)
    return out


def _branch_summary(out: JobOutcome) -> dict:
    per_target = np.zeros(out.targets.size, dtype=int)
    index = {float(x): i for i, x in enumerate(out.targets)}
    branches = []
    for c in out.curves:
        for p in c.points:
            per_target[index[p.target]] += 1
        t = c.targets
        branches.append({"branch_id": c.branch_id, "kind": c.kind, "n_points": len(c.points),
                         "target_min": float(t.min()) if t.size else None,
                         "target_max": float(t.max()) if t.size else None, "flags": list(c.flags)})
    return {"n_branches": len(out.curves), "roots_per_target_min": int(per_target.min()),
            "roots_per_target_max": int(per_target.max()), "roots_per_target_mean": float(per_target.mean()),
            "branches": branches}


def _pruning_summary(prof: WavefunctionProfile) -> dict:
    s = {}
    for bid in prof.branch_ids:
        reasons = [r for row in prof.pruned for b, r in row if b == bid]
        s[str(bid)] = {"negligible": reasons.count(NEGLIGIBLE), "divergent": reasons.count(DIVERGENT),
                       "triggers": prof.triggers.get(bid, [])}
    return s


def _tag(t_f: float) -> str:
    return f"tf_{t_f:g}"


def write_job(cfg: RunConfig, out: JobOutcome, out_dir: Path, metrics: dict) -> List[Path]:
    d = out_dir / _tag(out.t_f)
    files: List[Path] = []
    em = cfg.emit
    ex = out.exact_at_targets
    ex_abs = np.abs(ex) if ex is not None else np.full(out.targets.size, np.nan)
    if em.profiles:
        region = cfg.reference.bounds()
        floor = metrics.get("floor", np.nan)
        for N, prof in sorted(out.profiles.items()):
            ra = real_abs(prof)
            mask = (metric_mask(np.abs(prof.psi), ex_abs, out.targets, region, floor)
                    if metrics else np.zeros(out.targets.size, dtype=bool))
            exr = ex if ex is not None else np.full(out.targets.size, np.nan + 0j)
            rows = zip(out.targets, prof.psi.real, prof.psi.imag, np.abs(prof.psi), ra,
                       exr.real, exr.imag, ex_abs, mask)
            files.append(io.write_csv(d / f"profile_N{N}.csv",
                                      ["target", "re_psi", "im_psi", "abs_psi", "abs_real_branch",
                                       "re_exact", "im_exact", "abs_exact", "in_metric"], rows))
    if em.branches and out.curves:
        rows = [(c.branch_id, c.kind, p.target, p.x0.real, p.x0.imag, p.residual)
                for c in out.curves for p in c.points]
        files.append(io.write_csv(d / "branches.csv",
                                  ["branch_id", "kind", "target", "re_x0", "im_x0", "residual"], rows))
    if em.imS and out.profiles:
        rows = []
        for N, prof in sorted(out.profiles.items()):
            for i, row in enumerate(prof.contributions):
                pruned = dict(prof.pruned[i])
                for c in row:
                    rows.append((N, c.branch_id, c.kind, c.target, np.real(c.S_total), c.im_S,
                                 pruned.get(c.branch_id, "")))
        files.append(io.write_csv(d / "imS.csv", ["order", "branch_id", "kind", "target", "re_S", "im_S",
                                                  "pruned"], rows))
    if out.trajectories:
        rows = [(bid, kind, X, t, z.real, z.imag) for bid, kind, X, ts, path in out.trajectories
                for t, z in zip(ts, path)]
        files.append(io.write_csv(d / "trajectories.csv", ["branch_id", "kind", "target", "t", "re_x", "im_x"],
                                  rows))
    if em.reference and out.reference is not None:
        files.append(io.write_reference(d / "reference.csv", out.reference))
    if em.plots:
        files.extend(_plots(cfg, out, d))
    return files


def _plots(cfg, out, d) -> List[Path]:
    files = []
    if out.profiles:
        exact = None
        if out.reference is not None:
            r = out.reference
            sel = (r.x >= out.targets[0]) & (r.x <= out.targets[-1])
            exact = (r.x[sel], r.density[sel])
        first = out.profiles[min(out.profiles)]
        files.append(plots.density_plot(d / "density.svg", out.t_f, out.targets,
                                        {N: p.density for N, p in out.profiles.items()}, exact,
                                        real_abs(first) ** 2, cfg.reference.bounds()))
        series = {f"{b} ({'real' if b == 0 else 'sec'})": (out.targets, first.branch_im_S(b))
                  for b in first.branch_ids}
        files.append(plots.imS_plot(d / "imS.svg", out.t_f, series))
    if out.curves:
        files.append(plots.loci_plot(d / "loci.svg", out.t_f, out.curves))
    if out.trajectories:
        groups: Dict[str, list] = {}
        for bid, kind, X, ts, path in out.trajectories:
            groups.setdefault(f"{bid} ({kind})", []).append(path)
        files.append(plots.trajectory_plot(d / "trajectories.svg", out.t_f, groups))
    return files


def _job_report(cfg, out: JobOutcome, metrics: dict) -> dict:
    rep = {"t_f": out.t_f, "status": "failed" if out.failed else ("partial" if out.errors or out.warnings
                                                                    else "ok"),
           "errors": [{"stage": s, "message": m} for s, m in out.errors], "warnings": list(out.warnings),
           "timings_s": out.timings, "reference_method": out.reference_method or None}
    if out.curves:
        rep["branches"] = _branch_summary(out)
    if out.profiles:
        rep["pruning"] = {str(N): _pruning_summary(p) for N, p in sorted(out.profiles.items())}
    rep["metrics"] = metrics
    return rep


def run(cfg: RunConfig, output_dir=None, parallelism: Optional[int] = None, trace: bool = False) -> RunReport:
    """Execute every job of `cfg`, write all enabled outputs and return the report."""
    t0 = time.perf_counter()
    if output_dir is not None:
        cfg = replace(cfg, output_dir=str(output_dir))
    if parallelism is not None:
        cfg = replace(cfg, parallelism=int(parallelism))
    if trace:
        cfg = replace(cfg, emit=replace(cfg.emit, trajectories=True))
    cfg.validate()
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = [out_dir / "config.resolved.yaml"]
    files[0].write_text(dump_config(cfg))

    jobs = list(cfg.t_f)
    if cfg.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.parallelism, len(jobs))) as pool:
            outcomes = list(pool.map(run_job, [cfg] * len(jobs), jobs))
    else:
        outcomes = [run_job(cfg, t) for t in jobs]

    reports, problems = [], []
    for out in outcomes:
        metrics = {}
        try:
            metrics = job_metrics(cfg, out)
            files.extend(write_job(cfg, out, out_dir, metrics))
        except (CTMError, OSError) as exc:
            out.errors.append(("output", f"{type(exc).__name__}: {exc}"))
        reports.append(_job_report(cfg, out, metrics))
        problems += [f"t_f={out.t_f:g} {s}: {m}" for s, m in out.errors]
        problems += [f"t_f={out.t_f:g} warning: {w}" for w in out.warnings]

    if all(o.failed for o in outcomes):
        status, code = "failed", EXIT_FAILURE
    elif problems:
        status, code = "partial", EXIT_PARTIAL
    else:
        status, code = "complete", EXIT_OK
    report = RunReport(__version__, cfg.to_dict(), reports, status, code, problems,
                       time.perf_counter() - t0, str(out_dir))
    files.append(io.write_json(out_dir / "report.json", report.to_dict()))
    io.write_manifest(out_dir, status, files, problems)
    return report
