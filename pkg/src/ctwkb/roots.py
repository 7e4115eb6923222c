"""Complex root search for trajectories that land on real targets.

For a real target X and final time t_f we look for initial positions x0
with x(t_f; x0) = X. The map x0 -> x(t_f) is locally analytic and its
derivative M(t_f) is integrated alongside the trajectory, so plain Newton
iteration converges quadratically.

Discovery runs Newton from a rectangular seed grid and clusters the results;
a sweep continues each root (branch) along an ascending grid of targets.

For polynomial potentials of degree > 2 the landing map has infinitely many
preimages of every target: at short times x0 * t_f tends to points of a
lattice set by the leading anharmonic term, and the seed box catches a
growing number of preimages as t_f increases. The branch family used for
superposition is therefore defined at short times and followed in t_f: the
real root plus, for quartic potentials, the secondary pair with
x0 * t -> +-A (1 - 2i), A = (m / 2c)^(1/2) * 1.31103 (c the quartic
coefficient). The nearer +-A pair and the deeper lattice points carry
amplitudes below 1e-2000 at all times; the +-A (1 + 2i) pair is exponentially
growing. Grid discovery still runs at t_f and is reported as ``raw``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import gamma

from . import _kernels
from .engine import TrajectoryEngine
from .errors import CausticError, DivergenceError, InvalidInputError, NonConvergenceError

logger = logging.getLogger(__name__)

REAL_BRANCH = "real-branch"
SECONDARY = "secondary"

# integral of (1 - w^4)^(-1/2) over [0, 1]; sets the fall time to the origin in a quartic well
LEMNISCATE_QUARTER = gamma(0.25) ** 2 / (4 * np.sqrt(2 * np.pi))

# per-seed Newton outcomes
CONVERGED, DIVERGED, NONCONVERGED, CAUSTIC, MERGED = range(5)


@dataclass(frozen=True)
class RootSearchConfig:
    seed_box: tuple = (-30.0, 30.0, -30.0, 30.0)
    seed_shape: tuple = (61, 61)
    tol: float = 1e-9
    max_iter: int = 30
    cluster_tol: float = 1e-6
    caustic_tol: float = 1e-12
    # loose integration while far from the root; switched off below `stage_switch`
    loose_rtol: float = 1e-6
    stage_switch: float = 1e-3
    rediscover_every: int = 10
    jump_factor: float = 10.0
    # Newton iterates farther than this multiple of the seed box's outer
    # radius are abandoned as escaping
    escape_factor: float = 5.0
    # "short-time" follows the branch family from `short_time`; "grid" returns raw grid roots
    family: str = "short-time"
    short_time: float = 0.01
    # x0 * t values seeding the secondary branches; None derives them from the potential
    secondary_seeds: Optional[tuple] = None
    # relative size of an accepted corrector move during time continuation
    time_step_tol: float = 0.01

    def __post_init__(self):
        if not (self.tol > 0 and self.cluster_tol > 0 and self.caustic_tol > 0 and self.loose_rtol > 0):
            raise InvalidInputError("root-search tolerances must be positive")
        if self.max_iter < 1 or self.rediscover_every < 1:
            raise InvalidInputError("max_iter and rediscover_every must be >= 1")
        if self.family not in ("short-time", "grid"):
            raise InvalidInputError(f"unknown branch family mode {self.family!r}")
        if not (self.short_time > 0 and self.time_step_tol > 0 and self.escape_factor > 0):
            raise InvalidInputError("short_time, time_step_tol and escape_factor must be positive")
        x0, x1, y0, y1 = self.seed_box
        if not (x1 > x0 and y1 > y0):
            raise InvalidInputError("seed box must have positive extent")

    def seeds(self) -> np.ndarray:
        x0, x1, y0, y1 = self.seed_box
        nr, ni = self.seed_shape
        re = np.linspace(x0, x1, nr)
        im = np.linspace(y0, y1, ni)
        return (re[None, :] + 1j * im[:, None]).ravel()

    def scaled(self, factor: float) -> "RootSearchConfig":
        """Same config with the seed box scaled about the origin."""
        from dataclasses import replace
        return replace(self, seed_box=tuple(factor * v for v in self.seed_box))


@dataclass
class BranchRoot:
    x0: complex
    target: float
    t_f: float
    residual: float
    branch_id: int = -1
    jacobian: complex = complex("nan")


@dataclass
class BranchCurve:
    branch_id: int
    kind: str
    points: List[BranchRoot] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    @property
    def targets(self) -> np.ndarray:
        return np.array([p.target for p in self.points])

    @property
    def x0(self) -> np.ndarray:
        return np.array([p.x0 for p in self.points], dtype=complex)

    def at(self, target: float) -> Optional[BranchRoot]:
        for p in self.points:
            if p.target == target:
                return p
        return None


@dataclass
class DiscoveryResult:
    """Distinct roots for one target plus per-outcome seed counts.

    ``roots`` is the branch family; ``raw`` holds every distinct root the
    seed grid found at the requested final time (identical to ``roots`` when
    no reference time is configured).
    """

    roots: List[BranchRoot]
    n_seeds: int
    counts: dict
    raw: List[BranchRoot] = field(default_factory=list)

    def __iter__(self):
        return iter(self.roots)

    def __len__(self):
        return len(self.roots)

    def __getitem__(self, i):
        return self.roots[i]


class RootFinder:
    """Newton root search bound to one trajectory engine and final time."""

    def __init__(self, engine: TrajectoryEngine, t_f: float, config: RootSearchConfig = RootSearchConfig()):
        if not np.isfinite(t_f) or t_f < 0:
            raise InvalidInputError(f"final time must be finite and non-negative, got {t_f}")
        self.engine = engine
        self.t_f = float(t_f)
        self.config = config

    def landing_map(self, x0, loose: bool = False):
        rtol = self.config.loose_rtol if loose else None
        return self.engine.flow_batch(x0, self.t_f, rtol=rtol, atol=rtol)

    def newton_batch(self, seeds, target, escape_radius: Optional[float] = None):
        """Run Newton from every seed toward `target`.

        Iterates leaving the disc of radius `escape_radius` count as diverged.

        Returns (x0, residual, jacobian, outcome) arrays; outcome codes are the
        module constants CONVERGED, DIVERGED, NONCONVERGED, CAUSTIC, MERGED.
        """
        cfg = self.config
        target = np.broadcast_to(np.asarray(target, dtype=float), np.shape(np.atleast_1d(seeds))).copy()
        z = np.atleast_1d(np.asarray(seeds, dtype=complex)).copy()
        n = z.size
        residual = np.full(n, np.inf)
        jac = np.full(n, np.nan + 0j)
        outcome = np.full(n, NONCONVERGED)
        active = np.ones(n, dtype=bool)
        escape = np.inf if escape_radius is None else escape_radius
        loose = np.ones(n, dtype=bool) if cfg.loose_rtol > self.engine.stepper.rtol else np.zeros(n, dtype=bool)
        for _ in range(cfg.max_iter + 1):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            xf = np.empty(idx.size, dtype=complex)
            M = np.empty(idx.size, dtype=complex)
            st = np.empty(idx.size, dtype=np.int64)
            for flag in (True, False):
                sel = loose[idx] == flag
                if sel.any():
                    xf[sel], M[sel], st[sel] = self.landing_map(z[idx[sel]], loose=flag)
            bad = st != _kernels.OK
            outcome[idx[bad]] = DIVERGED
            active[idx[bad]] = False
            good = ~bad
            idx, xf, M = idx[good], xf[good], M[good]
            r = np.abs(xf - target[idx])
            residual[idx] = r
            jac[idx] = M
            done = (r <= cfg.tol) & ~loose[idx]
            outcome[idx[done]] = CONVERGED
            active[idx[done]] = False
            keep = ~done
            idx, xf, M, r = idx[keep], xf[keep], M[keep], r[keep]
            caustic = np.abs(M) < cfg.caustic_tol
            outcome[idx[caustic]] = CAUSTIC
            active[idx[caustic]] = False
            idx, xf, M, r = idx[~caustic], xf[~caustic], M[~caustic], r[~caustic]
            loose[idx[r < cfg.stage_switch]] = False
            z[idx] = z[idx] - (xf - target[idx]) / M
            finite = np.isfinite(z[idx]) & (np.abs(z[idx]) <= escape)
            outcome[idx[~finite]] = DIVERGED
            active[idx[~finite]] = False
            self._merge_duplicates(z, target, active, outcome)
        # anything still active used up its iterations
        return z, residual, jac, outcome

    def _merge_duplicates(self, z, target, active, outcome):
        idx = np.flatnonzero(active)
        if idx.size < 2:
            return
        q = self.config.cluster_tol * 1e-3
        keys = np.stack([np.round(z[idx].real / q), np.round(z[idx].imag / q), target[idx]], axis=1)
        _, first = np.unique(keys, axis=0, return_index=True)
        dup = np.ones(idx.size, dtype=bool)
        dup[first] = False
        outcome[idx[dup]] = MERGED
        active[idx[dup]] = False

    def refine(self, seed: complex, target: float) -> BranchRoot:
        """Newton from a single seed; raises on failure."""
        if not np.isfinite(seed):
            raise InvalidInputError("seed must be finite")
        z, res, M, out = self.newton_batch([seed], target)
        o = out[0]
        if o == CONVERGED:
            return BranchRoot(complex(z[0]), float(target), self.t_f, float(res[0]), -1, complex(M[0]))
        if o == DIVERGED:
            raise DivergenceError(f"Newton from seed {seed} hit a divergent trajectory")
        if o == CAUSTIC:
            raise CausticError(f"trajectory Jacobian vanished during Newton from seed {seed}")
        raise NonConvergenceError(f"Newton from seed {seed} did not converge in {self.config.max_iter} iterations",
                                  residual=float(res[0]))

    def grid_roots(self, target: float, seeds=None) -> DiscoveryResult:
        """All distinct roots for `target` reachable from the seed grid, sorted by Im(x0)."""
        seeds = self.config.seeds() if seeds is None else np.asarray(seeds, dtype=complex)
        x0, x1, y0, y1 = self.config.seed_box
        radius = self.config.escape_factor * max(abs(complex(a, b)) for a in (x0, x1) for b in (y0, y1))
        z, res, M, out = self.newton_batch(seeds, target, escape_radius=radius)
        counts = {name: int(np.sum(out == code)) for name, code in
                  (("converged", CONVERGED), ("diverged", DIVERGED), ("nonconverged", NONCONVERGED),
                   ("caustic", CAUSTIC), ("merged", MERGED))}
        ok = np.flatnonzero(out == CONVERGED)
        roots = cluster_roots(z[ok], res[ok], M[ok], self.config.cluster_tol)
        found = [BranchRoot(complex(zz), float(target), self.t_f, float(rr), -1, complex(mm)) for zz, rr, mm in roots]
        found.sort(key=lambda r: (r.x0.imag, r.x0.real))
        return DiscoveryResult(found, int(seeds.size), counts, list(found))

    def family_roots(self, targets) -> List[List[BranchRoot]]:
        """Branch family at each target, followed in time from the short-time limit.

        Roots that cannot be followed to ``t_f`` are left out (and logged).
        """
        cfg, eng = self.config, self.engine
        spec, m = eng.spec, eng.layout.mass
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        ts = min(cfg.short_time, self.t_f) if self.t_f > 0 else 0.0
        u = np.asarray(cfg.secondary_seeds if cfg.secondary_seeds is not None
                       else short_time_secondaries(eng.potential, m), dtype=complex)
        if ts == 0:
            # at t_f = 0 the landing map is the identity: only the real root exists
            u = u[:0]
        # free-flight estimate for the real root
        spread = 1 + 2j * spec.alpha0 * spec.hbar * ts / m
        real = spec.xc + (targets - spec.xc - spec.pc * ts / m) / spread
        k = 1 + u.size
        seeds = np.empty((targets.size, k), dtype=complex)
        seeds[:, 0] = real
        if u.size:
            seeds[:, 1:] = u[None, :] / ts
        X = np.repeat(targets, k)
        z, res, M, out = RootFinder(eng, ts, cfg).newton_batch(seeds.ravel(), X)
        if ts < self.t_f:
            ok = out == CONVERGED
            z2, res2, M2, out2 = continue_in_time(eng, z[ok], X[ok], ts, self.t_f, cfg)
            z[ok], res[ok], M[ok], out[ok] = z2, res2, M2, out2
        result = []
        for i, Xi in enumerate(targets):
            sl = slice(i * k, (i + 1) * k)
            fam = [BranchRoot(complex(zz), float(Xi), self.t_f, float(rr), -1, complex(mm))
                   for zz, rr, mm, oo in zip(z[sl], res[sl], M[sl], out[sl]) if oo == CONVERGED]
            if len(fam) < k:
                logger.warning("%d of %d family roots for target %g could not be followed to t_f=%g",
                               k - len(fam), k, Xi, self.t_f)
            # time continuation can in principle land two members on one root
            kept = cluster_roots([r.x0 for r in fam], [r.residual for r in fam], [r.jacobian for r in fam],
                                 cfg.cluster_tol)
            fam = [r for r in fam if any(r.x0 == q[0] for q in kept)]
            fam.sort(key=lambda r: (r.x0.imag, r.x0.real))
            result.append(fam)
        return result

    def discover(self, target: float, seeds=None) -> DiscoveryResult:
        """Branch family for `target` (sorted by Im(x0)) plus the raw grid roots.

        ``counts["family_on_grid"]`` reports how many family members the seed
        grid found independently.
        """
        cfg = self.config
        here = self.grid_roots(target, seeds)
        if cfg.family == "grid":
            if not here.roots:
                logger.warning("no roots found for target %g at t_f=%g: %s", target, self.t_f, here.counts)
            return here
        fam = self.family_roots([target])[0]
        counts = dict(here.counts)
        counts["family_on_grid"] = sum(
            any(abs(f.x0 - r.x0) <= cfg.cluster_tol * (1 + abs(f.x0)) for r in here.raw) for f in fam)
        if not fam:
            logger.warning("no roots found for target %g at t_f=%g: %s", target, self.t_f, counts)
        return DiscoveryResult(fam, here.n_seeds, counts, here.raw)


def short_time_secondaries(potential, mass: float = 1.0) -> np.ndarray:
    """Limits of x0 * t for the secondary branches as t -> 0.

    Only quartic potentials are covered; other degrees return an empty array
    (lower degrees have no secondary branches at all).
    """
    if potential.degree != 4:
        return np.zeros(0, dtype=complex)
    c = complex(potential.coefficients[4])
    a = np.sqrt(mass / (2 * c)) * LEMNISCATE_QUARTER
    return np.array([a * (1 - 2j), -a * (1 - 2j)])


def continue_in_time(engine: TrajectoryEngine, x0, targets, t_from: float, t_to: float,
                     config: RootSearchConfig = RootSearchConfig(), max_steps: int = 5000):
    """Follow roots of x(t; x0) = target from t_from to t_to at fixed targets.

    Each step predicts with dx0/dt = -v(t)/M(t) and corrects with Newton at
    the new time. A step is accepted when every root converges within
    ``time_step_tol * (1 + |x0|)`` of its prediction; otherwise the step
    shrinks. Roots that still fail at the minimum step are dropped with
    their failure outcome. Returns (x0, residual, jacobian, outcome).
    """
    z = np.atleast_1d(np.asarray(x0, dtype=complex)).copy()
    X = np.atleast_1d(np.asarray(targets, dtype=float))
    n = z.size
    res = np.zeros(n)
    jac = np.full(n, np.nan + 0j)
    outcome = np.full(n, CONVERGED)
    span = t_to - t_from
    if n == 0 or span == 0:
        return z, res, jac, outcome
    minv = 1.0 / engine.layout.mass
    h = span / 50
    h_min = abs(span) * 1e-7
    t = t_from
    active = np.arange(n)
    Y, st = engine.flow_vectors(z, t)
    for _ in range(max_steps):
        if active.size == 0 or (t_to - t) * np.sign(span) <= 0:
            break
        tn = t + h
        if (tn - t_to) * np.sign(span) > 0:
            tn = t_to
        pred = z[active] - (tn - t) * Y[active, 1] * minv / Y[active, 2]
        zz, rr, MM, oo = RootFinder(engine, tn, config).newton_batch(pred, X[active])
        good = (oo == CONVERGED) & (np.abs(zz - pred) <= config.time_step_tol * (1 + np.abs(z[active])))
        if good.all():
            z[active], res[active], jac[active] = zz, rr, MM
            Y[active], _ = engine.flow_vectors(zz, tn)
            t = tn
            h *= 1.5
            continue
        if abs(h) * 0.3 >= h_min:
            h *= 0.3
            continue
        bad = active[~good]
        outcome[bad] = np.where(oo[~good] == CONVERGED, NONCONVERGED, oo[~good])
        logger.info("time continuation dropped %d roots at t=%g", bad.size, t)
        active = active[good]
        h = span / 50
    else:
        outcome[active] = NONCONVERGED
    return z, res, jac, outcome


def cluster_roots(z, residual, jac, tol):
    """Greedy clustering in input order; keeps the lowest-residual member."""
    reps = []
    for zz, rr, mm in zip(z, residual, jac):
        for i, (rz, rres, rm) in enumerate(reps):
            if abs(zz - rz) <= tol:
                if rr < rres:
                    reps[i] = (zz, rr, mm)
                break
        else:
            reps.append((zz, rr, mm))
    return reps


def newton_refine(seed: complex, target: float, t_f: float, engine: TrajectoryEngine,
                  config: RootSearchConfig = RootSearchConfig()) -> BranchRoot:
    return RootFinder(engine, t_f, config).refine(seed, target)


def discover_branches(target: float, t_f: float, engine: TrajectoryEngine,
                      config: RootSearchConfig = RootSearchConfig()) -> DiscoveryResult:
    return RootFinder(engine, t_f, config).discover(target)


def real_landing_point(engine: TrajectoryEngine, t_f: float) -> float:
    """Where the trajectory started at the packet centre lands (it stays real)."""
    xf, _, st = engine.flow_batch([engine.spec.xc + 0j], t_f)
    if st[0] != _kernels.OK:
        raise DivergenceError("real trajectory diverged")
    return float(xf[0].real)


def sweep(targets, t_f: float, engine: TrajectoryEngine,
          config: RootSearchConfig = RootSearchConfig()) -> List[BranchCurve]:
    """Continue every branch across an ascending target grid.

    Branches present at the first target are found by discovery (the
    short-time family, or the raw grid in "grid" mode); every
    `rediscover_every` targets discovery is repeated and unmatched roots
    start new curves, which are also continued backwards. A curve that
    fails to converge or jumps further than `jump_factor` times the
    Jacobian-predicted step is truncated and flagged.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim != 1 or targets.size == 0:
        raise InvalidInputError("targets must be a non-empty 1D grid")
    if np.any(np.diff(targets) <= 0):
        raise InvalidInputError("targets must be strictly ascending")
    finder = RootFinder(engine, t_f, config)
    curves: List[_Track] = []

    def match(root, j):
        scale = config.cluster_tol * (1 + abs(root.x0))
        return any(c.points.get(j) is not None and abs(c.points[j].x0 - root.x0) <= scale for c in curves)

    found_at = {}
    probe = list(range(0, targets.size, config.rediscover_every))
    if config.family == "short-time":
        for j, fam in zip(probe, finder.family_roots(targets[probe])):
            found_at[j] = fam
    for j, X in enumerate(targets):
        live = [c for c in curves if c.alive and c.last_index == j - 1]
        if live:
            seeds = np.array([c.points[j - 1].x0 for c in live])
            z, res, M, out = finder.newton_batch(seeds, np.full(seeds.size, X))
            for c, zz, rr, mm, oo in zip(live, z, res, M, out):
                c.advance(j, X, zz, rr, mm, oo, targets, t_f, config)
            _dedupe_tracks(curves, j, config)
        if j % config.rediscover_every == 0:
            fresh = found_at[j] if j in found_at else finder.grid_roots(X).roots
            for root in fresh:
                if not match(root, j):
                    track = _Track(len(curves))
                    track.points[j] = root
                    track.last_index = j
                    curves.append(track)
                    _backfill(track, finder, targets, j, t_f, config, curves)
    out = [c.to_curve(targets) for c in curves if c.points]
    return label_branches(out, engine, t_f, config)


class _Track:
    def __init__(self, tid):
        self.tid = tid
        self.points = {}
        self.alive = True
        self.last_index = -1
        self.flags = []

    def advance(self, j, X, z, res, M, outcome, targets, t_f, config):
        prev = self.points[j - 1]
        if outcome != CONVERGED:
            self.alive = False
            self.flags.append(f"lost convergence at target {X:.6g} (outcome {outcome})")
            return
        step = abs(targets[j] - targets[j - 1]) / max(abs(prev.jacobian), 1e-300)
        if abs(z - prev.x0) > config.jump_factor * step + config.cluster_tol:
            self.alive = False
            self.flags.append(f"continuation jump at target {X:.6g}")
            return
        self.points[j] = BranchRoot(complex(z), float(X), t_f, float(res), -1, complex(M))
        self.last_index = j

    def to_curve(self, targets):
        keys = sorted(self.points)
        return BranchCurve(-1, SECONDARY, [self.points[k] for k in keys], list(self.flags))


def _dedupe_tracks(tracks, j, config):
    """Two tracks that continued onto the same root: keep the older one."""
    seen = []
    for c in tracks:
        p = c.points.get(j)
        if p is None or not c.alive:
            continue
        if any(abs(p.x0 - q.x0) <= config.cluster_tol * (1 + abs(p.x0)) for q in seen):
            del c.points[j]
            c.alive = False
            c.last_index = j - 1
            c.flags.append(f"merged into another branch at target {p.target:.6g}")
        else:
            seen.append(p)


def _backfill(track, finder, targets, j, t_f, config, tracks):
    """Continue a newly discovered root toward smaller targets."""
    k = j - 1
    while k >= 0:
        nxt = track.points[k + 1]
        z, res, M, out = finder.newton_batch([nxt.x0], [targets[k]])
        if out[0] != CONVERGED:
            break
        step = abs(targets[k + 1] - targets[k]) / max(abs(nxt.jacobian), 1e-300)
        if abs(z[0] - nxt.x0) > config.jump_factor * step + config.cluster_tol:
            break
        tol = config.cluster_tol * (1 + abs(z[0]))
        if any(o is not track and o.points.get(k) is not None and abs(o.points[k].x0 - z[0]) <= tol for o in tracks):
            break
        track.points[k] = BranchRoot(complex(z[0]), float(targets[k]), t_f, float(res[0]), -1, complex(M[0]))
        k -= 1


def label_branches(curves: List[BranchCurve], engine: TrajectoryEngine, t_f: float,
                   config: RootSearchConfig = RootSearchConfig()) -> List[BranchCurve]:
    """Assign kinds and ids: 0 for the real branch, then secondaries by distance from the real axis.

    A curve is the real branch when continuing it to the real trajectory's
    landing point lands on the packet centre.
    """
    if not curves:
        return curves
    xc = engine.spec.xc
    finder = RootFinder(engine, t_f, config)
    try:
        x_land = real_landing_point(engine, t_f)
    except DivergenceError:
        x_land = None
    real = None
    if x_land is not None:
        for c in curves:
            if _continues_to(c, x_land, finder, xc, config):
                real = c
                break
    for c in curves:
        c.kind = REAL_BRANCH if c is real else SECONDARY
    secondaries = sorted((c for c in curves if c is not real),
                         key=lambda c: (float(np.median(np.abs(c.x0.imag))), c.points[0].target))
    ordered = ([real] if real is not None else []) + secondaries
    for i, c in enumerate(ordered, start=0 if real is not None else 1):
        c.branch_id = i
        for p in c.points:
            p.branch_id = i
    return ordered


def _continues_to(curve: BranchCurve, x_land: float, finder: RootFinder, xc: float, config) -> bool:
    t = curve.targets
    i = int(np.argmin(np.abs(t - x_land)))
    z = curve.points[i].x0
    X = t[i]
    # march in small increments so the continuation stays on this branch
    n = max(1, int(np.ceil(abs(x_land - X) / 0.05)))
    for s in range(1, n + 1):
        Xs = X + (x_land - X) * s / n
        zz, res, M, out = finder.newton_batch([z], [Xs])
        if out[0] != CONVERGED:
            return False
        z = zz[0]
    return abs(z - xc) <= max(1e-6, 100 * config.tol)
