"""Branch amplitudes, pruning and superposition into the CTM wavefunction.

Each branch contributes exp(i S / hbar) with S = sum_j hbar^j S_j evaluated
at the end of its trajectory. Phases are stored and amplitudes formed late,
since Im(S) easily reaches several hundred for distant branches.

Which branches to keep is a heuristic: a secondary branch is dropped where
it is negligible, and from the point where, walking away from its smallest
amplitude, it grows past the largest real-branch amplitude.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Sequence

import numpy as np

from . import _kernels
from .engine import TrajectoryEngine
from .errors import ContractError, InvalidInputError
from .hierarchy import HierarchyLayout, HierarchyState
from .roots import REAL_BRANCH, SECONDARY, BranchCurve

logger = logging.getLogger(__name__)

NEGLIGIBLE = "negligible"
DIVERGENT = "divergent"


@dataclass
class BranchContribution:
    """Phase of one branch at one real target; NaN phase marks a diverged trajectory."""

    branch_id: int
    target: float
    S_total: complex
    hbar: float = 1.0
    kind: str = SECONDARY

    @property
    def im_S(self) -> float:
        return float(np.imag(self.S_total))

    @property
    def log_abs(self) -> float:
        """ln |amplitude|."""
        return -self.im_S / self.hbar

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.S_total))

    @property
    def amplitude(self) -> complex:
        with np.errstate(over="ignore", invalid="ignore"):
            return complex(np.exp(1j * self.S_total / self.hbar))


@dataclass(frozen=True)
class PruningPolicy:
    """Thresholds for dropping secondary branches.

    negligible_rel : a secondary amplitude below this fraction of the largest
        real-branch amplitude is dropped at that target.
    divergence_factor : walking outward from a secondary branch's smallest
        amplitude, the first target where it exceeds this multiple of the
        largest real-branch amplitude while still growing is dropped, together
        with every target beyond it.
    """

    negligible_rel: float = 1e-12
    divergence_factor: float = 1.0
    enabled: bool = True

    def __post_init__(self):
        if not (self.negligible_rel > 0 and self.divergence_factor > 0):
            raise InvalidInputError("pruning thresholds must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class WavefunctionProfile:
    """CTM wavefunction on a real target grid together with its ingredients."""

    targets: np.ndarray
    psi: np.ndarray
    per_branch: List[List[BranchContribution]]
    pruned: List[List[tuple]]
    t_f: float = float("nan")
    order: int = -1
    triggers: Dict[int, List[float]] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    # every contribution per target, pruned ones included
    contributions: List[List[BranchContribution]] = None

    def __post_init__(self):
        if self.contributions is None:
            self.contributions = self.per_branch

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    @property
    def branch_ids(self) -> List[int]:
        ids = {c.branch_id for row in self.per_branch for c in row}
        ids |= {b for row in self.pruned for b, _ in row}
        return sorted(ids)

    def _lookup(self, branch_id: int, attr: str) -> np.ndarray:
        out = np.full(self.targets.size, np.nan)
        for i, row in enumerate(self.contributions):
            for c in row:
                if c.branch_id == branch_id:
                    out[i] = getattr(c, attr)
        return out

    def branch_abs(self, branch_id: int) -> np.ndarray:
        """|amplitude| of one branch at every target (NaN where absent), pruned or not."""
        return np.exp(self._lookup(branch_id, "log_abs"))

    def branch_im_S(self, branch_id: int) -> np.ndarray:
        return self._lookup(branch_id, "im_S")

    def is_pruned(self, branch_id: int) -> np.ndarray:
        return np.array([any(b == branch_id for b, _ in row) for row in self.pruned])


def branch_amplitude(final_state: HierarchyState, layout: HierarchyLayout, branch_id: int = -1,
                     target: float = None, kind: str = SECONDARY) -> BranchContribution:
    """Contribution of one trajectory: S = sum_j hbar^j S_j at its end point."""
    if final_state.values.shape != (layout.n_slots,):
        raise ContractError("final state does not match the layout")
    S = sum(layout.hbar**j * final_state.slot(layout, j, 0) for j in range(layout.order + 1))
    if not np.all(np.isfinite(final_state.values)):
        S = complex(np.nan, np.nan)
    if target is None:
        target = float(np.real(final_state.x))
    return BranchContribution(branch_id, float(target), complex(S), layout.hbar, kind)


def evaluate_curves(curves: Sequence[BranchCurve], engine: TrajectoryEngine,
                    t_f: float) -> Dict[int, List[BranchContribution]]:
    """Propagate every root of every curve at the engine's order and collect contributions."""
    L = engine.layout
    out = {}
    for c in curves:
        if not c.points:
            out[c.branch_id] = []
            continue
        res = engine.propagate_batch(c.x0, t_f)
        S = sum(L.hbar**j * res.slot(j, 0) for j in range(L.order + 1))
        S = np.where(res.status == _kernels.OK, S, np.nan + 0j)
        out[c.branch_id] = [BranchContribution(c.branch_id, p.target, complex(s), L.hbar, c.kind)
                            for p, s in zip(c.points, S)]
    return out


def assemble(contributions: Mapping[int, Sequence[BranchContribution]], targets,
             policy: PruningPolicy = PruningPolicy(), t_f: float = float("nan"),
             order: int = -1) -> WavefunctionProfile:
    """Superpose branch amplitudes on `targets` after applying `policy`.

    The real branch is always included. Contributions whose target is not in
    `targets` are ignored.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim != 1 or targets.size == 0:
        raise InvalidInputError("targets must be a non-empty 1D grid")
    index = {float(x): i for i, x in enumerate(targets)}
    n = targets.size
    table: Dict[int, List] = {}
    kinds = {}
    for bid, row in contributions.items():
        slots = [None] * n
        for c in row:
            i = index.get(float(c.target))
            if i is not None:
                slots[i] = c
        table[bid] = slots
        kinds[bid] = next((c.kind for c in row), SECONDARY)
    real_ids = [b for b, k in kinds.items() if k == REAL_BRANCH]
    ref_ids = real_ids or list(table)
    if not real_ids:
        logger.warning("no real branch among the contributions; thresholds use all branches")
    ref_logs = [c.log_abs for b in ref_ids for c in table[b] if c is not None and c.finite]
    log_max_real = max(ref_logs) if ref_logs else 0.0

    drop = {b: [None] * n for b in table}
    triggers: Dict[int, List[float]] = {}
    if policy.enabled:
        log_neg = np.log(policy.negligible_rel) + log_max_real
        log_div = np.log(policy.divergence_factor) + log_max_real
        for bid, slots in table.items():
            if bid in real_ids:
                continue
            la = np.array([c.log_abs if c is not None and c.finite else np.nan for c in slots])
            present = np.array([c is not None for c in slots])
            for i in np.flatnonzero(present & (la < log_neg)):
                drop[bid][i] = NEGLIGIBLE
            hit, trig = _divergence_cut(la, present, log_div)
            for i in hit:
                drop[bid][i] = DIVERGENT
            if trig:
                triggers[bid] = [float(targets[i]) for i in trig]

    psi = np.zeros(n, dtype=complex)
    per_branch: List[List[BranchContribution]] = [[] for _ in range(n)]
    everything: List[List[BranchContribution]] = [[] for _ in range(n)]
    pruned: List[List[tuple]] = [[] for _ in range(n)]
    for bid in sorted(table):
        for i, c in enumerate(table[bid]):
            if c is None:
                continue
            everything[i].append(c)
            reason = drop[bid][i]
            if reason is None and not c.finite:
                reason = DIVERGENT
            if reason is not None and bid not in real_ids:
                pruned[i].append((bid, reason))
                continue
            per_branch[i].append(c)
            psi[i] += c.amplitude
    meta = {"policy": policy.to_dict(), "log_max_real": log_max_real,
            "note": "pruning is a heuristic stand-in; no analytic criterion is known"}
    return WavefunctionProfile(targets, psi, per_branch, pruned, t_f, order, triggers, meta, everything)


def _divergence_cut(la: np.ndarray, present: np.ndarray, log_div: float):
    """Indices dropped by the outward divergence walk, and the index that triggered each walk.

    NaN log-amplitudes (diverged trajectories) trigger immediately.
    """
    finite = present & np.isfinite(la)
    if not finite.any():
        hit = list(np.flatnonzero(present))
        return hit, hit[:1]
    start = int(np.nanargmin(np.where(finite, la, np.nan)))
    cut, trig = [], []
    for step in (1, -1):
        prev = la[start]
        i = start + step
        while 0 <= i < la.size:
            if present[i]:
                grow = np.isfinite(la[i]) and la[i] > prev
                if not np.isfinite(la[i]) or (grow and la[i] > log_div):
                    rest = range(i, la.size) if step > 0 else range(i, -1, -1)
                    cut.extend(j for j in rest if present[j])
                    trig.append(i)
                    break
                prev = la[i]
            i += step
    return sorted(cut), trig


def imag_phase_profile(contributions: Sequence[BranchContribution]) -> List[tuple]:
    """(target, Im S) pairs along one branch, in target order."""
    rows = sorted(((c.target, c.im_S) for c in contributions), key=lambda r: r[0])
    return rows
