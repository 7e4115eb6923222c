"""Complex classical trajectories carrying the phase hierarchy.

The integrated vector is ``[x, D(slot_0), ..., M, P]``. ``M = dx(t)/dx(0)``
is the trajectory Jacobian and ``P = dp(t)/dx(0)`` its conjugate
sensitivity; together they solve the linearised equations of motion
``dM/dt = P/m``, ``dP/dt = -V''(x) M`` with ``M(0) = 1`` and
``P(0) = d^2 S_0/dx^2`` at the initial point, so that ``P/M`` reproduces the
S_0'' slot along the trajectory.
"""
from __future__ import annotations

import cmath
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DivergenceError, InvalidInputError, NonConvergenceError
from .hierarchy import HierarchyLayout, HierarchyState, build_layout, extend_tables, tables_for
from .potential import PotentialModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WavepacketSpec:
    """Initial Gaussian exp[-alpha0 (x-xc)^2 + i pc (x-xc)/hbar + i gamma0/hbar].

    ``gamma0=None`` selects the normalising constant
    ``-(i hbar / 4) ln(2 alpha0 / pi)``.
    """

    alpha0: complex = 1.0
    xc: float = 0.0
    pc: float = 5.0
    gamma0: Optional[complex] = None
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if not complex(self.alpha0).real > 0:
            raise InvalidInputError(f"Re(alpha0) must be positive for a normalisable Gaussian, got {self.alpha0}")
        if not (self.mass > 0 and self.hbar > 0):
            raise InvalidInputError("mass and hbar must be positive")
        if self.gamma0 is None:
            g = -0.25j * self.hbar * cmath.log(2 * complex(self.alpha0) / np.pi)
            object.__setattr__(self, "gamma0", g)

    def S0(self, x):
        d = np.asarray(x) - self.xc
        return 1j * self.alpha0 * self.hbar * d**2 + self.pc * d + self.gamma0

    def dS0(self, x):
        return 2j * self.alpha0 * self.hbar * (np.asarray(x) - self.xc) + self.pc

    @property
    def ddS0(self) -> complex:
        return 2j * complex(self.alpha0) * self.hbar

    def psi(self, x):
        return np.exp(1j * self.S0(x) / self.hbar)

    def to_dict(self) -> dict:
        a = complex(self.alpha0)
        return {"alpha0": a.real if a.imag == 0 else [a.real, a.imag], "xc": self.xc, "pc": self.pc,
                "mass": self.mass, "hbar": self.hbar}


@dataclass(frozen=True)
class StepperConfig:
    """Integrator settings.

    ``method`` is ``"dopri5"`` (adaptive, default) or ``"rk4"`` (fixed step
    ``dt``, bitwise reproducible step sequence).
    """

    method: str = "dopri5"
    rtol: float = 1e-10
    atol: float = 1e-10
    dt: float = 1e-3
    max_steps: int = 200_000
    guard: float = 1e15
    path_samples: int = 100

    def __post_init__(self):
        if self.method not in ("dopri5", "rk4"):
            raise InvalidInputError(f"unknown stepper method {self.method!r}")
        if not (self.rtol > 0 and self.atol > 0 and self.dt > 0 and self.guard > 0):
            raise InvalidInputError("stepper tolerances, dt and guard must be positive")


@dataclass
class TrajectoryResult:
    x0: complex
    xf: complex
    final_state: HierarchyState
    jacobian: complex
    step_count: int
    path: Optional[list] = None


@dataclass
class BatchResult:
    """Final vectors of a batch of trajectories, with per-row status."""

    x0: np.ndarray
    Y: np.ndarray
    status: np.ndarray
    t_reached: np.ndarray
    steps: np.ndarray
    layout: HierarchyLayout
    t_f: float
    paths: Optional[np.ndarray] = None
    path_times: Optional[np.ndarray] = None

    @property
    def ok(self) -> np.ndarray:
        return self.status == _kernels.OK

    @property
    def xf(self) -> np.ndarray:
        return self.Y[:, 0]

    @property
    def jacobian(self) -> np.ndarray:
        return self.Y[:, -2]

    def slot(self, n: int, k: int) -> np.ndarray:
        return self.Y[:, self.layout.state_index(n, k)]

    def state(self, i: int) -> HierarchyState:
        return HierarchyState(complex(self.Y[i, 0]), self.Y[i, 1:-2].copy(), float(self.t_reached[i]))


class TrajectoryEngine:
    """Propagates batches of trajectories for one (spec, potential, layout)."""

    def __init__(self, spec: WavepacketSpec, potential: PotentialModel, layout: HierarchyLayout,
                 stepper: StepperConfig = StepperConfig()):
        if layout.mass != spec.mass or layout.hbar != spec.hbar:
            raise InvalidInputError("layout and wavepacket disagree on mass/hbar")
        self.spec = spec
        self.potential = potential
        self.layout = layout
        self.stepper = stepper
        n = layout.n_unknowns
        self.i_M, self.i_P = n, n + 1
        self.tables = extend_tables(
            tables_for(layout),
            l=[(self.i_M, self.i_P, 1.0 / layout.mass)],
            p=[(self.i_P, 2, self.i_M, -1.0)],
        )
        kmax = max(self.tables.max_potential_order, 2)
        self._dcoef = potential.derivative_table(kmax)

    @property
    def n_vars(self) -> int:
        return self.layout.n_unknowns + 2

    def initial_vectors(self, x0) -> np.ndarray:
        x0 = np.atleast_1d(np.asarray(x0, dtype=complex))
        if not np.all(np.isfinite(x0)):
            raise InvalidInputError("initial positions must be finite")
        L, spec = self.layout, self.spec
        Y = np.zeros((x0.size, self.n_vars), dtype=complex)
        Y[:, 0] = x0
        Y[:, L.state_index(0, 0)] = spec.S0(x0)
        Y[:, L.state_index(0, 1)] = spec.dS0(x0)
        if L.has(0, 2):
            Y[:, L.state_index(0, 2)] = spec.ddS0
        Y[:, self.i_M] = 1.0
        Y[:, self.i_P] = spec.ddS0
        return Y

    def rhs_vectors(self, Y: np.ndarray) -> np.ndarray:
        return _kernels.rhs_batch(np.ascontiguousarray(Y, dtype=complex), self._dcoef, self.tables.arrays())

    def _advance(self, Y, duration, h_init=None, mode=_kernels.TABLES, rtol=None, atol=None, method=None):
        s = self.stepper
        minv = 1.0 / self.layout.mass
        if (method or s.method) == "rk4":
            n_steps = int(round(duration / s.dt)) if duration > 0 else 0
            Y, t, steps, status = _kernels.rk4_batch(mode, minv, Y, float(duration), n_steps, s.guard,
                                                     self._dcoef, self.tables.arrays())
            return Y, t, steps, status, np.full(len(Y), s.dt)
        if h_init is None:
            h_init = np.zeros(len(Y))
        return _kernels.dopri5_batch(mode, minv, Y, float(duration), rtol or s.rtol, atol or s.atol, h_init,
                                     s.max_steps, s.guard, self._dcoef, self.tables.arrays())

    def flow_vectors(self, x0, t_f: float, rtol: float = None, atol: float = None):
        """Classical flow only: returns ([x, p, M, P] at t_f, status) per initial point.

        Trajectories do not depend on the expansion order, so root searches
        integrate just these four components. The flow is always integrated
        adaptively: root searches start from |x0| of order 1e4 at short
        times, where no fixed step is adequate.
        """
        x0 = np.atleast_1d(np.asarray(x0, dtype=complex))
        Y = np.empty((x0.size, 4), dtype=complex)
        Y[:, 0] = x0
        Y[:, 1] = self.spec.dS0(x0)
        Y[:, 2] = 1.0
        Y[:, 3] = self.spec.ddS0
        Y, t, steps, status, _ = self._advance(Y, t_f, mode=_kernels.FLOW, rtol=rtol, atol=atol,
                                                method="dopri5")
        return Y, status

    def flow_batch(self, x0, t_f: float, rtol: float = None, atol: float = None):
        """Returns (x(t_f), M(t_f), status) per initial point."""
        Y, status = self.flow_vectors(x0, t_f, rtol, atol)
        return Y[:, 0], Y[:, 2], status

    def propagate_batch(self, x0, t_f: float, trace: bool = False) -> BatchResult:
        """Integrate every initial position in `x0` to `t_f` without raising.

        Rows that blow up or exhaust the step budget keep their last finite
        vector and carry a non-zero status (see :mod:`ctwkb._kernels`).
        """
        if not np.isfinite(t_f) or t_f < 0:
            raise InvalidInputError(f"final time must be finite and non-negative, got {t_f}")
        x0 = np.atleast_1d(np.asarray(x0, dtype=complex))
        Y = self.initial_vectors(x0)
        if not trace:
            Y, t, steps, status, _ = self._advance(Y, t_f)
            return BatchResult(x0, Y, status, t, steps, self.layout, t_f)
        n_seg = max(1, int(self.stepper.path_samples))
        times = np.linspace(0.0, t_f, n_seg + 1)
        paths = np.empty((len(x0), n_seg + 1), dtype=complex)
        paths[:, 0] = Y[:, 0]
        t_tot = np.zeros(len(x0))
        steps = np.zeros(len(x0), dtype=np.int64)
        status = np.zeros(len(x0), dtype=np.int64)
        h = None
        for j in range(n_seg):
            alive = status == _kernels.OK
            Yn, t, st, stat, h_last = self._advance(Y[alive], times[j + 1] - times[j],
                                                    None if h is None else h[alive])
            Y[alive] = Yn
            t_tot[alive] += t
            steps[alive] += st
            status[alive] = stat
            if h is None:
                h = np.zeros(len(x0))
            h[alive] = np.where(h_last > 0, h_last, 0.0)
            paths[:, j + 1] = Y[:, 0]
            paths[~(status == _kernels.OK), j + 1] = np.nan
        return BatchResult(x0, Y, status, t_tot, steps, self.layout, t_f, paths, times)

    def propagate(self, x0: complex, t_f: float, trace: bool = False) -> TrajectoryResult:
        """Integrate one trajectory, raising on blow-up or step exhaustion."""
        res = self.propagate_batch([x0], t_f, trace=trace)
        st = int(res.status[0])
        if st in (_kernels.BLOWUP, _kernels.STEP_UNDERFLOW):
            raise DivergenceError(f"trajectory from x0={x0} diverged at t={res.t_reached[0]:.6g}",
                                  t_blowup=float(res.t_reached[0]))
        if st == _kernels.MAX_STEPS:
            raise NonConvergenceError(f"trajectory from x0={x0} exceeded {self.stepper.max_steps} steps")
        path = None
        if trace:
            path = list(zip(res.path_times.tolist(), res.paths[0].tolist()))
        return TrajectoryResult(complex(x0), complex(res.xf[0]), res.state(0), complex(res.jacobian[0]),
                                int(res.steps[0]), path)


def initial_state(spec: WavepacketSpec, x0: complex, layout: HierarchyLayout) -> HierarchyState:
    """Hierarchy values of the Gaussian at position `x0` and t = 0."""
    if not complex(spec.alpha0).real > 0:
        raise InvalidInputError("Re(alpha0) must be positive")
    engine = TrajectoryEngine(spec, _ZERO, layout)
    y = engine.initial_vectors([x0])[0]
    return HierarchyState(complex(y[0]), y[1:-2], 0.0)


def propagate(spec: WavepacketSpec, x0: complex, t_f: float, layout: HierarchyLayout,
              potential: PotentialModel, stepper: StepperConfig = StepperConfig(),
              trace: bool = False) -> TrajectoryResult:
    return TrajectoryEngine(spec, potential, layout, stepper).propagate(x0, t_f, trace=trace)


def classical_energy(state: HierarchyState, layout: HierarchyLayout, potential: PotentialModel) -> complex:
    p = state.slot(layout, 0, 1)
    return p * p / (2 * layout.mass) + potential(state.x)


def layout_for(spec: WavepacketSpec, order: int) -> HierarchyLayout:
    return build_layout(order, spec.mass, spec.hbar)


_ZERO = PotentialModel((0.0,), "free")
