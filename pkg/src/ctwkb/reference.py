"""Exact benchmarks: split-operator propagation and closed-form Gaussians.

The split-operator solver works on a periodic grid, so the wavefunction
must stay negligible at both box edges; this is checked after every step.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.interpolate import CubicSpline

from .engine import WavepacketSpec
from .errors import AliasingError, CapabilityError, InvalidInputError, UndefinedMetricError
from .potential import PotentialModel

EDGE_TOL = 1e-10


@dataclass
class GridWavefunction:
    """Wavefunction sampled at ``x_min + j * dx``, ``dx = (x_max - x_min) / n_points``.

    The grid is periodic, so ``x_max`` itself is not a sample point.
    """

    x_min: float
    x_max: float
    n_points: int
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if not self.x_max > self.x_min:
            raise InvalidInputError("grid needs x_max > x_min")
        if self.values.shape != (self.n_points,):
            raise InvalidInputError(f"expected {self.n_points} grid values, got shape {self.values.shape}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def norm(self) -> float:
        # the trapezoid rule on a periodic grid reduces to a plain sum
        return float(np.sum(self.density) * self.dx)

    def edge_amplitude(self) -> float:
        return float(max(abs(self.values[0]), abs(self.values[-1])))

    def interpolate(self, xs) -> np.ndarray:
        """Complex values at `xs` by cubic splines through Re and Im."""
        xs = np.asarray(xs, dtype=float)
        if np.any(xs < self.x_min) or np.any(xs > self.x[-1]):
            raise InvalidInputError("interpolation points lie outside the grid")
        re = CubicSpline(self.x, self.values.real)
        im = CubicSpline(self.x, self.values.imag)
        return re(xs) + 1j * im(xs)


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def gaussian_on_grid(spec: WavepacketSpec, x_min: float = -40.0, x_max: float = 40.0,
                     n_points: int = 2048) -> GridWavefunction:
    if not _is_pow2(int(n_points)):
        raise InvalidInputError(f"n_points must be a power of two, got {n_points}")
    g = GridWavefunction(x_min, x_max, int(n_points), np.zeros(int(n_points)))
    g.values = spec.psi(g.x)
    return g


def split_operator_propagate(psi0: GridWavefunction, potential: PotentialModel, t_f: float,
                             dt: float = 5e-4, mass: float = 1.0, hbar: float = 1.0,
                             edge_tol: float = EDGE_TOL) -> GridWavefunction:
    """Strang splitting: half kinetic, full potential, half kinetic per step.

    The step count is ``round(t_f / dt)`` and the step is adjusted to land
    exactly on ``t_f``. Raises :class:`AliasingError` at the first step whose
    edge amplitude reaches `edge_tol`.
    """
    if not _is_pow2(psi0.n_points):
        raise InvalidInputError(f"n_points must be a power of two, got {psi0.n_points}")
    if not dt > 0 or not np.isfinite(t_f) or t_f < 0:
        raise InvalidInputError("need dt > 0 and a finite t_f >= 0")
    if psi0.edge_amplitude() >= edge_tol:
        raise AliasingError(f"initial wavefunction is not negligible at the box edges "
                            f"({psi0.edge_amplitude():.3g})", step=0)
    n_steps = int(round(t_f / dt))
    if n_steps == 0:
        return replace(psi0, values=psi0.values.copy(), t=psi0.t + t_f)
    h = t_f / n_steps
    x = psi0.x
    k = 2 * np.pi * np.fft.fftfreq(psi0.n_points, d=psi0.dx)
    half_kin = np.exp(-0.25j * hbar * k**2 * h / mass)
    full_kin = half_kin**2
    pot = np.exp(-1j * np.asarray(potential(x), dtype=complex) * h / hbar)
    psi = np.fft.ifft(half_kin * np.fft.fft(psi0.values))
    for step in range(1, n_steps + 1):
        psi *= pot
        if max(abs(psi[0]), abs(psi[-1])) >= edge_tol:
            raise AliasingError(f"wavefunction reached the box edge at step {step} "
                                f"(t={psi0.t + step * h:.6g})", step=step)
        kin = half_kin if step == n_steps else full_kin
        psi = np.fft.ifft(kin * np.fft.fft(psi))
    return GridWavefunction(psi0.x_min, psi0.x_max, psi0.n_points, psi, psi0.t + t_f)


def analytic_gaussian(spec: WavepacketSpec, potential: PotentialModel, x, t: float) -> GridWavefunction:
    """Closed-form Gaussian on the uniform grid `x`; see :func:`analytic_values`."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise InvalidInputError("x must be a 1D grid with at least two points")
    psi = analytic_values(spec, potential, x, t)
    n = x.size
    dx = (x[-1] - x[0]) / (n - 1)
    return GridWavefunction(float(x[0]), float(x[-1] + dx), n, psi, float(t))


def analytic_values(spec: WavepacketSpec, potential: PotentialModel, x, t: float) -> np.ndarray:
    """Closed-form Gaussian evolved in a potential of degree <= 2, at arbitrary real `x`.

    With V = c0 + c1 x + c2 x^2 and psi = exp(i/hbar [a (x-q)^2 + p (x-q) + g]),
    (q, p) follow the classical flow, a = (m/2) Z'/Z with Z'' = -(2 c2 / m) Z,
    Z(0) = 1, Z'(0) = 2 a(0)/m, and g(t) = g(0) + (i hbar/2) ln Z + integral of
    the Lagrangian along (q, p).
    """
    if potential.degree > 2:
        raise CapabilityError("closed-form Gaussians need a potential of degree <= 2")
    if not potential.is_real:
        raise CapabilityError("closed-form Gaussians need real potential coefficients")
    x = np.asarray(x, dtype=float)
    c0, c1, c2 = (list(potential.coefficients) + [0.0, 0.0])[:3]
    m, hbar = spec.mass, spec.hbar
    a0 = 1j * complex(spec.alpha0) * hbar
    q0, p0 = spec.xc, spec.pc
    if c2 == 0:
        # free fall in a linear potential: everything is polynomial in t
        qs = np.array([q0, p0 / m, -c1 / (2 * m)])
        ps = np.array([p0, -c1])
        lag = P.polysub(P.polymul(ps, ps) / (2 * m), P.polyadd([c0], c1 * qs))
        action = P.polyval(t, P.polyint(lag))
        q, p = P.polyval(t, qs), P.polyval(t, ps)
        Z = 1 + 2 * a0 * t / m
        dZ = 2 * a0 / m
        lnZ = cmath.log(Z)
    else:
        w = cmath.sqrt(2 * c2 / m)
        xe = -c1 / (2 * c2)
        ve = c0 - c1**2 / (4 * c2)
        cw, sw = cmath.cos(w * t), cmath.sin(w * t)
        q = (xe + (q0 - xe) * cw + p0 / (m * w) * sw).real
        p = (-m * w * (q0 - xe) * sw + p0 * cw).real
        # for a shifted quadratic well the action is [p (q - xe)] / 2 - V_e t
        action = 0.5 * (p * (q - xe) - p0 * (q0 - xe)) - ve * t
        Z = cw + 2 * a0 / (m * w) * sw
        dZ = -w * sw + 2 * a0 / m * cw
        # follow ln Z continuously from Z(0) = 1
        ts = np.linspace(0.0, t, 64 + int(64 * abs(w) * abs(t)))
        zs = np.cos(w * ts) + 2 * a0 / (m * w) * np.sin(w * ts)
        lnZ = np.log(abs(Z)) + 1j * np.unwrap(np.angle(zs))[-1]
    a = 0.5 * m * dZ / Z
    g = spec.gamma0 + 0.5j * hbar * lnZ + action
    d = x - q
    return np.exp(1j / hbar * (a * d**2 + p * d + g))


def mean_relative_error(approx_abs, targets, exact: GridWavefunction, region=(-np.inf, np.inf),
                        floor: float = None, floor_fraction: float = 0.01) -> float:
    """Mean of | |psi_approx| - |psi_exact| | / |psi_exact| over targets in `region`.

    The exact wavefunction is interpolated to the targets. Targets where
    |psi_exact| is below `floor` (default ``floor_fraction * max|psi_exact|``
    over the grid) are skipped.
    """
    targets = np.asarray(targets, dtype=float)
    if floor is None:
        floor = floor_fraction * float(np.max(np.abs(exact.values)))
    lo, hi = region
    inside = (targets >= max(lo, exact.x_min)) & (targets <= min(hi, exact.x[-1]))
    exact_abs = np.full(targets.shape, np.nan)
    exact_abs[inside] = np.abs(exact.interpolate(targets[inside]))
    return relative_error(approx_abs, exact_abs, targets, region, floor)


def metric_mask(approx_abs, exact_abs, targets, region, floor: float) -> np.ndarray:
    """Targets that enter the relative-error mean."""
    approx_abs = np.asarray(approx_abs, dtype=float)
    exact_abs = np.asarray(exact_abs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if not (approx_abs.shape == exact_abs.shape == targets.shape):
        raise InvalidInputError("approximation, exact values and targets differ in shape")
    lo, hi = region
    with np.errstate(invalid="ignore"):
        return ((targets >= lo) & (targets <= hi) & np.isfinite(approx_abs) & np.isfinite(exact_abs)
                & (exact_abs >= floor))


def relative_error(approx_abs, exact_abs, targets, region=(-np.inf, np.inf), floor: float = 0.0) -> float:
    """Mean relative error with the exact magnitudes already sampled at the targets."""
    keep = metric_mask(approx_abs, exact_abs, targets, region, floor)
    if not np.any(keep):
        raise UndefinedMetricError(f"no targets in {tuple(region)} with |psi_exact| >= {floor:.3g}")
    a = np.asarray(approx_abs, dtype=float)[keep]
    e = np.asarray(exact_abs, dtype=float)[keep]
    return float(np.mean(np.abs(a - e) / e))
