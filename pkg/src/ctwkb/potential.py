"""Analytic 1D potentials evaluable at complex positions.

Only polynomials are supported, so analytic continuation into the complex
plane is unambiguous and every derivative is exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import InvalidInputError


@dataclass(frozen=True)
class PotentialModel:
    """Polynomial potential V(x) = sum_j c_j x**j.

    Parameters
    ----------
    coefficients : sequence of float or complex
        Polynomial coefficients in ascending degree.
    label : str
        Human-readable name, used in run metadata and output files.
    """

    coefficients: tuple
    label: str = "custom"

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim != 1 or c.size == 0:
            raise InvalidInputError("potential coefficients must be a non-empty 1D sequence")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("potential coefficients must be finite")
        # drop trailing zeros so that `degree` is meaningful
        c = np.trim_zeros(c, "b")
        if c.size == 0:
            c = np.zeros(1, dtype=complex)
        vals = tuple(complex(v) if v.imag != 0 else float(v.real) for v in c)
        object.__setattr__(self, "coefficients", vals)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def is_real(self) -> bool:
        return all(not isinstance(c, complex) for c in self.coefficients)

    def derivative_coefficients(self, k: int) -> np.ndarray:
        """Ascending coefficients of d^k V / dx^k (length >= 1)."""
        if k < 0:
            raise InvalidInputError(f"derivative order must be non-negative, got {k}")
        c = np.asarray(self.coefficients, dtype=complex if not self.is_real else float)
        if k > self.degree:
            return np.zeros(1, dtype=c.dtype)
        return P.polyder(c, k) if k else c

    def derivative_table(self, kmax: int) -> np.ndarray:
        """Matrix D with D[k] the padded ascending coefficients of V^(k), k=0..kmax."""
        D = np.zeros((kmax + 1, self.degree + 1), dtype=complex)
        for k in range(kmax + 1):
            dk = self.derivative_coefficients(k)
            D[k, : dk.size] = dk
        return D

    def __call__(self, x, k: int = 0):
        return evaluate(self, x, k)

    def to_dict(self) -> dict:
        coeffs = [c if not isinstance(c, complex) else [c.real, c.imag] for c in self.coefficients]
        return {"label": self.label, "coefficients": coeffs}


def evaluate(potential: PotentialModel, x, k: int = 0):
    """Evaluate the k-th derivative of `potential` at (complex) position(s) `x`.

    Real-coefficient potentials evaluated at real `x` return real values.
    Derivative orders above the polynomial degree give exactly zero.
    """
    if int(k) != k or k < 0:
        raise InvalidInputError(f"derivative order must be a non-negative integer, got {k}")
    xa = np.asarray(x)
    if not np.all(np.isfinite(xa)):
        raise InvalidInputError("potential evaluated at a non-finite position")
    c = potential.derivative_coefficients(int(k))
    out = P.polyval(xa, c)
    if np.isscalar(x) or xa.ndim == 0:
        out = out.item() if hasattr(out, "item") else out
    return out


def polynomial(coefficients: Sequence, label: str = "custom") -> PotentialModel:
    return PotentialModel(tuple(coefficients), label)


def free() -> PotentialModel:
    return PotentialModel((0.0,), "free")


def harmonic(omega: float = 1.0, mass: float = 1.0) -> PotentialModel:
    """V(x) = m omega^2 x^2 / 2."""
    return PotentialModel((0.0, 0.0, 0.5 * mass * omega**2), "harmonic")


def quartic_double_well(scale: float = 1.25e-4, well: float = 400.0) -> PotentialModel:
    """V(x) = scale * (x**4 - well * x**2); minima at x**2 = well / 2."""
    return PotentialModel((0.0, 0.0, -scale * well, 0.0, scale), "quartic-double-well")


PRESETS = {
    "free": free,
    "harmonic": harmonic,
    "quartic-double-well": quartic_double_well,
}


def from_config(cfg) -> PotentialModel:
    """Build a potential from a name or a mapping ``{preset|coefficients, ...}``."""
    if isinstance(cfg, str):
        cfg = {"preset": cfg}
    cfg = dict(cfg)
    if "coefficients" in cfg:
        coeffs = [complex(*c) if isinstance(c, (list, tuple)) else c for c in cfg["coefficients"]]
        return PotentialModel(tuple(coeffs), cfg.get("label", "custom"))
    name = cfg.pop("preset", None)
    if name not in PRESETS:
        raise InvalidInputError(f"unknown potential preset {name!r}; choose from {sorted(PRESETS)}")
    cfg.pop("label", None)
    return PRESETS[name](**cfg)
