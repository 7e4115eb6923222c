"""Trajectory-frame ODE hierarchy for the phase expansion S = sum_n hbar^n S_n.

Along a classical trajectory dx/dt = S_0'/m the spatial derivatives
D(n, k) = d^k S_n / dx^k obey, after applying d^k/dx^k to the transport
equations and absorbing the advection term,

    dD(n,k)/dt = -(1/2m) sum_{j=0..n} sum_{l=0..k} C(k,l) D(j,l+1) D(n-j,k-l+1)
                 + (1/m) D(0,1) D(n,k+1)
                 + (i/2m) D(n-1,k+2)          (n >= 1)
                 - V^(k)(x)                   (n == 0)

The two highest-derivative products cancel exactly against the advection
term, which is what makes the truncated system closed. The cancellation is
done symbolically with rational coefficients when the term tables are built,
so the tables never reference a slot outside the layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from .errors import CapabilityError, ContractError, HierarchyInternalError, InvalidInputError
from .potential import PotentialModel

MAX_ORDER = 4


@dataclass(frozen=True)
class TermTables:
    """Sum-of-products encoding of a right-hand side over a flat state vector.

    ``dy[out] += coef * y[a] * y[b]`` for quadratic terms,
    ``dy[out] += coef * y[src]`` for linear terms and
    ``dy[out] += coef * V^(k)(y[0]) * (y[slot] or 1)`` for potential terms.
    """

    q_out: np.ndarray
    q_a: np.ndarray
    q_b: np.ndarray
    q_coef: np.ndarray
    l_out: np.ndarray
    l_in: np.ndarray
    l_coef: np.ndarray
    p_out: np.ndarray
    p_k: np.ndarray
    p_slot: np.ndarray
    p_coef: np.ndarray

    @property
    def max_potential_order(self) -> int:
        return int(self.p_k.max()) if self.p_k.size else 0

    def arrays(self):
        return (self.q_out, self.q_a, self.q_b, self.q_coef,
                self.l_out, self.l_in, self.l_coef,
                self.p_out, self.p_k, self.p_slot, self.p_coef)


@dataclass(frozen=True)
class HierarchyLayout:
    """Slot structure of the truncated hierarchy at expansion order N.

    The propagated vector is ``[x, D(slot_0), D(slot_1), ...]``; slots are
    (n, k) pairs in lexicographic order.
    """

    order: int
    slots: tuple
    mass: float = 1.0
    hbar: float = 1.0
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.slots)})

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    @property
    def n_unknowns(self) -> int:
        """Slots plus the trajectory position."""
        return len(self.slots) + 1

    def index(self, n: int, k: int) -> int:
        try:
            return self._index[(n, k)]
        except KeyError:
            raise HierarchyInternalError(f"slot (n={n}, k={k}) is not in the order-{self.order} layout") from None

    def has(self, n: int, k: int) -> bool:
        return (n, k) in self._index

    def max_k(self, n: int) -> int:
        return max(1, 2 * self.order) if n == 0 else 2 * (self.order - n)

    def state_index(self, n: int, k: int) -> int:
        """Position of slot (n, k) in the flat vector that starts with x."""
        return 1 + self.index(n, k)


def build_layout(order: int, mass: float = 1.0, hbar: float = 1.0, max_order: int = MAX_ORDER) -> HierarchyLayout:
    if int(order) != order or order < 0:
        raise InvalidInputError(f"expansion order must be a non-negative integer, got {order}")
    if not (mass > 0 and hbar > 0):
        raise InvalidInputError("mass and hbar must be positive")
    if order > max_order:
        raise CapabilityError(f"expansion order {order} exceeds the supported maximum {max_order}")
    order = int(order)
    slots = []
    for n in range(order + 1):
        kmax = max(1, 2 * order) if n == 0 else 2 * (order - n)
        slots.extend((n, k) for k in range(kmax + 1))
    return HierarchyLayout(order, tuple(slots), float(mass), float(hbar))


def _symbolic_rhs(n: int, k: int):
    """Collected terms for dD(n,k)/dt.

    Returns (quad, lin, pot): quad maps sorted ((n1,k1),(n2,k2)) -> Fraction
    coefficient of 1/m; lin maps (n',k') -> Fraction coefficient of i/m;
    pot is the Fraction coefficient of V^(k).
    """
    quad: dict = {}

    def add(a, b, c):
        key = tuple(sorted((a, b)))
        quad[key] = quad.get(key, Fraction(0)) + c

    for j in range(n + 1):
        for l in range(k + 1):
            add((j, l + 1), (n - j, k - l + 1), Fraction(-comb(k, l), 2))
    add((0, 1), (n, k + 1), Fraction(1))
    quad = {key: c for key, c in quad.items() if c != 0}
    lin = {(n - 1, k + 2): Fraction(1, 2)} if n >= 1 else {}
    pot = Fraction(-1) if n == 0 else Fraction(0)
    return quad, lin, pot


def build_tables(layout: HierarchyLayout) -> TermTables:
    """Term tables for [dx/dt, dD/dt...] over the vector ``[x, D...]``."""
    m = layout.mass
    q, l, p = [], [], []
    l.append((0, layout.state_index(0, 1), 1.0 / m))
    for (n, k) in layout.slots:
        out = layout.state_index(n, k)
        quad, lin, pot = _symbolic_rhs(n, k)
        for (a, b), c in quad.items():
            # raises HierarchyInternalError if the recurrence leaves the layout
            q.append((out, layout.state_index(*a), layout.state_index(*b), float(c) / m))
        for src, c in lin.items():
            l.append((out, layout.state_index(*src), 1j * float(c) / m))
        if pot != 0:
            p.append((out, k, -1, float(pot)))
    return _pack(q, l, p)


def _pack(q, l, p) -> TermTables:
    def col(rows, i, dtype):
        return np.array([r[i] for r in rows], dtype=dtype)

    return TermTables(
        col(q, 0, np.int64), col(q, 1, np.int64), col(q, 2, np.int64), col(q, 3, np.complex128),
        col(l, 0, np.int64), col(l, 1, np.int64), col(l, 2, np.complex128),
        col(p, 0, np.int64), col(p, 1, np.int64), col(p, 2, np.int64), col(p, 3, np.complex128),
    )


def extend_tables(base: TermTables, q=(), l=(), p=()) -> TermTables:
    """Append extra terms (used by the engine for the Jacobian pair)."""
    rows_q = list(zip(base.q_out, base.q_a, base.q_b, base.q_coef)) + list(q)
    rows_l = list(zip(base.l_out, base.l_in, base.l_coef)) + list(l)
    rows_p = list(zip(base.p_out, base.p_k, base.p_slot, base.p_coef)) + list(p)
    return _pack(rows_q, rows_l, rows_p)


def eval_tables(tables: TermTables, y: np.ndarray, potential: PotentialModel) -> np.ndarray:
    """Evaluate the tabulated right-hand side; `y` may carry trailing batch axes."""
    y = np.asarray(y, dtype=complex)
    dy = np.zeros_like(y)
    np.add.at(dy, tables.q_out, tables.q_coef.reshape((-1,) + (1,) * (y.ndim - 1)) * y[tables.q_a] * y[tables.q_b])
    np.add.at(dy, tables.l_out, tables.l_coef.reshape((-1,) + (1,) * (y.ndim - 1)) * y[tables.l_in])
    for out, k, slot, c in zip(tables.p_out, tables.p_k, tables.p_slot, tables.p_coef):
        term = c * np.asarray(potential(y[0], int(k)), dtype=complex)
        if slot >= 0:
            term = term * y[slot]
        dy[out] += term
    return dy


@dataclass
class HierarchyState:
    """Values of D(n, k) at the current trajectory position."""

    x: complex
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([complex(self.x)], self.values))

    @classmethod
    def from_vector(cls, y, t: float = 0.0) -> "HierarchyState":
        y = np.asarray(y, dtype=complex)
        return cls(complex(y[0]), y[1:].copy(), t)

    def slot(self, layout: HierarchyLayout, n: int, k: int) -> complex:
        return self.values[layout.index(n, k)]

    def velocity(self, layout: HierarchyLayout) -> complex:
        return self.slot(layout, 0, 1) / layout.mass


_TABLE_CACHE: dict = {}


def tables_for(layout: HierarchyLayout) -> TermTables:
    key = (layout.order, layout.slots, layout.mass)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = build_tables(layout)
    return _TABLE_CACHE[key]


def rhs(state: HierarchyState, layout: HierarchyLayout, potential: PotentialModel) -> HierarchyState:
    """Time derivative of ``state`` along its trajectory.

    The returned object carries dx/dt in ``x`` and dD(n,k)/dt in ``values``.
    """
    if state.values.shape != (layout.n_slots,):
        raise ContractError(
            f"state has {state.values.size} slot values but the order-{layout.order} layout needs {layout.n_slots}")
    dy = eval_tables(tables_for(layout), state.as_vector(), potential)
    return HierarchyState(complex(dy[0]), dy[1:], state.t)
