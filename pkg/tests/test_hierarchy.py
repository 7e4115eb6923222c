import numpy as np
import pytest
import sympy as sp

from ctwkb import HierarchyState, build_layout, quartic_double_well, rhs
from ctwkb.errors import CapabilityError, ContractError, HierarchyInternalError, InvalidInputError
from ctwkb.hierarchy import MAX_ORDER, build_tables, eval_tables

QDW = quartic_double_well()


def transcribed_rhs(x, D, V, m):
    """Second-order trajectory-frame equations written out by hand.

    The d(S0'''')/dt line uses +3 (S0''')^2 inside the bracket; differentiating
    the S0'' equation twice gives that sign.
    """
    d = {}
    dx = D[0, 1] / m
    Vk = [V(x, k) for k in range(5)]
    d[0, 0] = D[0, 1] ** 2 / (2 * m) - Vk[0]
    d[0, 1] = -Vk[1]
    d[0, 2] = -D[0, 2] ** 2 / m - Vk[2]
    d[0, 3] = -3 / m * D[0, 2] * D[0, 3] - Vk[3]
    d[0, 4] = -(4 * D[0, 2] * D[0, 4] + 3 * D[0, 3] ** 2) / m - Vk[4]
    d[1, 0] = 0.5j / m * D[0, 2]
    d[1, 1] = 0.5j / m * D[0, 3] - D[1, 1] * D[0, 2] / m
    d[1, 2] = 0.5j / m * D[0, 4] - D[1, 1] * D[0, 3] / m - 2 * D[1, 2] * D[0, 2] / m
    d[2, 0] = 0.5j / m * D[1, 2] - D[1, 1] ** 2 / (2 * m)
    return dx, d


def test_layouts():
    assert build_layout(0).slots == ((0, 0), (0, 1))
    assert build_layout(1).slots == ((0, 0), (0, 1), (0, 2), (1, 0))
    L2 = build_layout(2)
    assert L2.slots == ((0, 0), (0, 1), (0, 2), (0, 3), (0, 4), (1, 0), (1, 1), (1, 2), (2, 0))
    assert L2.max_k(0) == 4 and L2.max_k(1) == 2 and L2.max_k(2) == 0


def test_layout_errors():
    with pytest.raises(CapabilityError):
        build_layout(MAX_ORDER + 1)
    with pytest.raises(InvalidInputError):
        build_layout(-1)
    with pytest.raises(InvalidInputError):
        build_layout(1.5)
    with pytest.raises(HierarchyInternalError):
        build_layout(1).index(1, 1)


@pytest.mark.parametrize("m", [1.0, 2.5])
def test_matches_transcription_on_random_states(m, rng):
    L = build_layout(2, mass=m)
    worst = 0.0
    for _ in range(1000):
        x = complex(*rng.uniform(-25, 25, 2))
        vals = rng.normal(size=L.n_slots) * 10 + 1j * rng.normal(size=L.n_slots) * 10
        st = HierarchyState(x, vals)
        got = rhs(st, L, QDW)
        D = {s: st.slot(L, *s) for s in L.slots}
        dx, want = transcribed_rhs(x, D, QDW, m)
        assert got.x == pytest.approx(dx, rel=1e-15)
        for s, w in want.items():
            scale = max(1.0, abs(w))
            worst = max(worst, abs(got.slot(L, *s) - w) / scale)
    assert worst <= 1e-13


def _symbolic_rates(order):
    """Independent derivation: differentiate the transport PDEs k times with sympy.

    S_n is represented by symbols D_n_k for its x-derivatives; d/dx maps
    D_n_k -> D_n_{k+1} and V_k -> V_{k+1}. The Lagrangian rate is
    d^k/dx^k (dS_n/dt)|_x + (S0'/m) D_n_{k+1}.
    """
    m = sp.Symbol("m", positive=True)
    K = 2 * order + 4
    D = {(n, k): sp.Symbol(f"D_{n}_{k}") for n in range(order + 1) for k in range(K + 2)}
    Vs = [sp.Symbol(f"V_{k}") for k in range(K + 2)]
    nxt = {D[n, k]: D[n, k + 1] for n in range(order + 1) for k in range(K + 1)}
    nxt.update({Vs[k]: Vs[k + 1] for k in range(K + 1)})

    def ddx(e):
        return sp.expand(sum(sp.diff(e, s) * t for s, t in nxt.items() if e.has(s)))

    rates = {}
    for n in range(order + 1):
        e = -sum(D[j, 1] * D[n - j, 1] for j in range(n + 1)) / (2 * m)
        if n >= 1:
            e += sp.I / (2 * m) * D[n - 1, 2]
        else:
            e -= Vs[0]
        kmax = max(1, 2 * order) if n == 0 else 2 * (order - n)
        for k in range(kmax + 1):
            rates[n, k] = sp.expand(e + D[0, 1] * D[n, k + 1] / m)
            e = ddx(e)
    return m, D, Vs, rates


@pytest.mark.parametrize("order", [1, 2, 3])
def test_matches_symbolic_derivation(order, rng):
    m_sym, D, Vs, rates = _symbolic_rates(order)
    L = build_layout(order, mass=1.7)
    in_layout = {D[s] for s in L.slots}
    for s, e in rates.items():
        used = {sym for sym in e.free_symbols if sym.name.startswith("D_")}
        # closure: every rate only involves slots of the layout
        assert used <= in_layout, (s, used - in_layout)
    tables = build_tables(L)
    for _ in range(20):
        x = complex(*rng.uniform(-20, 20, 2))
        vals = rng.normal(size=L.n_slots) + 1j * rng.normal(size=L.n_slots)
        y = np.concatenate(([x], vals))
        got = eval_tables(tables, y, QDW)
        sub = {m_sym: 1.7}
        sub.update({D[s]: complex(v) for s, v in zip(L.slots, vals)})
        sub.update({Vs[k]: complex(QDW(x, k)) for k in range(len(Vs))})
        for s, e in rates.items():
            want = complex(e.subs(sub))
            assert got[L.state_index(*s)] == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_contract_error_on_wrong_state():
    with pytest.raises(ContractError):
        rhs(HierarchyState(0j, np.zeros(3)), build_layout(1), QDW)


def test_batch_axes_agree_with_single_states(rng):
    L = build_layout(2)
    tables = build_tables(L)
    Y = rng.normal(size=(L.n_unknowns, 5)) + 1j * rng.normal(size=(L.n_unknowns, 5))
    batch = eval_tables(tables, Y, QDW)
    for j in range(5):
        np.testing.assert_allclose(batch[:, j], eval_tables(tables, Y[:, j], QDW), rtol=1e-15)
