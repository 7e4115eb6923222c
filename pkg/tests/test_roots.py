import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from ctwkb import RootSearchConfig, WavepacketSpec, discover_branches, free, harmonic, newton_refine, sweep
from ctwkb.errors import InvalidInputError, NonConvergenceError
from ctwkb.roots import (LEMNISCATE_QUARTER, REAL_BRANCH, SECONDARY, RootFinder, cluster_roots,
                         continue_in_time, real_landing_point, short_time_secondaries)

from conftest import make_engine


def landing(spec, potential, x0, t_f):
    """x(t_f) from scipy's DOP853, independent of the package integrators."""
    sol = solve_ivp(lambda t, y: [y[1] / spec.mass, -potential(y[0], 1)], (0, t_f),
                    [complex(x0), complex(spec.dS0(x0))], method="DOP853", rtol=1e-12, atol=1e-12)
    return sol.y[0, -1]


def test_lattice_constant():
    val, _ = quad(lambda s: 1 / np.sqrt(1 - s**4), 0, 1)
    assert LEMNISCATE_QUARTER == pytest.approx(val, rel=1e-12)


def test_short_time_secondaries(quartic):
    u = short_time_secondaries(quartic)
    A = np.sqrt(1 / (2 * 1.25e-4)) * LEMNISCATE_QUARTER
    np.testing.assert_allclose(u, [A * (1 - 2j), -A * (1 - 2j)], rtol=1e-14)
    assert short_time_secondaries(harmonic()).size == 0


def test_family_roots_land_on_target(paper_spec, quartic, quartic_engine):
    fam = RootFinder(quartic_engine, 3.0).family_roots([15.0])[0]
    assert len(fam) == 3
    for r in fam:
        assert abs(landing(paper_spec, quartic, r.x0, 3.0) - 15.0) <= 1e-7
    got = sorted((r.x0 for r in fam), key=lambda z: z.imag)
    want = [5.684 - 15.404j, -0.047 + 0.231j, -8.244 + 29.015j]
    for g, w in zip(got, want):
        assert abs(g - w) <= 2e-3


def test_family_at_time_zero_is_identity(quartic_engine):
    fams = RootFinder(quartic_engine, 0.0).family_roots([1.0, 2.5])
    assert [[r.x0 for r in f] for f in fams] == [[1.0], [2.5]]


def test_free_particle_root_is_closed_form():
    spec = WavepacketSpec(alpha0=1.0, xc=0.5, pc=2.0)
    eng = make_engine(spec, free(), 1)
    for X, t in [(1.0, 0.5), (4.0, 2.0)]:
        fam = RootFinder(eng, t).family_roots([X])[0]
        assert len(fam) == 1
        want = spec.xc + (X - spec.xc - spec.pc * t) / (1 + 2j * spec.alpha0 * t)
        assert abs(fam[0].x0 - want) <= 1e-9


def test_newton_refine(paper_spec, quartic, quartic_engine):
    r = newton_refine(0.3 + 1.5j, 15.0, 6.0, quartic_engine)
    assert abs(landing(paper_spec, quartic, r.x0, 6.0) - 15.0) <= 1e-7
    assert r.residual <= 1e-9


def test_newton_budget(quartic_engine):
    cfg = RootSearchConfig(max_iter=1, loose_rtol=1e-10)
    with pytest.raises(NonConvergenceError) as info:
        newton_refine(3 + 3j, 15.0, 6.0, quartic_engine, cfg)
    assert info.value.residual > 0
    with pytest.raises(InvalidInputError):
        newton_refine(np.nan, 15.0, 6.0, quartic_engine)


def test_grid_discovery_contains_family(quartic_engine):
    cfg = RootSearchConfig(seed_shape=(31, 31))
    res = discover_branches(15.0, 3.0, quartic_engine, cfg)
    assert len(res) == 3
    assert sum(v for k, v in res.counts.items() if k != "family_on_grid") == res.n_seeds
    assert res.counts["family_on_grid"] == 3
    # the raw grid finds further preimages; the family is a subset
    assert len(res.raw) >= 3
    ims = [r.x0.imag for r in res.raw]
    assert ims == sorted(ims)


def test_grid_mode_returns_raw_roots(quartic_engine):
    cfg = RootSearchConfig(seed_shape=(21, 21), family="grid")
    res = discover_branches(15.0, 3.0, quartic_engine, cfg)
    assert [r.x0 for r in res.roots] == [r.x0 for r in res.raw]


def test_real_branch_passes_through_centre(quartic_engine):
    x_land = real_landing_point(quartic_engine, 3.0)
    assert x_land == pytest.approx(16.436, abs=1e-3)
    fam = RootFinder(quartic_engine, 3.0).family_roots([x_land])[0]
    assert min(abs(r.x0) for r in fam) <= 1e-8


def test_continue_in_time_matches_direct_solve(quartic_engine):
    cfg = RootSearchConfig()
    start = RootFinder(quartic_engine, 1.0).family_roots([12.0])[0]
    z = np.array([r.x0 for r in start])
    z2, res, M, out = continue_in_time(quartic_engine, z, np.full(z.size, 12.0), 1.0, 2.0, cfg)
    direct = RootFinder(quartic_engine, 2.0).family_roots([12.0])[0]
    for a in z2:
        assert min(abs(a - d.x0) for d in direct) <= 1e-7


def test_sweep_free_single_real_branch():
    spec = WavepacketSpec(alpha0=1.0, pc=0.0)
    eng = make_engine(spec, free(), 1)
    curves = sweep(np.linspace(-3, 3, 25), 1.0, eng)
    assert len(curves) == 1
    assert curves[0].kind == REAL_BRANCH and curves[0].branch_id == 0
    assert len(curves[0].points) == 25 and not curves[0].flags


def test_sweep_labels_quartic_branches(quartic_engine):
    curves = sweep(np.linspace(10, 20, 11), 3.0, quartic_engine, RootSearchConfig(rediscover_every=5))
    kinds = [c.kind for c in curves]
    assert kinds.count(REAL_BRANCH) == 1 and kinds.count(SECONDARY) == 2
    assert [c.branch_id for c in curves] == [0, 1, 2]
    for c in curves:
        assert len(c.points) == 11


def test_sweep_rejects_bad_grids(quartic_engine):
    with pytest.raises(InvalidInputError):
        sweep([3.0, 2.0, 1.0], 3.0, quartic_engine)
    with pytest.raises(InvalidInputError):
        sweep([], 3.0, quartic_engine)


def test_cluster_roots_keeps_best():
    reps = cluster_roots([1 + 0j, 1 + 1e-9j, 2j], [1e-8, 1e-12, 1e-10], [1, 1, 1], 1e-6)
    assert [r[0] for r in reps] == [1 + 1e-9j, 2j]


@pytest.mark.parametrize("kw", [dict(tol=0), dict(max_iter=0), dict(family="nope"), dict(short_time=-1),
                                dict(seed_box=(1, 0, 0, 1))])
def test_config_validation(kw):
    with pytest.raises(InvalidInputError):
        RootSearchConfig(**kw)
