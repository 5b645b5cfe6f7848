import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from retarda import load_catalog
from retarda.reachability import ReachBound, estimate_reach, extend_reach_bound, fc_probe, geometric_grid


def test_zero_system_reach_is_the_radius():
    radii = [0.5, 1.0, 3.0]
    table = estimate_reach(load_catalog("zero"), radii, 2.0, 40, seed=1)
    for r, row in zip(radii, table.sup_estimates):
        assert np.all(row <= r * (1 + 1e-12))
        assert np.all(row >= 0.98 * r)
    assert not table.any_escape


def test_integrator_never_exceeds_the_closed_form():
    table = estimate_reach(load_catalog("integrator-input"), [0.5, 1.0, 2.0], 3.0, 80, seed=2)
    for i, r in enumerate(table.radii):
        for j, t in enumerate(table.times):
            assert table.sup_estimates[i, j] <= r * (1 + t) * (1 + 1e-9)


def test_quadratic_escape_is_flagged_at_large_radii():
    table = estimate_reach(load_catalog("quadratic-blowup"), [0.25, 0.5, 1.0, 2.0], 1.1, 20, seed=3)
    assert table.escaped[2:, -1].all()
    assert not table.escaped[:2].any()
    assert np.isinf(table.sup_estimates[2:, -1]).all()
    with pytest.raises(ValueError, match="escape"):
        ReachBound.from_table(table)


def test_sample_monotonicity():
    sysdef = load_catalog("hutchinson")
    small = estimate_reach(sysdef, [0.5, 1.0], 2.0, 15, seed=4)
    large = estimate_reach(sysdef, [0.5, 1.0], 2.0, 30, seed=4)
    assert np.all(small.sup_estimates <= large.sup_estimates)
    assert np.all(small.history_norms <= large.history_norms)


def test_estimates_are_monotone_in_radius_and_time():
    table = estimate_reach(load_catalog("two-delay"), [0.2, 0.6, 1.5], 3.0, 12, seed=5)
    assert np.all(np.diff(table.sup_estimates, axis=0) >= 0)
    assert np.all(np.diff(table.sup_estimates, axis=1) >= 0)


def test_determinism_and_worker_independence():
    sysdef = load_catalog("sat-feedback")
    a = estimate_reach(sysdef, [0.5, 1.0], 2.0, 10, seed=6, workers=1)
    b = estimate_reach(sysdef, [0.5, 1.0], 2.0, 10, seed=6, workers=2)
    assert a.sup_estimates.tobytes() == b.sup_estimates.tobytes()
    assert a.to_csv() == b.to_csv()
    # a contractive system peaks at |x0(0)| = r for every seed; use a growing one
    integ = load_catalog("integrator-input")
    c = estimate_reach(integ, [1.0], 2.0, 10, seed=6)
    d = estimate_reach(integ, [1.0], 2.0, 10, seed=7)
    assert c.sup_estimates.tobytes() != d.sup_estimates.tobytes()


def test_reach_argument_checks():
    sysdef = load_catalog("zero")
    with pytest.raises(ValueError):
        estimate_reach(sysdef, [1.0], 0.0, 5, seed=0)
    with pytest.raises(ValueError):
        estimate_reach(sysdef, [1.0], 1.0, 0, seed=0)
    with pytest.raises(ValueError):
        estimate_reach(sysdef, [1.0], 1.0, 5, seed=0, times=[0.0, 2.0])


# -- recursion ---------------------------------------------------------------

GRID = np.array([0.0, 0.5, 1.0, 2.0, 4.0, 10.0])


@pytest.mark.parametrize("n", [1, 2, 5])
def test_additive_bound_grows_linearly(n):
    out = extend_reach_bound(ReachBound.from_function(lambda r: r + 0.25, GRID, 1.0), n)
    assert np.allclose(out.values, GRID + n * 0.25, rtol=0, atol=1e-14)
    assert out(3.3) == pytest.approx(3.3 + n * 0.25, abs=1e-14)


def test_doubling_two_steps():
    out = extend_reach_bound(ReachBound.from_function(lambda r: 2 * r, GRID, 1.0), 2)
    assert np.array_equal(out.values, 4 * GRID)


def test_tabulated_bound_flags_extrapolation():
    tab = ReachBound(GRID, 2 * GRID, 1.0)
    out = extend_reach_bound(tab, 3)
    assert out.extrapolated
    assert np.allclose(out.values, 8 * GRID)
    inside = extend_reach_bound(ReachBound(GRID, GRID + 0.0, 1.0), 4)
    assert not inside.extrapolated


def test_rho_uses_the_radius_when_the_bound_is_smaller():
    b = ReachBound(GRID, 0.5 * GRID, 1.0)
    assert b.rho(2.0) == 2.0
    assert b(20.0) == pytest.approx(10.0)


@pytest.mark.parametrize("name, R1", [("integrator-input", lambda r: 2 * r), ("linear-delay", lambda r: 2 * r)])
def test_recursion_is_sound_against_samples(name, R1):
    # on [0, 1] both systems satisfy |x(t)| <= r (1 + t) for ||x0||, ||u|| <= r
    grid = np.array([0.5, 1.0, 2.0])
    bound = extend_reach_bound(ReachBound.from_function(R1, grid, 1.0), 3)
    table = estimate_reach(load_catalog(name), grid, 3.0, 40, seed=8, times=[1.0, 2.0, 3.0])
    for i, r in enumerate(grid):
        assert table.sup_estimates[i, -1] <= bound(r)
        assert table.sup_estimates[i, 0] <= R1(r) * (1 + 1e-9)


@given(st.lists(st.floats(0.0, 50.0), min_size=2, max_size=6), st.integers(1, 6))
def test_extension_is_monotone_in_n(vals, n):
    grid = np.arange(1.0, len(vals) + 1)
    base = ReachBound(grid, np.maximum.accumulate(vals), 1.0)
    a = extend_reach_bound(base, n)
    b = extend_reach_bound(base, n + 1)
    assert np.all(b.values >= a.values)
    assert np.all(a.values >= base.values)


def test_reach_bound_json_round_trip():
    table = estimate_reach(load_catalog("decay"), [0.5, 1.0, 2.0], 1.0, 5, seed=9)
    bound = ReachBound.from_table(table)
    back = ReachBound.from_json(bound.to_json())
    assert np.array_equal(back.grid, bound.grid)
    assert np.array_equal(back.values, bound.values)
    assert back.horizon == bound.horizon
    assert back.provenance == bound.provenance
    assert back(1.7) == bound(1.7)


def test_reach_bound_validation():
    with pytest.raises(ValueError):
        ReachBound(np.array([1.0, 1.0]), np.array([1.0, 2.0]), 1.0)
    with pytest.raises(ValueError):
        ReachBound(np.array([1.0, 2.0]), np.array([1.0]), 1.0)
    with pytest.raises(ValueError):
        extend_reach_bound(ReachBound(GRID, GRID, 1.0), 0)


def test_geometric_grid():
    g = geometric_grid(0.1, 10.0, 4)
    assert g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(10.0)
    assert g.size == 9
    assert np.allclose(g[1:] / g[:-1], g[1] / g[0])
    assert geometric_grid(2.0, 2.0).tolist() == [2.0]
    with pytest.raises(ValueError):
        geometric_grid(0.0, 1.0)


# -- escape probing ----------------------------------------------------------


def test_probe_finds_quadratic_escape():
    witnesses = fc_probe(load_catalog("quadratic-blowup"), 4.0, 3.0, 6, seed=10)
    assert witnesses
    for w in witnesses:
        x00 = w.x0.point_value[0]
        assert x00 > 0
        assert w.t_star == pytest.approx(1.0 / x00, rel=1e-6)


def test_probe_zero_system_is_empty():
    assert fc_probe(load_catalog("zero"), 10.0, 5.0, 5, seed=11) == []


def test_probe_stable_linear_delay_is_empty():
    assert fc_probe(load_catalog("stable-linear-delay"), 10.0, 50.0, 5, seed=12) == []


def test_probe_rejects_bad_radius():
    with pytest.raises(ValueError):
        fc_probe(load_catalog("zero"), 0.0, 1.0, 1, seed=0)
