import json
import math

import numpy as np
import pytest
from helpers import TAME, random_triple, sup_gap
from hypothesis import given
from hypothesis import strategies as st
from oracles import SMOOTH_PROBLEMS, euler_dde

from retarda import (
    InputSignal,
    PiecewiseHistory,
    SolveConfig,
    SolverError,
    flow_segment,
    lift_to_tds,
    load_catalog,
    norm_xinf,
    parse_system,
    segment_at,
    solve_ode,
    solve_tds,
)
from retarda.sampling import sample_history
from retarda.solver import EscapeError, propagate_breakpoints, trajectory_csv


def system(f, n=1, m=0, delays=(1.0,)):
    return parse_system(json.dumps({"n": n, "m": m, "delays": list(delays), "f": f}))


# -- solve_tds ----------------------------------------------------------------


def test_initial_value_is_the_point_value():
    x0 = PiecewiseHistory.constant(5.0, 1.0, point_value=[-2.0])
    traj = solve_tds(load_catalog("linear-delay"), x0, None, 1.0)
    assert traj(0.0)[0] == -2.0
    # x' = -x(t-1) = -5 on [0, 1]
    assert traj(1.0)[0] == pytest.approx(-7.0, abs=1e-12)


def test_linear_delay_closed_form_on_two_intervals():
    traj = solve_tds(load_catalog("linear-delay"), PiecewiseHistory.constant(1.0, 1.0), None, 2.0)
    for t in np.linspace(0.0, 2.0, 41):
        want = 1 - t if t <= 1 else t * t / 2 - 2 * t + 1.5
        assert traj(t)[0] == pytest.approx(want, abs=1e-12)


def test_jump_history_values_and_kink():
    x0 = PiecewiseHistory.piecewise_constant([-1.0, -0.5, 0.0], [0.0, 1.0], [0.0])
    traj = solve_tds(load_catalog("delay-growth"), x0, None, 1.5)
    assert traj(0.5)[0] == pytest.approx(0.0, abs=1e-14)
    assert traj(1.0)[0] == pytest.approx(0.5, abs=1e-12)
    assert np.any(np.isclose(traj.breakpoints, 0.5, atol=1e-12))


def test_breakpoint_propagation():
    got = propagate_breakpoints([-0.5, 0.0], [1.0], 2.7)
    assert np.allclose(got, [0.5, 1.0, 1.5, 2.0, 2.5])
    two = propagate_breakpoints([0.0], [0.5, 1.0], 1.6)
    assert np.allclose(two, [0.5, 1.0, 1.5])


def test_steps_land_on_breakpoints():
    sysdef = load_catalog("two-delay")
    x0 = sample_history(np.random.default_rng(3), 2, 1.0, 1.6, pieces=4)
    traj = solve_tds(sysdef, x0, None, 4.0)
    for b in traj.breakpoints:
        assert np.min(np.abs(traj.nodes - b)) <= 1e-12


@pytest.mark.parametrize("seed", range(8))
def test_kinks_only_at_propagated_breakpoints(seed):
    rng = np.random.default_rng(seed)
    sysdef, x0, u, T = random_triple(rng, horizon_factor=2.5)
    traj = solve_tds(sysdef, x0, u, T)
    kinks = traj.kinks(1e-6)
    for k in kinks:
        assert np.min(np.abs(traj.breakpoints - k)) <= 1e-9, (sysdef.name, k)


def test_escape_for_quadratic_growth():
    for x0 in (1.0, 2.0, 4.0):
        traj = solve_tds(load_catalog("quadratic-blowup"), PiecewiseHistory.constant(x0, 1.0), None, 3.0)
        assert traj.escaped
        assert traj.escape.confidence == "high"
        assert traj.escape.t_star == pytest.approx(1 / x0, rel=1e-6)
        assert traj.escape.magnitude > 1e12
        assert traj.t_end == traj.escape.t_star


def test_overflow_escape_is_low_confidence():
    # x' = exp(x) from 0 blows up at t = 1; exp overflows long before 1e12
    traj = solve_tds(system(["exp(x[1]) + 0*xd[1][1]"]), PiecewiseHistory.constant(0.0, 1.0), None, 2.0)
    assert traj.escaped
    assert traj.escape.confidence == "low"
    assert traj.escape.t_star == pytest.approx(1.0, abs=0.01)


def test_large_but_finite_growth_is_not_an_escape():
    traj = solve_tds(load_catalog("unstable-linear"), PiecewiseHistory.constant(1.0, 1.0), None, 20.0)
    assert not traj.escaped
    assert traj(20.0)[0] == pytest.approx(math.exp(20.0), rel=1e-7)


def test_stiff_decay_is_not_an_escape():
    traj = solve_tds(system(["-1000*x[1] + xd[1][1]"]), PiecewiseHistory.constant(1.0, 1.0), None, 2.0)
    assert not traj.escaped
    assert abs(traj(2.0)[0]) < 1e-2


def test_dimension_and_domain_checks():
    sysdef = load_catalog("linear-delay")
    with pytest.raises(ValueError):
        solve_tds(sysdef, PiecewiseHistory.constant([1.0, 2.0], 1.0), None, 1.0)
    with pytest.raises(ValueError):
        solve_tds(sysdef, PiecewiseHistory.constant(1.0, 2.0), None, 1.0)
    with pytest.raises(ValueError):
        solve_tds(sysdef, PiecewiseHistory.constant(1.0, 1.0), InputSignal.zero(1), 1.0)
    with pytest.raises(ValueError):
        solve_tds(sysdef, PiecewiseHistory.constant(1.0, 1.0), None, 0.0)


@pytest.mark.parametrize("kw", [dict(rel_tol=0.0), dict(abs_tol=-1.0), dict(escape_threshold=0.5)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolveConfig(**kw)


def test_trajectory_is_contiguous_and_continuous():
    sysdef = load_catalog("sat-feedback")
    x0 = sample_history(np.random.default_rng(0), 1, 2.0, 1.0, pieces=5)
    traj = solve_tds(sysdef, x0, None, 5.0)
    p = traj.poly
    for i in range(p.n_pieces - 1):
        b = p.breaks[i + 1]
        assert np.allclose(p.eval_piece(i, b), p.eval_piece(i + 1, b), atol=1e-12)


def test_step_budget_is_enforced():
    with pytest.raises(SolverError, match="budget"):
        solve_tds(load_catalog("decay"), PiecewiseHistory.constant(1.0, 1.0), None, 5.0, SolveConfig(max_step=1e-3, max_steps=100))


def test_max_step_is_respected():
    traj = solve_tds(load_catalog("decay"), PiecewiseHistory.constant(1.0, 1.0), None, 2.0, SolveConfig(max_step=0.05))
    assert np.max(np.diff(traj.nodes)) <= 0.05 + 1e-15


def test_csv_and_metadata():
    traj = solve_tds(load_catalog("linear-delay"), PiecewiseHistory.constant(1.0, 1.0), None, 2.0)
    rows = trajectory_csv(traj).splitlines()
    assert rows[0] == "t,x_1,breakpoint"
    flagged = [r for r in rows[1:] if r.endswith(",1")]
    assert {float(r.split(",")[0]) for r in flagged} == {0.0, 1.0}
    meta = traj.metadata()
    assert meta["escape"] is None and meta["rel_tol"] == 1e-9 and meta["n_steps"] == traj.n_steps


@given(st.floats(-5, 5), st.integers(0, 50))
def test_linear_systems_are_homogeneous(alpha, seed):
    sysdef = load_catalog("smooth-two-delay")
    x0 = sample_history(np.random.default_rng(seed), 1, 1.0, 1.0)
    base = solve_tds(sysdef, x0, None, 3.0)
    scaled = solve_tds(sysdef, x0.scaled(alpha), None, 3.0)
    for t in (0.7, 1.9, 3.0):
        assert scaled(t)[0] == pytest.approx(alpha * base(t)[0], abs=1e-8 * max(1.0, abs(alpha)))


# -- solve_ode ----------------------------------------------------------------


def test_ode_relaxation_closed_form():
    sysdef = system(["-x[1] + xd[1][1]"])
    traj = solve_ode(sysdef, [0.0], InputSignal.constant([1.0], 1.0), None, 1.0)
    assert traj(1.0)[0] == pytest.approx(1 - math.exp(-1), abs=1e-8)


@pytest.mark.parametrize("c, z0, T", [(1.0, 0.0, 1.0), (-2.5, 3.0, 4.0), (0.0, 1.0, 2.0)])
def test_ode_quadrature_of_a_constant(c, z0, T):
    traj = solve_ode(system(["xd[1][1]"]), [z0], InputSignal.constant([c], T), None, T)
    assert traj(T)[0] == pytest.approx(z0 + c * T, abs=1e-12)


def test_ode_zero_rhs():
    traj = solve_ode(load_catalog("zero"), [1.5], InputSignal.constant([9.0], 2.0), None, 2.0)
    assert np.all(traj.poly.sample(np.linspace(0, 2, 9)) == 1.5)


def test_ode_lands_on_input_breaks():
    v = InputSignal.piecewise_constant([0.0, 0.3, 0.9, 2.0], [1.0, -1.0, 2.0])
    traj = solve_ode(system(["xd[1][1]"]), [0.0], v, None, 2.0)
    for b in (0.3, 0.9):
        assert np.min(np.abs(traj.nodes - b)) <= 1e-15
    assert traj(2.0)[0] == pytest.approx(0.3 - 0.6 + 2.2, abs=1e-12)


def test_ode_checks_v_width():
    with pytest.raises(ValueError, match="p\\*n"):
        solve_ode(load_catalog("two-delay"), [0.0, 0.0], InputSignal.constant([1.0, 2.0], 1.0), None, 1.0)


# -- lift_to_tds ----------------------------------------------------------------


def test_lift_single_delay():
    h = lift_to_tds(load_catalog("linear-delay"), [0.25], InputSignal.constant([1.0], 0.5), 0.5)
    assert h(-1.0)[0] == 1.0 and h(-0.6)[0] == 1.0
    assert h(-0.5)[0] == 0.0 and h(-0.1)[0] == 0.0
    assert h(0.0)[0] == 0.25


def test_lift_two_delays_places_disjoint_windows():
    sysdef = system(["-x[1] + xd[1][1] + xd[2][1]"], delays=(1.0, 1.6))
    v = InputSignal.constant([2.0, 3.0], 0.5)
    h = lift_to_tds(sysdef, [0.0], v, 0.5)
    assert h(-1.6)[0] == 3.0 and h(-1.15)[0] == 3.0
    assert h(-1.05)[0] == 0.0
    assert h(-1.0)[0] == 2.0 and h(-0.55)[0] == 2.0
    assert h(-0.45)[0] == 0.0


@pytest.mark.parametrize("delta", [0.7, 0.61, 0.0, -0.1])
def test_lift_rejects_out_of_range_delta(delta):
    sysdef = system(["xd[1][1] + xd[2][1]"], delays=(1.0, 1.6))
    with pytest.raises(ValueError, match="admissible"):
        lift_to_tds(sysdef, [0.0], InputSignal.constant([1.0, 1.0], 1.0), delta)


@pytest.mark.parametrize("seed", range(6))
def test_lift_round_trip(seed):
    rng = np.random.default_rng(1000 + seed)
    sysdef, _, u, _ = random_triple(rng)
    delta = 0.8 * sysdef.delays.separation()
    from retarda.signals import sample_input

    v = sample_input(sysdef.n * sysdef.p, 1.0, delta, pieces=2, degree=2, rng=rng)
    z0 = rng.uniform(-1, 1, sysdef.n)
    back = solve_tds(sysdef, lift_to_tds(sysdef, z0, v, delta), u, delta)
    ref = solve_ode(sysdef, z0, v, u, delta)
    assert sup_gap(back, ref, 0.0, delta) <= 1e-8


# -- flow_segment ------------------------------------------------------------------


def test_flow_segment_examples():
    lin = load_catalog("linear-delay")
    x0 = PiecewiseHistory.constant(1.0, 1.0)
    assert flow_segment(lin, x0, None, 0.0) is x0
    seg = flow_segment(lin, x0, None, 1.0)
    assert seg(-0.25)[0] == pytest.approx(0.25, abs=1e-12)
    assert seg(0.0)[0] == pytest.approx(0.0, abs=1e-12)

    jumpy = PiecewiseHistory.piecewise_constant([-1.0, -0.3, 0.0], [4.0, -1.0], [2.0])
    flushed = flow_segment(load_catalog("zero"), jumpy, None, 1.0)
    assert norm_xinf(flushed) == 2.0
    assert np.all(flushed.poly.sample(np.linspace(-1, 0, 11)) == 2.0)


def test_flow_segment_raises_on_escape():
    with pytest.raises(EscapeError):
        flow_segment(load_catalog("quadratic-blowup"), PiecewiseHistory.constant(2.0, 1.0), None, 1.0)


def test_segment_matches_flow_segment():
    sysdef = load_catalog("hutchinson")
    x0 = sample_history(np.random.default_rng(7), 1, 1.0, 1.0)
    traj = solve_tds(sysdef, x0, None, 2.3)
    a = segment_at(x0, traj, 2.3)
    b = flow_segment(sysdef, x0, None, 2.3)
    for s in np.linspace(-1.0, 0.0, 17):
        assert a(s)[0] == pytest.approx(b(s)[0], abs=1e-12)


# -- oracle agreement -------------------------------------------------------------

# independent oracle (Richardson-extrapolated Euler), evaluated once and frozen
FROZEN = {
    "hutchinson": {2.0: [1.1713202702788286], 4.0: [0.9471211318344033]},
    "damped-oscillator": {2.0: [0.2218799203696404, -0.47518414887690663], 4.0: [-0.26017143883290256, -0.0013316262772522947]},
    "stable-linear-delay": {2.0: [0.0017444533136141145], 4.0: [-0.0017280793956229936]},
    "smooth-two-delay": {2.0: [0.43662005777631013], 4.0: [0.1825452501444618]},
    "cubic-damping": {2.0: [0.5582643158666727], 4.0: [0.496891597489298]},
}


@pytest.mark.parametrize("name", sorted(FROZEN))
def test_matches_frozen_oracle(name):
    pb = SMOOTH_PROBLEMS[name]
    traj = solve_tds(load_catalog(name), PiecewiseHistory.constant(pb["history"], max(pb["delays"])), None, 4.0)
    for t, want in FROZEN[name].items():
        assert np.allclose(traj(t), want, rtol=0, atol=1e-8)


@pytest.mark.parametrize("name", sorted(FROZEN))
def test_euler_error_halves_with_the_step(name):
    pb = SMOOTH_PROBLEMS[name]
    traj = solve_tds(load_catalog(name), PiecewiseHistory.constant(pb["history"], max(pb["delays"])), None, 4.0)
    errs = []
    for h in (2.0**-6, 2.0**-7, 2.0**-8):
        ts, xs = euler_dde(pb["f"], pb["delays"], pb["history"], 4.0, h)
        # compare on the common coarse grid; a single time can sit near a zero of the error
        idx = np.arange(0, len(ts), round(2.0**-6 / h))
        errs.append(max(float(np.max(np.abs(xs[i] - traj(ts[i])))) for i in idx))
    for a, b in zip(errs, errs[1:]):
        assert 1.8 < a / b < 2.2


@pytest.mark.parametrize("name", TAME[:6])
def test_cauchy_in_the_tolerance(name):
    sysdef = load_catalog(name)
    x0 = sample_history(np.random.default_rng(5), sysdef.n, 1.0, sysdef.delays.max_delay)
    T = 3.0
    prev = None
    diffs = []
    for tol in (1e-6, 1e-8, 1e-10, 1e-12):
        traj = solve_tds(sysdef, x0, None, T, SolveConfig(rel_tol=tol, abs_tol=tol))
        if prev is not None:
            diffs.append(sup_gap(prev, traj, 0.0, T))
        prev = traj
    assert diffs[-1] < 1e-9
    assert diffs[-1] <= diffs[0]
