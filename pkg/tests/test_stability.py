import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from retarda import load_catalog, norm_xinf, parse_system, solve_tds
from retarda.history import window_norm
from retarda.pipeline import PipelineSettings, run_gas_to_ugas
from retarda.reachability import estimate_reach
from retarda.rhsdsl import estimate_lipschitz
from retarda.sampling import on_sphere, sample_continuous_history
from retarda.signals import derive_rng
from retarda.stability import (
    EnvelopeRefused,
    FunctionEnvelope,
    GridEnvelope,
    KappaTable,
    KLShapeError,
    MuBound,
    build_bar_beta,
    check_ls_ga,
    check_ugas,
    envelope_from_json,
    fit_envelope,
    fit_mu,
    gronwall_bound,
)

# -- mu and kappa ------------------------------------------------------------


def test_mu_of_the_zero_system():
    table = estimate_reach(load_catalog("zero"), [0.5, 1.0, 2.0], 1.0, 20, seed=0, inputs=False)
    mu = fit_mu(table)
    for r in (0.5, 1.0, 2.0):
        for t in (0.0, 0.4, 1.0):
            assert 1.1 * 0.98 * r <= mu(t, r) <= 1.1 * r * (1 + 1e-12)
    assert mu(0.5, 0.0) == 0.0


def test_mu_of_decay_does_not_grow():
    table = estimate_reach(load_catalog("decay"), [0.5, 1.0, 2.0], 1.0, 20, seed=1, inputs=False)
    mu = fit_mu(table)
    for r in (0.5, 1.0, 2.0):
        assert mu(1.0, r) <= 1.1 * r * (1 + 1e-12)


def test_mu_is_monotone():
    table = estimate_reach(load_catalog("hutchinson"), [0.2, 0.7, 1.5], 1.0, 10, seed=2, inputs=False)
    mu = fit_mu(table)
    ts = np.linspace(0, 1, 15)
    rs = np.linspace(0, 2, 15)
    vals = np.array([[mu(t, r) for t in ts] for r in rs])
    assert np.all(np.diff(vals, axis=0) >= 0)
    assert np.all(np.diff(vals, axis=1) >= 0)


def test_mu_rejects_escapes_and_bad_tables():
    table = estimate_reach(load_catalog("quadratic-blowup"), [2.0], 1.0, 4, seed=3, inputs=False)
    with pytest.raises(ValueError, match="escape"):
        fit_mu(table)
    with pytest.raises(ValueError):
        MuBound(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([[0.0, 0.0], [2.0, 1.0]]))


def test_kappa_table_dominates_between_nodes():
    sysdef = load_catalog("cubic-damping")
    radii = [0.25, 0.5, 1.0, 2.0]
    kt = KappaTable.estimate(sysdef, radii, samples=200, seed=4)
    for r in np.linspace(0.1, radii[-1], 12):
        assert kt(r) >= estimate_lipschitz(sysdef, float(r), 200, 4)


# -- Gronwall and bar-beta ---------------------------------------------------


def test_gronwall_examples():
    ident = lambda t, r: r  # noqa: E731
    assert gronwall_bound(1.0, lambda s: 1.0, ident, 1.0) == pytest.approx(math.e, abs=1e-12)
    assert gronwall_bound(0.0, lambda s: 1.0, ident, 1.0) == 0.0
    assert gronwall_bound(1.0, lambda s: s, lambda t, r: 2.0 * r, 1.0) == pytest.approx(math.e**2, abs=1e-12)
    with pytest.raises(ValueError):
        gronwall_bound(-1.0, lambda s: 1.0, ident, 1.0)
    with pytest.raises(ValueError):
        gronwall_bound(1.0, lambda s: math.inf, ident, 1.0)


def test_bar_beta_branches():
    bar = build_bar_beta(FunctionEnvelope.exponential(), lambda r: 1.0, lambda t, r: r, 1.0)
    assert bar(0.0, 0.0) == 0.0 and bar(0.0, 7.0) == 0.0
    # past theta_p the beta branch takes over: e * exp(-(t - 1))
    assert bar(1.0, 3.0) == pytest.approx(math.e * math.exp(-2.0), rel=1e-14)
    with pytest.raises(ValueError):
        bar.tilde(1.0, -1.5)
    with pytest.raises(ValueError):
        bar(1.0, -0.1)


@given(
    st.floats(0.5, 5.0),
    st.floats(0.1, 3.0),
    st.floats(0.0, 2.0),
    st.floats(0.2, 3.0),
)
def test_bar_beta_has_kl_shape(gain, rate, kap, theta):
    bar = build_bar_beta(
        FunctionEnvelope.exponential(gain, rate), lambda r: kap, lambda t, r: r, theta, np.linspace(0, 5, 12), np.linspace(0, 8, 12)
    )
    for r in (0.0, 0.3, 2.0):
        for t in np.linspace(0.0, theta, 5):
            assert bar(r, t) >= bar.gronwall(r) * (1 - 1e-15)


def test_validation_reports_the_cell():
    growing = FunctionEnvelope(lambda r, t: r * (1 + t))
    with pytest.raises(KLShapeError) as err:
        growing.validate([0.0, 1.0], [0.0, 1.0])
    assert err.value.cell == (1.0, 1.0)
    with pytest.raises(KLShapeError, match="r = 0"):
        FunctionEnvelope(lambda r, t: 1.0 + r).validate([0.0, 1.0], [0.0])
    with pytest.raises(KLShapeError, match="decay"):
        FunctionEnvelope(lambda r, t: r).validate([0.0, 1.0], [0.0, 1.0])


# -- fitting ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def decay_envelope():
    return fit_envelope(load_catalog("decay"), [0.5, 1.0, 2.0], 10.0, 8, seed=5)


def test_decay_envelope_is_close_to_the_flow(decay_envelope):
    for r in (0.5, 1.0, 2.0):
        for t in np.linspace(1.0, 15.0, 57):
            exact = r * math.exp(-(t - 1.0))
            assert exact <= decay_envelope(r, t) <= 2.2 * exact


@pytest.mark.parametrize("name, radii, horizon", [("decay", [0.5, 1.0, 2.0], 10.0), ("sat-feedback", [0.3, 1.0, 3.0], 12.0), ("damped-oscillator", [0.5, 1.5], 12.0)])
def test_envelope_dominates_its_fit_samples(name, radii, horizon):
    sysdef = load_catalog(name)
    env = fit_envelope(sysdef, radii, horizon, 8, seed=5)
    theta = sysdef.delays.max_delay
    for ri, r in enumerate(radii):
        for i in range(8):
            rng = derive_rng(5, 0xE7, ri, i)
            x0 = sample_continuous_history(rng, sysdef.n, r, theta, 4, on_sphere("mixed", i))
            traj = solve_tds(sysdef, x0, None, horizon)
            s = norm_xinf(x0)
            for t in np.linspace(0.0, horizon, 97):
                assert window_norm(x0, traj, t) <= env(s, t)


def test_envelope_has_kl_shape(decay_envelope):
    decay_envelope.validate(np.linspace(0, 3, 20), np.linspace(0, 20, 40))
    assert decay_envelope.tail_rate > 0.5


def test_unstable_system_is_refused():
    with pytest.raises(EnvelopeRefused, match="non-decaying"):
        fit_envelope(load_catalog("unstable-linear"), [0.5, 1.0], 5.0, 4, seed=6)


def test_quadratic_escape_is_refused():
    with pytest.raises(EnvelopeRefused, match="non-decaying"):
        fit_envelope(load_catalog("quadratic-blowup"), [2.0], 3.0, 4, seed=7)


def test_zero_data_gives_the_zero_envelope():
    env = fit_envelope(load_catalog("decay"), [0.0], 2.0, 3, seed=8)
    assert np.all(env.values == 0.0)
    assert env(0.0, 1.0) == 0.0


def test_fit_requires_zero_equilibrium():
    shifted = parse_system(json.dumps({"n": 1, "m": 0, "delays": [1.0], "f": ["1 - x[1]"]}))
    with pytest.raises(ValueError):
        fit_envelope(shifted, [1.0], 2.0, 2, seed=0)


# -- checks on discontinuous data ------------------------------------------------------


@pytest.mark.parametrize("env", [FunctionEnvelope.exponential(100.0, 0.1), FunctionEnvelope.exponential(1e4, 1.0)])
def test_growth_violates_any_envelope(env):
    rep = check_ugas(load_catalog("unstable-linear"), env, [1.0], 20.0, 3, seed=9)
    assert not rep.ok
    assert all(v.t < 20.0 for v in rep.violations)
    assert all(v.lhs > v.rhs for v in rep.violations)


def test_zero_history_never_violates():
    rep = check_ugas(load_catalog("hutchinson"), FunctionEnvelope.exponential(), [0.0], 5.0, 4, seed=10)
    assert rep.ok and rep.samples_checked == 4


def test_escape_is_reported_with_a_tag():
    rep = check_ugas(load_catalog("quadratic-blowup"), FunctionEnvelope.exponential(10.0, 0.1), [3.0], 2.0, 2, seed=11)
    tags = {v.tag for v in rep.violations}
    assert "escape" in tags
    assert rep.to_csv().splitlines()[0] == "r,sample,x0_norm,t,lhs,rhs,tag"


def test_spread_deals_samples_over_the_radii():
    rep = check_ugas(load_catalog("decay"), FunctionEnvelope.exponential(1.2, 0.5), [0.5, 1.0, 2.0], 3.0, 7, seed=12, spread=True)
    assert rep.samples_checked == 7


def test_ls_ga_decay():
    eps = [0.1, 1.0, 5.0]
    rep = check_ls_ga(load_catalog("decay"), eps, [1.0], 10.0, 6, seed=13)
    for e in eps:
        assert rep.safe_delta[e] >= e / 1.1
    assert rep.locally_stable and rep.attractive


def test_ls_fails_for_growth():
    # the smallest candidate is eps / 1024, so the horizon must exceed log(1024)
    rep = check_ls_ga(load_catalog("unstable-linear"), [0.1, 1.0], [1.0], 10.0, 4, seed=14)
    assert all(d is None for d in rep.safe_delta.values())
    assert not rep.attractive


def test_ga_fails_for_the_zero_system():
    rep = check_ls_ga(load_catalog("zero"), [1.0], [0.5, 1.0], 5.0, 4, seed=15)
    assert rep.locally_stable
    assert not rep.attractive
    assert all(t is None for _, _, t in rep.ga_times)


# -- serialisation and a small pipeline --------------------------------------------


def test_envelope_json_round_trip(decay_envelope):
    back = envelope_from_json(json.dumps(decay_envelope.to_dict()))
    assert isinstance(back, GridEnvelope)
    for r, t in [(0.3, 0.0), (1.7, 4.2), (2.5, 30.0)]:
        assert back(r, t) == decay_envelope(r, t)


def test_small_pipeline_end_to_end():
    settings = PipelineSettings(r_max=1.0, horizon=8.0, r_min=0.1, reach_samples=8, fit_samples=6, check_samples=40, seed=3)
    res = run_gas_to_ugas(load_catalog("decay"), settings)
    assert res.ok and res.report.samples_checked == 40
    back = envelope_from_json(res.bar_beta.to_json())
    for r, t in [(0.0, 1.0), (0.4, 0.5), (1.0, 6.0)]:
        assert back(r, t) == res.bar_beta(r, t)
    assert res.settings.as_dict()["check_seed"] == 3 + 1_000_003


def test_pipeline_refuses_growth():
    settings = PipelineSettings(r_max=1.0, horizon=5.0, r_min=0.1, reach_samples=4, fit_samples=3, check_samples=5)
    with pytest.raises(EnvelopeRefused, match="non-decaying"):
        run_gas_to_ugas(load_catalog("unstable-linear"), settings)

