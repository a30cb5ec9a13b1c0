import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from ttpredict import ipw
from ttpredict.errors import DomainError, EstimandUndefinedError, SchemaError, UnsupportedKernelError
from ttpredict.resampler import (
    BayesianBootstrapKernel,
    Estimand,
    FactorizedPredictive,
    ImputedTrial,
    IPWUrnKernel,
    NaturalAssignmentKernel,
    PlugInOutcomeKernel,
    ate_from_trial,
    att_from_trial,
    bayesian_bootstrap_kernel,
    cate_by_value,
    risk_ratio_from_trial,
    run_predictive_resampling,
    simulate_trial,
    summarize_draws,
    treatment_fraction_band,
)
from ttpredict.rng import stream


def _trial(y, t, t_obs=None, x=None, names=()):
    return ImputedTrial(np.asarray(y, float), np.asarray(t), None if x is None else np.asarray(x, float),
                        None if t_obs is None else np.asarray(t_obs), covariate_names=names)


def _ipw_pred(n=60, seed=0, mode=ipw.OBSERVED_COUNT):
    rng = stream(seed, "ipw-fixture")
    x = rng.normal(size=(n, 1))
    pi = np.clip(1 / (1 + np.exp(-x[:, 0])), 0.1, 0.9)
    t = (rng.random(n) < pi).astype(int)
    t[:2] = (1, 0)
    y = 1 + x[:, 0] + t + rng.normal(size=n)
    spec = ipw.DirichletPosteriorSpec.from_weights(y, ipw.with_ess(ipw.hajek_weights(t, pi), t, mode))
    return FactorizedPredictive(BayesianBootstrapKernel(x), IPWUrnKernel(spec), NaturalAssignmentKernel(x, t), ("x",))


def _const_pred(c=3.0, n=5):
    x = np.arange(float(n))[:, None]
    f = np.full((2, n), c)
    return FactorizedPredictive(BayesianBootstrapKernel(x), PlugInOutcomeKernel(f, f), None, ("x",))


# estimands -------------------------------------------------------------------

def test_ate_hand_values():
    assert ate_from_trial(_trial([1, 0], [1, 0])) == 1
    assert ate_from_trial(_trial([3, 5, 2, 6], [1, 1, 0, 0])) == 0


def test_ate_empty_arm():
    with pytest.raises(EstimandUndefinedError):
        ate_from_trial(_trial([1, 2], [1, 1]))


def test_att_all_treated_equals_ate():
    tr = _trial([3, 5, 2, 7], [1, 1, 0, 0], t_obs=[1, 1, 1, 1])
    assert att_from_trial(tr) == ate_from_trial(tr)


def test_att_fixture():
    tr = _trial([3, 5, 2, 7, 100, -100], [1, 1, 0, 0, 1, 0], t_obs=[1, 0, 1, 1, 0, 0])
    # kept: (3,1), (2,0), (7,0) -> 3 - 4.5
    assert att_from_trial(tr) == -1.5
    perturbed = _trial([3, 50, 2, 7, 1, 1], [1, 1, 0, 0, 1, 0], t_obs=[1, 0, 1, 1, 0, 0])
    assert att_from_trial(perturbed) == -1.5


def test_att_needs_natural_assignment():
    with pytest.raises(SchemaError):
        att_from_trial(_trial([1, 2], [1, 0]))
    with pytest.raises(EstimandUndefinedError):
        att_from_trial(_trial([1, 2], [1, 0], t_obs=[1, 0]))


def test_cate_single_value_is_ate():
    x = np.full((4, 1), 30.0)
    tr = _trial([3, 5, 2, 7], [1, 1, 0, 0], x=x, names=("age",))
    assert cate_by_value(tr, "age", [30]).effects[0] == ate_from_trial(tr)


def test_cate_two_value_fixture():
    x = np.array([[20.0], [20], [20], [25], [25], [25]])
    tr = _trial([4, 6, 1, 10, 2, 4], [1, 1, 0, 1, 0, 0], x=x, names=("age",))
    res = cate_by_value(tr, "age", [20, 25, 30])
    assert res.effects[:2].tolist() == [4.0, 7.0]
    assert np.isnan(res.effects[2]) and res.missing.tolist() == [30.0]
    assert res.counts1.tolist() == [2, 1, 0] and res.counts0.tolist() == [1, 2, 0]


def test_cate_needs_covariates():
    with pytest.raises(EstimandUndefinedError):
        cate_by_value(_trial([1, 2], [1, 0]), "age", [1])


def test_risk_ratio_hand_values():
    y = [1, 1, 0, 0, 0, 1, 0, 0, 0, 0]
    t = [1] * 5 + [0] * 5
    assert risk_ratio_from_trial(_trial(y, t)) == pytest.approx(2.0)
    assert risk_ratio_from_trial(_trial([1, 0, 1, 0], [1, 1, 0, 0])) == 1.0


def test_risk_ratio_errors():
    with pytest.raises(EstimandUndefinedError):
        risk_ratio_from_trial(_trial([1, 0, 0], [1, 0, 0]))
    with pytest.raises(DomainError):
        risk_ratio_from_trial(_trial([2, 0, 1], [1, 0, 0]))


rows = st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=2, max_size=30).filter(
    lambda r: {t for _, t in r} == {0, 1} and any(y for y, t in r if t == 0))


@given(rows, st.randoms())
def test_functionals_permutation_invariant(r, rnd):
    perm = list(r)
    rnd.shuffle(perm)
    a = _trial(*zip(*r))
    b = _trial(*zip(*perm))
    assert ate_from_trial(a) == pytest.approx(ate_from_trial(b), abs=1e-12)
    assert risk_ratio_from_trial(a) == pytest.approx(risk_ratio_from_trial(b), rel=1e-12)


@given(rows)
def test_risk_ratio_monotone_in_treated_events(r):
    before = risk_ratio_from_trial(_trial(*zip(*r)))
    after = risk_ratio_from_trial(_trial(*zip(*(r + [(1, 1)]))))
    assert after >= before - 1e-12


def test_estimand_parse():
    e = Estimand.parse("cate:mage:20-22")
    assert e.grid == (20.0, 21.0, 22.0)
    assert e.labels() == ["CATE[mage=20]", "CATE[mage=21]", "CATE[mage=22]"]
    assert str(Estimand.parse("cate:mage:20,25")) == "cate:mage:20,25"
    assert Estimand.parse("ATE").labels() == ["ATE"]
    for bad in ("foo", "cate:mage", "ate:x"):
        with pytest.raises(ValueError):
            Estimand.parse(bad)


# summaries -------------------------------------------------------------------

def test_summary_hand_values():
    s = summarize_draws([1, 2, 3, 4], "ATE")
    assert s.mean == 2.5 and s.median == 2.5
    assert s.sd == pytest.approx(np.sqrt(5 / 3))
    assert s.lo95 == pytest.approx(1.075) and s.hi95 == pytest.approx(3.925)


def test_summary_constant():
    s = summarize_draws([7.0] * 10, "ATE")
    assert (s.mean, s.median, s.sd, s.lo95, s.hi95) == (7.0, 7.0, 0.0, 7.0, 7.0)


def test_summary_non_finite_names_replicate():
    with pytest.raises(DomainError, match="replicate 2"):
        summarize_draws([1.0, 2.0, np.nan], "ATE")


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50))
def test_summary_interval_is_empirical_quantiles(d):
    s = summarize_draws(d, "x")
    assert s.sd >= 0
    assert s.lo95 == np.quantile(d, 0.025) and s.hi95 == np.quantile(d, 0.975)


# kernels ---------------------------------------------------------------------

def test_bootstrap_single_row():
    k = bayesian_bootstrap_kernel(np.array([[4.0, 2.0]]))
    rng = stream(0)
    for _ in range(10):
        r = k.sample(rng)
        assert r == 0
        k.update(r)
    assert k.sample_path(rng, 50).tolist() == [0] * 50


def test_bootstrap_direct_weight_moments():
    n = 4
    k = BayesianBootstrapKernel(np.arange(float(n)))
    rng = stream(1, "bb")
    w = np.array([k.direct_weights(rng) for _ in range(100_000)])
    se = np.sqrt((n - 1) / (n * n * (n + 1)) / w.shape[0])
    assert np.all(np.abs(w.mean(axis=0) - 1 / n) < 3 * se)


def test_bootstrap_step_predictive_counts():
    k = BayesianBootstrapKernel(np.arange(3.0))
    k.update(1)
    k.update(1)
    assert k.predictive()[1].tolist() == [1, 3, 1]
    k.reset()
    assert k.predictive()[1].tolist() == [1, 1, 1]


def test_natural_assignment_cells():
    x = np.array([[0.0], [0.0], [1.0]])
    k = NaturalAssignmentKernel(x, [1, 0, 1])
    assert k.predictive(0) == (1, 2) and k.predictive(2) == (1, 1)
    k.update(0, 1)
    assert k.predictive(1) == (2, 3)


def test_constant_outcome_gives_zero_ate_in_every_mode():
    pred = _const_pred()
    for mode in ("direct", "sequential", "step"):
        run = run_predictive_resampling(pred, pred.n + 50, 5, ["ate"], seed=0, mode=mode)
        assert np.all(run.summary("ATE").draws == 0)


def test_treatment_fraction_band():
    pred = _ipw_pred()
    B, extra = 100, 2000
    total = 0
    for j in range(B):
        total += simulate_trial(pred, pred.n + extra, stream(0, "replicate", j), j, "sequential").t.sum()
    assert abs(total / (B * extra) - 0.5) <= treatment_fraction_band(B * extra)


@pytest.mark.parametrize("mode", ["sequential", "step"])
def test_outcome_ignores_natural_assignment(mode):
    pred = _ipw_pred()
    nat = pred.natural_assignment_kernel
    shuffled = NaturalAssignmentKernel(pred.covariate_kernel.x, stream(3).permutation(nat.t))
    other = FactorizedPredictive(pred.covariate_kernel, pred.outcome_kernel, shuffled, pred.covariate_names)
    a = simulate_trial(pred, pred.n + 300, stream(5), 0, mode)
    b = simulate_trial(other, pred.n + 300, stream(5), 0, mode)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.t, b.t)
    assert not np.array_equal(a.t_obs, b.t_obs)


def test_step_and_sequential_agree_in_law():
    pred = _ipw_pred(n=20)
    h = pred.n + 200
    a = run_predictive_resampling(pred, h, 1500, ["ate"], seed=1, mode="step").summary("ATE").draws
    b = run_predictive_resampling(pred, h, 1500, ["ate"], seed=2, mode="sequential").summary("ATE").draws
    assert ks_2samp(a, b).pvalue > 0.001


def test_truncation_stability():
    pred = _ipw_pred(n=200)
    B = 400
    s1 = run_predictive_resampling(pred, pred.n + 5_000, B, ["ate"], seed=3, mode="sequential").summary("ATE")
    s2 = run_predictive_resampling(pred, pred.n + 20_000, B, ["ate"], seed=4, mode="sequential").summary("ATE")
    se = np.sqrt((s1.sd**2 + s2.sd**2) / B)
    assert abs(s1.mean - s2.mean) < 4 * se
    assert s1.sd == pytest.approx(s2.sd, rel=0.2)


def test_threads_do_not_change_results():
    pred = _ipw_pred()
    a = run_predictive_resampling(pred, pred.n + 500, 40, ["ate"], seed=9, mode="sequential", threads=1)
    b = run_predictive_resampling(pred, pred.n + 500, 40, ["ate"], seed=9, mode="sequential", threads=4)
    assert np.array_equal(a.summary("ATE").draws, b.summary("ATE").draws)


def test_replicate_order_does_not_matter():
    pred = _ipw_pred()
    run = run_predictive_resampling(pred, pred.n + 500, 10, ["ate"], seed=9, mode="sequential")
    single = [ate_from_trial(simulate_trial(pred, pred.n + 500, stream(9, "replicate", j), j, "sequential"))
              for j in reversed(range(10))]
    assert run.summary("ATE").draws.tolist() == single[::-1]


def test_undefined_replicate_is_retried_then_fatal():
    pred = _ipw_pred()
    with pytest.raises(EstimandUndefinedError):
        run_predictive_resampling(pred, pred.n + 1, 3, ["ate"], seed=0, mode="sequential")
    run = run_predictive_resampling(pred, pred.n + 4, 30, ["ate"], seed=0, mode="sequential")
    assert run.retried and len(run.summary("ATE").draws) == 30


def test_horizon_must_exceed_n():
    pred = _ipw_pred()
    with pytest.raises(DomainError):
        run_predictive_resampling(pred, pred.n, 2, ["ate"], seed=0, mode="sequential")


def test_direct_mode_needs_closed_form():
    class Opaque:
        def for_replicate(self, j):
            return self

    pred = FactorizedPredictive(BayesianBootstrapKernel(np.zeros((3, 1))), Opaque())
    with pytest.raises(UnsupportedKernelError):
        run_predictive_resampling(pred, None, 2, ["ate"], seed=0, mode="direct")


def test_plugin_direct_is_weighted_effect():
    n = 6
    x = np.arange(float(n))[:, None]
    f1 = np.vstack([x[:, 0] * 2, x[:, 0] * 3])
    f0 = np.vstack([x[:, 0], x[:, 0]])
    pred = FactorizedPredictive(BayesianBootstrapKernel(x), PlugInOutcomeKernel(f1, f0), None, ("x",))
    for j in range(4):
        tr = simulate_trial(pred, None, stream(0, "replicate", j), j, "direct")
        omega = BayesianBootstrapKernel(x).direct_weights(stream(0, "replicate", j))
        assert ate_from_trial(tr) == pytest.approx(omega @ (f1[j % 2] - f0[j % 2]), rel=1e-12)


def test_direct_and_sequential_ipw_agree():
    pred = _ipw_pred(n=80)
    a = run_predictive_resampling(pred, pred.n + 10_000, 1000, ["ate"], seed=5, mode="sequential").summary("ATE")
    b = run_predictive_resampling(pred, None, 1000, ["ate"], seed=6, mode="direct").summary("ATE")
    assert ks_2samp(a.draws, b.draws).pvalue > 0.001


def test_trial_csv_dump():
    pred = _ipw_pred(n=10)
    tr = simulate_trial(pred, pred.n + 3, stream(0), 0, "sequential")
    lines = tr.to_csv().splitlines()
    assert lines[0] == "k,y,t,t_obs,x"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["11", "12", "13"]
