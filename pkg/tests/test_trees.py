import numpy as np
import pytest

from ttpredict.data import CovariateSchema, ObservationalDataset
from ttpredict.errors import DomainError, PositivityError, SchemaError
from ttpredict.rng import stream
from ttpredict.trees import (
    BartFit,
    CompactTree,
    Forest,
    McmcSettings,
    Tree,
    TreePrior,
    clever_covariate,
    diagnostics_csv,
    fit_continuous,
    fit_probit,
    inclusion_proportions,
    predict,
)
from ttpredict.trees.bart import Backfitter, leaf_posterior, sample_sigma2, sigma2_posterior

SHORT = McmcSettings(burn_in=150, draws=100)


def _ds(y, x, t=None, seed=0):
    x = np.asarray(x, float).reshape(len(y), -1)
    if t is None:
        t = stream(seed, "t").integers(0, 2, len(y))
        t[:2] = (1, 0)
    names = tuple(f"x{j}" for j in range(x.shape[1]))
    schema = CovariateSchema(names, (), "t", "y")
    return ObservationalDataset(np.asarray(y, float), np.asarray(t, np.int8), x, schema)


def _split_tree(var, cut, lo, hi):
    return CompactTree(np.array([var, -1, -1], np.int32), np.array([cut, 0, 0.0]),
                       np.array([1, -1, -1], np.int32), np.array([2, -1, -1], np.int32), np.array([0, lo, hi]))


def _fit_from(forests, names):
    return BartFit("continuous", forests, tuple(names), 0.0, 1.0, TreePrior(), McmcSettings(), None)


def test_clever_covariate_values():
    c = clever_covariate([1, 0, 1], [0.5, 0.5, 0.25])
    assert c.h.tolist() == [2.0, -2.0, 4.0]


def test_clever_covariate_boundary():
    with pytest.raises(DomainError):
        clever_covariate([1, 0], [1.0, 0.5])


def test_clever_covariate_sign_and_magnitude():
    rng = stream(0, "h")
    t = rng.integers(0, 2, 500)
    pi = rng.uniform(0.001, 0.999, 500)
    h = clever_covariate(t, pi).h
    assert np.array_equal(np.sign(h), 2 * t - 1)
    assert np.all(np.abs(h) >= 1)


def test_stump_prediction():
    f = Forest.from_trees([CompactTree.stump(3.25)])
    assert np.all(f.predict(np.zeros((4, 2))) == 3.25)


def test_two_tree_fixture_hand_sum():
    f = Forest.from_trees([CompactTree.stump(1.5), _split_tree(0, 0.0, -1.0, 2.0)])
    x = np.array([[-1.0], [0.0], [0.5]])
    assert f.predict(x).tolist() == [0.5, 0.5, 3.5]
    assert f.per_tree(x).tolist() == [[1.5, -1.0], [1.5, -1.0], [1.5, 2.0]]


def test_forest_matches_tree_sum_on_random_fixtures():
    rng = stream(0, "forest")
    for _ in range(20):
        trees = [_split_tree(int(rng.integers(3)), rng.normal(), rng.normal(), rng.normal()) for _ in range(7)]
        x = rng.normal(size=(50, 3))
        f = Forest.from_trees(trees)
        total = sum(t.predict(x) for t in trees)
        np.testing.assert_allclose(f.predict(x), total, rtol=0, atol=1e-12)
        assert [t.to_dict() for t in f.trees()] == [t.to_dict() for t in trees]


def test_inclusion_counting_fixture():
    f = Forest.from_trees([_split_tree(1, 0.0, 0, 1), _split_tree(1, 1.0, 0, 1), _split_tree(2, 0.0, 0, 1)])
    inc = inclusion_proportions(_fit_from([f], ["a", "b", "c"]))
    assert inc["proportions"]["a"] == 0
    assert inc["proportions"]["b"] == pytest.approx(2 / 3)
    assert inc["proportions"]["c"] == pytest.approx(1 / 3)


def test_inclusion_single_column():
    f = Forest.from_trees([_split_tree(3, 0.0, 0, 1)] * 4)
    props = inclusion_proportions(_fit_from([f], ["a", "b", "c", "d"]))["proportions"]
    assert props == {"a": 0.0, "b": 0.0, "c": 0.0, "d": 1.0}


def test_inclusion_no_splits_flagged():
    inc = inclusion_proportions(_fit_from([Forest.from_trees([CompactTree.stump(0.0)])], ["a"]))
    assert inc["empty"] is True


def test_grow_prune_reversible():
    x = stream(0, "gp").normal(size=(30, 2))
    tree = Tree(30)
    Tree.grow(tree.root, 0, 0.0, x)
    before = tree.structure()
    leaf = tree.root.left
    Tree.grow(leaf, 1, float(np.median(x[leaf.idx, 1])), x)
    assert tree.structure() != before
    Tree.prune(leaf)
    assert tree.structure() == before


def test_proposed_grow_then_prune_restores():
    rng = stream(1, "gp")
    x = rng.normal(size=(40, 3))
    bf = Backfitter(x, TreePrior(n_trees=1), 0.1, rng)
    tree = bf.trees[0]
    before = tree.structure()
    r = np.where(x[:, 0] > 0, 5.0, -5.0)
    for _ in range(20):
        if bf.propose_grow(tree, r, 0.01):
            break
    assert tree.structure() != before
    Tree.prune(tree.root)
    assert tree.structure() == before


def test_leaf_update_matches_conjugate_posterior():
    rng = stream(2, "leaf")
    x = np.arange(20.0)[:, None]
    r = np.r_[np.full(8, 1.5), np.full(12, -0.5)] + rng.normal(0, 0.1, 20)
    bf = Backfitter(x, TreePrior(n_trees=1), 0.3, rng)
    tree = bf.trees[0]
    Tree.grow(tree.root, 0, 7.0, x)
    s2 = 0.25
    reps = 100_000
    left = np.empty(reps)
    right = np.empty(reps)
    for i in range(reps):
        bf.draw_leaves(tree, r, s2)
        left[i], right[i] = tree.root.left.mu, tree.root.right.mu
    for vals, idx in ((left, slice(0, 8)), (right, slice(8, 20))):
        m, v = leaf_posterior(len(r[idx]), r[idx].sum(), s2, 0.09)
        assert abs(vals.mean() - m) < 3 * np.sqrt(v / reps)
        assert vals.var() == pytest.approx(v, rel=0.03)


def test_sigma_update_matches_inverse_gamma():
    rng = stream(3, "sigma")
    sse, n, nu, lam = 12.0, 40, 3.0, 0.2
    shape, scale = sigma2_posterior(sse, n, nu, lam)
    mean = scale / (shape - 1)
    var = scale**2 / ((shape - 1) ** 2 * (shape - 2))
    draws = np.array([sample_sigma2(sse, n, nu, lam, rng) for _ in range(100_000)])
    assert abs(draws.mean() - mean) < 3 * np.sqrt(var / draws.size)
    assert draws.var() == pytest.approx(var, rel=0.05)


def test_constant_outcome_collapses():
    x = stream(4, "c").normal(size=(60, 2))
    with pytest.warns(RuntimeWarning):
        fit = fit_continuous(_ds(np.full(60, 7.0), x), mcmc=McmcSettings(50, 30), rng=stream(4))
    f = predict(fit, x, t_new=1).mean(axis=0)
    assert np.all(np.abs(f - 7.0) <= 7.0 * 1e-6 + 1e-6)
    assert fit.sigma.max() < 1e-6


@pytest.fixture(scope="module")
def step_fit():
    rng = stream(5, "step")
    x = rng.uniform(-1, 1, 500)
    y = (x > 0).astype(float)
    return fit_continuous(_ds(y, x), mcmc=SHORT, rng=stream(5)), x


def test_step_function_recovered(step_fit):
    fit, _ = step_fit
    f = predict(fit, np.array([[-0.5], [0.5]]), t_new=0).mean(axis=0)
    assert abs(f[0]) < 0.1 and abs(f[1] - 1) < 0.1


def test_smooth_function_r2():
    rng = stream(6, "smooth")
    x = rng.uniform(-2, 2, 500)
    y = np.sin(2 * x)
    fit = fit_continuous(_ds(y, x), mcmc=SHORT, rng=stream(6))
    t = np.zeros(500)
    f = predict(fit, x[:, None], t_new=t).mean(axis=0)
    r2 = 1 - np.sum((y - f) ** 2) / np.sum((y - y.mean()) ** 2)
    assert r2 > 0.9


def test_predict_shapes_and_noise(step_fit):
    fit, x = step_fit
    p = predict(fit, x[:7, None], t_new=1)
    assert p.shape == (fit.n_draws, 7)
    noisy = predict(fit, x[:7, None], t_new=1, noise=True, rng=stream(0))
    assert not np.array_equal(p, noisy)


def test_predict_schema_mismatch(step_fit):
    fit, _ = step_fit
    with pytest.raises(SchemaError):
        predict(fit, np.zeros((3, 2)), t_new=1)


def test_export_replays_predictions(step_fit):
    fit, x = step_fit
    again = BartFit.from_dict(fit.to_dict())
    xs = x[:20, None]
    assert np.array_equal(predict(again, xs, t_new=1), predict(fit, xs, t_new=1))


def test_diagnostics_csv(step_fit):
    fit, _ = step_fit
    lines = diagnostics_csv(fit).splitlines()
    assert lines[0] == "draw,sigma,splits_T,splits_x0"
    assert len(lines) == fit.n_draws + 2 and lines[-1].startswith("inclusion")


def test_clever_covariate_recomputed_at_new_points():
    rng = stream(7, "cc")
    x = rng.normal(size=(80, 1))
    pi_fn = lambda xx: np.full(len(xx), 0.25)  # noqa: E731
    y = x[:, 0] + rng.normal(size=80)
    ds = _ds(y, x)
    cc = clever_covariate(ds.t, pi_fn(x), "constant", pi_fn)
    fit = fit_continuous(ds, cc, McmcSettings(5, 3), rng=stream(7))
    w1 = fit.design(x[:2], t_new=1)
    w0 = fit.design(x[:2], t_new=0)
    assert w1[:, -1].tolist() == [4.0, 4.0]
    assert w0[:, -1].tolist() == pytest.approx([-4 / 3] * 2)


def test_fit_is_seed_deterministic():
    rng = stream(8, "det")
    x = rng.normal(size=(50, 2))
    y = x[:, 0] + rng.normal(size=50)
    a = fit_continuous(_ds(y, x), mcmc=McmcSettings(20, 10), rng=stream(8, "fit"))
    b = fit_continuous(_ds(y, x), mcmc=McmcSettings(20, 10), rng=stream(8, "fit"))
    assert a.to_json() == b.to_json()


def test_fit_needs_ten_rows():
    with pytest.raises(SchemaError):
        fit_continuous(_ds(np.arange(5.0), np.arange(5.0)), mcmc=McmcSettings(1, 1))


def test_probit_fair_coin():
    rng = stream(9, "coin")
    x = rng.normal(size=(1000, 2))
    t = rng.integers(0, 2, 1000)
    fit = fit_probit(x, t, McmcSettings(100, 100), rng=stream(9))
    assert 0.45 <= fit.pi_hat.mean() <= 0.55


def test_probit_separated_stays_inside():
    x = np.linspace(-1, 1, 100)[:, None]
    t = (x[:, 0] > 0).astype(int)
    fit = fit_probit(x, t, McmcSettings(100, 100), rng=stream(10))
    assert np.all((fit.pi_hat > 0) & (fit.pi_hat < 1))
    assert fit.pi_hat[t == 1].mean() > 0.8 and fit.pi_hat[t == 0].mean() < 0.2


def test_probit_single_class():
    with pytest.raises(PositivityError):
        fit_probit(np.zeros((10, 1)), np.ones(10), McmcSettings(1, 1))
