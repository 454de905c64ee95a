"""Scoring, skill, permutation importance, PIT and grouped cross-validation."""
import numpy as np
import pytest
from scipy import stats

from distforest import data
from distforest.baselines import fit_emos, fit_intercept
from distforest.evaluation import (
    crpss,
    cross_validate,
    evaluate,
    make_cv_plan,
    mean_crps,
    quantile_residuals,
    variable_importance,
)
from distforest.exceptions import DegenerateSampleError
from distforest.families import CensoredNormal, ParamVector
from distforest.forest import ForestConfig, grow_forest
from distforest.tree import TreeConfig, grow

FAM = CensoredNormal()


def test_crpss_examples():
    assert crpss(0.5, 0.5) == 0.0
    assert crpss(0.4, 0.5) == pytest.approx(0.2)
    assert crpss(0.6, 0.5) < 0
    with pytest.raises(ZeroDivisionError):
        crpss(0.1, 0.0)


def test_mean_crps_is_average_of_parts():
    rng = np.random.default_rng(0)
    th = ParamVector(rng.normal(1, 1, 40), rng.uniform(0.5, 2, 40))
    y = np.maximum(0, rng.normal(1, 1, 40))
    whole = mean_crps(FAM, th, y)
    a = FAM.crps(ParamVector(th.mu[:15], th.sigma[:15]), y[:15]).sum()
    b = FAM.crps(ParamVector(th.mu[15:], th.sigma[15:]), y[15:]).sum()
    assert whole == pytest.approx((a + b) / 40, rel=1e-14)
    with pytest.raises(ValueError):
        mean_crps(FAM, th, y[:3])


def test_evaluate_single_observation():
    ds, _ = data.generate(data.SyntheticScenario("step-location", n=200, seed=1))
    model = fit_intercept(ds, FAM)
    one = ds.subset([5])
    rep = evaluate(model, one, reference=model)
    assert rep.per_obs_crps.shape == (1,)
    assert rep.mean_crps == pytest.approx(FAM.crps(model.predict(one.X), one.y)[0])
    assert rep.crpss_vs_reference == 0.0


def test_importance_of_unused_column_is_zero():
    ds, _ = data.generate(data.SyntheticScenario("step-location", n=500, m_noise=3, seed=2))
    tree = grow(ds, FAM, TreeConfig(), rng=0)
    used = {n.split.variable for n in tree.nodes if n.split is not None}
    assert 0 in used
    imp = variable_importance(tree, ds, rng=1, n_permutations=3)
    assert list(imp) == list(ds.names)
    assert imp["x1"] > 0.1
    for j, name in enumerate(ds.names):
        if j not in used:
            assert imp[name] == 0.0


def test_pit_randomization_for_censored_rows():
    th = ParamVector(np.array([0.5, 0.5, 2.0]), np.array([1.0, 1.0, 1.0]))
    y = np.array([0.0, 1.2, 0.0])
    qr = quantile_residuals(FAM, th, y, rng=0, n_draws=500)
    atom = stats.norm.cdf(-th.mu / th.sigma)
    for i in (0, 2):
        assert np.all(qr.pit[i] > 0) and np.all(qr.pit[i] <= atom[i])
    np.testing.assert_allclose(qr.pit[1], stats.norm.cdf(0.7), rtol=1e-14)
    np.testing.assert_allclose(qr.residuals[1], 0.7, atol=1e-12)
    with pytest.raises(ValueError):
        quantile_residuals(FAM, th, y, n_draws=0)


def test_pit_clamping_is_flagged():
    th = ParamVector(np.array([0.0]), np.array([1.0]))
    qr = quantile_residuals(FAM, th, np.array([40.0]), rng=0, n_draws=2)
    assert qr.clamped.all()
    assert np.all(np.isfinite(qr.residuals))


def test_pit_uniform_under_true_model():
    ds, truth = data.generate(data.SyntheticScenario("step-scale", n=3000, seed=3))
    qr = quantile_residuals(FAM, truth, ds.y, rng=4, n_draws=1)
    assert stats.kstest(qr.pit[:, 0], "uniform").pvalue > 0.01


def test_cv_plan_partitions_groups():
    keys = np.repeat(np.arange(21), 5)
    plan = make_cv_plan(keys, repetitions=3, folds=7, seed=5)
    for r in range(3):
        seen = np.concatenate([plan.test_rows(keys, r, k) for k in range(7)])
        assert np.array_equal(np.sort(seen), np.arange(keys.size))
        for k in range(7):
            assert np.unique(keys[plan.test_rows(keys, r, k)]).size == 3
    again = make_cv_plan(keys, repetitions=3, folds=7, seed=5)
    assert np.array_equal(plan.assignment, again.assignment)
    loo = make_cv_plan(keys, repetitions=1, folds=21, seed=0)
    for k in range(21):
        assert np.unique(keys[loo.test_rows(keys, 0, k)]).size == 1
    with pytest.raises(ValueError):
        make_cv_plan(keys, folds=22)


def test_cross_validate_identical_models_have_zero_skill():
    ds, _ = data.generate(data.SyntheticScenario("emos-linear", n=300, seed=6, params={"groups": 10}))
    plan = make_cv_plan(ds.groups, repetitions=2, folds=5, seed=0)
    res = cross_validate(ds, {"a": lambda d: fit_intercept(d, FAM),
                              "b": lambda d: fit_intercept(d, FAM)}, plan, reference="a")
    np.testing.assert_array_equal(res.crpss["a"], 0.0)
    np.testing.assert_array_equal(res.crpss["b"], 0.0)
    assert len(list(res.rows())) == 4


def test_cross_validate_records_failures():
    ds, _ = data.generate(data.SyntheticScenario("emos-linear", n=200, seed=7, params={"groups": 8}))
    plan = make_cv_plan(ds.groups, repetitions=2, folds=4, seed=0)

    def broken(d):
        raise DegenerateSampleError("boom")

    res = cross_validate(ds, {"ref": lambda d: fit_intercept(d, FAM), "bad": broken}, plan, "ref")
    assert np.all(np.isnan(res.crpss["bad"]))
    assert np.all(np.isfinite(res.crps["ref"]))
    assert len(res.failures) == 2
    with pytest.raises(ValueError):
        cross_validate(ds, {"ref": lambda d: fit_intercept(d, FAM)}, plan, "other")


def test_forest_beats_intercept_in_cv():
    ds, _ = data.generate(data.SyntheticScenario("step-location", n=600, seed=8, params={"groups": 15}))
    plan = make_cv_plan(ds.groups, repetitions=3, folds=5, seed=1)
    res = cross_validate(ds, {
        "forest": lambda d: grow_forest(d, FAM, ForestConfig(ntree=20, seed=0)),
        "intercept": lambda d: fit_intercept(d, FAM),
    }, plan, "intercept")
    assert np.median(res.crpss["forest"]) > 0


def test_emos_beats_intercept_on_linear_data():
    ds, _ = data.generate(data.SyntheticScenario("emos-linear", n=1500, seed=9))
    tr, te = ds.subset(np.arange(1000)), ds.subset(np.arange(1000, 1500))
    rep = evaluate(fit_emos(tr, FAM, "ens_mean", "ens_sd"), te, reference=fit_intercept(tr, FAM))
    assert rep.crpss_vs_reference > 0
