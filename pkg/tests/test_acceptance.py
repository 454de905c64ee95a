"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The verdict lines are printed in the terminal summary (see conftest.py).
Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import time

import numpy as np
from scipy import stats

from distforest import archive, data, mle
from distforest import tree as dtree
from distforest.baselines import fit_emos, fit_intercept
from distforest.evaluation import crpss, mean_crps, quantile_residuals, variable_importance
from distforest.families import CensoredNormal, ParamVector
from distforest.forest import ForestConfig, grow_forest
from distforest.tree import TreeConfig, grow, permutation_moments
from oracles import crps_oracle, fd_score, grid_oracle, mc_moments

FAM = CensoredNormal()


def _scores(y):
    return FAM.score(mle.fit(FAM, mle.WeightedSample(y)).theta, y)


def test_criterion_01_score_gradient(acceptance_report):
    rng = np.random.default_rng(2024)
    mu = rng.uniform(-5, 10, 1000)
    sigma = rng.uniform(0.2, 5, 1000)
    y = np.where(rng.uniform(size=1000) < 0.3, 0.0, rng.uniform(0, 20, 1000))
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(1000):
        an = FAM.score(ParamVector(mu[i], sigma[i]), y[i])
        fd = fd_score(FAM, mu[i], sigma[i], y[i])
        rel = np.abs(an - fd) / np.maximum(np.abs(fd), 1e-3)
        worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 1.0
    acceptance_report(1, ok, f"max relative score error {worst:.2e} (< 1e-6), {elapsed:.2f} s (< 1 s)")
    assert ok


def test_criterion_02_mle_oracle(acceptance_report):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        while True:
            y = np.maximum(0, rng.normal(rng.uniform(-0.5, 2.5), rng.uniform(0.5, 2.0), 200))
            if 2 <= np.count_nonzero(y == 0) <= 198:
                break
        th = mle.fit(FAM, mle.WeightedSample(y)).theta
        mu, sigma = grid_oracle(FAM, y)
        worst = max(worst, abs(th.mu - mu), abs(th.sigma - sigma))
    closed = 0.0
    for _ in range(20):
        y = rng.normal(10, 2, 200)
        th = mle.fit(FAM, mle.WeightedSample(y)).theta
        closed = max(closed, abs(th.mu - y.mean()), abs(th.sigma - y.std()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and closed < 1e-8 and elapsed < 30
    acceptance_report(2, ok, f"grid oracle max deviation {worst:.1e} (< 1e-4), closed form "
                             f"{closed:.1e} (< 1e-8), {elapsed:.1f} s (< 30 s)")
    assert ok


def test_criterion_03_permutation_moments(acceptance_report):
    rng = np.random.default_rng(42)
    n = 150
    h = _scores(np.maximum(0, rng.normal(0.5, 1.0, n)))
    codes = rng.integers(0, 3, n)
    columns = {"numeric": rng.uniform(size=(n, 1)),
               "3-level": (codes[:, None] == np.arange(3)[None, :]).astype(float)}
    t0 = time.perf_counter()
    worst = 0.0
    for g in columns.values():
        _, mu, Sigma = permutation_moments(g, h)
        mean, cov, se_mean, se_cov = mc_moments(g, h, 10_000, np.random.default_rng(1))
        worst = max(worst, float(np.max(np.abs(mu - mean) / se_mean)),
                    float(np.max(np.abs(Sigma - cov) / se_cov)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 3 and elapsed < 30
    acceptance_report(3, ok, f"max deviation {worst:.2f} MC standard errors (<= 3), {elapsed:.1f} s (< 30 s)")
    assert ok


def test_criterion_04_null_calibration(acceptance_report):
    t0 = time.perf_counter()
    rejected = 0
    for s in range(1000):
        ds, _ = data.generate(data.SyntheticScenario("null", n=200, m_noise=1, seed=s))
        rejected += dtree.test_association(_scores(ds.y), ds.column(0)).p_value < 0.05
    rate = rejected / 1000
    elapsed = time.perf_counter() - t0
    ok = 0.035 <= rate <= 0.065 and elapsed < 120
    acceptance_report(4, ok, f"null rejection rate {rate:.3f} in [0.035, 0.065], {elapsed:.1f} s (< 120 s)")
    assert ok


def test_criterion_05_scale_signal(acceptance_report):
    t0 = time.perf_counter()
    hits = 0
    for s in range(100):
        ds, _ = data.generate(data.SyntheticScenario("step-scale", n=500, m_noise=4, seed=s))
        root = grow(ds, FAM, TreeConfig(max_depth=1), rng=s).nodes[0]
        hits += root.split is not None and root.split.variable == 0
    elapsed = time.perf_counter() - t0
    ok = hits >= 95 and elapsed < 120
    acceptance_report(5, ok, f"variance covariate chosen at the root in {hits}/100 (>= 95), "
                             f"{elapsed:.1f} s (< 120 s)")
    assert ok


def test_criterion_06_changepoint(acceptance_report):
    # n = 1000: at n = 400 even the MLE on the true partition misses 0.15 in ~17% of runs
    thr_hits = leaf_hits = 0
    for s in range(100):
        ds, _ = data.generate(data.SyntheticScenario("step-location", n=1000, seed=s))
        tree = grow(ds, FAM, TreeConfig(), rng=s)
        root = tree.nodes[0]
        thr_hits += root.split is not None and abs(root.split.threshold - 0.5) <= 0.05
        pred = tree.predict(np.array([[0.25], [0.75]]))
        leaf_hits += bool(np.all(np.abs(pred.mu - [0.0, 3.0]) <= 0.15)
                          and np.all(np.abs(pred.sigma - 1.0) <= 0.15))
    ok = thr_hits >= 95 and leaf_hits >= 95
    acceptance_report(6, ok, f"threshold within 0.05 in {thr_hits}/100 (>= 95), regime leaf "
                             f"parameters within 0.15 in {leaf_hits}/100 (>= 95), n = 1000")
    assert ok


def test_criterion_07_weight_normalization(acceptance_report):
    ds, _ = data.generate(data.SyntheticScenario("smooth", n=500, m_noise=2, seed=3))
    forest = grow_forest(ds, FAM, ForestConfig(ntree=100, seed=0))
    Z = np.random.default_rng(5).uniform(size=(1000, ds.m))
    W = forest.weights_matrix(Z)
    dev = float(np.max(np.abs(W.sum(axis=1) - 1)))
    ok = dev <= 1e-12 and bool(np.all(W >= 0)) and len(forest.trees) == 100
    acceptance_report(7, ok, f"max |sum w - 1| = {dev:.1e} (<= 1e-12) over 1000 points, 100 trees")
    assert ok


def test_criterion_08_crps(acceptance_report):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(50):
        mu, sigma = rng.uniform(-3, 6), rng.uniform(0.3, 3)
        y = 0.0 if rng.uniform() < 0.3 else rng.uniform(0, 10)
        worst = max(worst, abs(FAM.crps(ParamVector(mu, sigma), y) - crps_oracle(FAM, mu, sigma, y)))
    ref = float(FAM.crps(ParamVector(10.0, 1.0), 10.0))
    ok = worst < 1e-4 and abs(ref - 0.23370) <= 1e-4
    acceptance_report(8, ok, f"max |closed - integral| {worst:.1e} (< 1e-4), CRPS(10, 1, 10) = {ref:.7f}")
    assert ok


def test_criterion_09_skill(acceptance_report):
    t0 = time.perf_counter()
    vs_emos, emos_vs_int = [], []
    for s in range(10):
        ds, _ = data.generate(data.SyntheticScenario("interaction", n=3000, m_noise=15, seed=s))
        tr, te = ds.subset(np.arange(2000)), ds.subset(np.arange(2000, 3000))
        forest = grow_forest(tr, FAM, ForestConfig(seed=s))
        emos = fit_emos(tr, FAM, "ens_mean", "ens_sd")
        icpt = fit_intercept(tr, FAM)
        c_f, c_e, c_i = (mean_crps(FAM, m.predict(te.X), te.y) for m in (forest, emos, icpt))
        vs_emos.append(crpss(c_f, c_e))
        emos_vs_int.append(crpss(c_e, c_i))
    elapsed = time.perf_counter() - t0
    a, b = float(np.median(vs_emos)), float(np.median(emos_vs_int))
    ok = a > 0 and b > 0 and elapsed < 600
    acceptance_report(9, ok, f"median CRPSS forest vs EMOS {a:.3f} (> 0), EMOS vs intercept {b:.3f} "
                             f"(> 0), {elapsed:.0f} s (< 600 s)")
    assert ok


def test_criterion_10_importance(acceptance_report):
    ds, _ = data.generate(data.SyntheticScenario("smooth", n=1500, m_noise=5, seed=10,
                                                 params={"scale": 1.0}))
    tr, te = ds.subset(np.arange(1000)), ds.subset(np.arange(1000, 1500))
    forest = grow_forest(tr, FAM, ForestConfig(seed=0))
    imp = variable_importance(forest, te, rng=1, n_permutations=5)
    top2 = sorted(imp, key=imp.get, reverse=True)[:2]
    noise = max(abs(v) for k, v in imp.items() if k.startswith("noise"))
    ok = set(top2) == {"x1", "x2"} and noise <= 0.005
    acceptance_report(10, ok, f"top-2 {top2} (x1, x2 planted), max |noise delta CRPS| {noise:.4f} (<= 0.005)")
    assert ok


def test_criterion_11_calibration(acceptance_report):
    passed = 0
    for s in range(100):
        ds, _ = data.generate(data.SyntheticScenario("emos-linear", n=1500, seed=1000 + s))
        tr, te = ds.subset(np.arange(1000)), ds.subset(np.arange(1000, 1500))
        model = fit_emos(tr, FAM, "ens_mean", "ens_sd")
        pit = quantile_residuals(FAM, model.predict(te.X), te.y, rng=s, n_draws=1).pit[:, 0]
        passed += stats.kstest(pit, "uniform").pvalue > 0.01
    ok = passed >= 95
    acceptance_report(11, ok, f"KS uniformity of held-out PIT not rejected at 0.01 in {passed}/100 (>= 95)")
    assert ok


def test_criterion_12_reproducibility(acceptance_report, tmp_path):
    ds, _ = data.generate(data.SyntheticScenario("interaction", n=600, m_noise=3, seed=12))
    Z = ds.X[:200]
    blobs, preds = [], []
    for k in range(2):
        forest = grow_forest(ds, FAM, ForestConfig(ntree=20, seed=77))
        path = tmp_path / f"forest{k}.json"
        archive.save_model(forest, path, archive.fingerprint(ds), timestamp=False)
        blobs.append(path.read_bytes())
        preds.append(forest.predict(Z))
    same_archive = blobs[0] == blobs[1]
    same_pred = np.array_equal(preds[0].mu, preds[1].mu) and np.array_equal(preds[0].sigma, preds[1].sigma)
    round_trip = True
    models = [forest, grow(ds, FAM, TreeConfig(), rng=0), fit_emos(ds, FAM, "ens_mean", "ens_sd")]
    for i, model in enumerate(models):
        path = tmp_path / f"m{i}.json"
        archive.save_model(model, path)
        a, b = model.predict(Z), archive.load_model(path).predict(Z)
        round_trip &= np.array_equal(a.mu, b.mu) and np.array_equal(a.sigma, b.sigma)
    ok = same_archive and same_pred and round_trip
    acceptance_report(12, ok, f"identical archives {same_archive}, identical predictions {same_pred}, "
                              f"bit-exact save-load-predict (forest, tree, EMOS) {round_trip}")
    assert ok

