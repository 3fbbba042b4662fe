import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvi_engine.stats import (StatsError, bland_altman, bootstrap_auc_ci, cohens_d, confusion_at, evaluate,
                              mann_whitney, mw_exact_p, mw_normal_p, pearson, roc_auc, significance_marker,
                              stratified_kfold, write_group_table, youden_threshold)


def brute_u(a, b):
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)


def brute_exact_p(a, b):
    """Permutation p-value counting U by pairwise comparison over all relabelings."""
    pooled = list(a) + list(b)
    n1 = len(a)
    mu = n1 * len(b) / 2
    obs = abs(brute_u(a, b) - mu)
    hits = total = 0
    for idx in itertools.combinations(range(len(pooled)), n1):
        s = set(idx)
        ga = [pooled[i] for i in idx]
        gb = [pooled[i] for i in range(len(pooled)) if i not in s]
        hits += abs(brute_u(ga, gb) - mu) >= obs - 1e-9
        total += 1
    return hits / total


def brute_auc(pos, neg):
    return brute_u(pos, neg) / (len(pos) * len(neg))


# --- Mann-Whitney / effect size ---------------------------------------------

def test_mw_separated_triplets():
    g = mann_whitney([1, 2, 3], [4, 5, 6])
    assert g.u_statistic == 0.0
    assert g.p_value == pytest.approx(0.1, abs=1e-12)
    assert g.method == "exact"


def test_mw_identical_groups():
    assert mann_whitney([1, 2, 3], [3, 2, 1]).p_value == pytest.approx(1.0)
    g = mann_whitney([4, 4, 4], [4, 4])
    assert g.p_value == 1.0 and g.degenerate


def test_mw_method_switch():
    assert mann_whitney(range(6), range(6, 12)).method == "exact"
    assert mann_whitney(range(6), range(6, 13)).method == "normal-approx"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=5), st.lists(st.integers(0, 6), min_size=1, max_size=5))
def test_exact_p_matches_bruteforce(a, b):
    assert mw_exact_p(a, b) == pytest.approx(brute_exact_p(a, b), abs=1e-12)


def test_normal_approx_agrees_for_moderate_tie_free_samples():
    # outside the small-sample regime the two methods track each other closely
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(10):
        n1, n2 = rng.integers(7, 10, 2)
        x = rng.permutation(n1 + n2).astype(float)
        worst = max(worst, abs(mw_exact_p(x[:n1], x[n1:]) - mw_normal_p(x[:n1], x[n1:])))
    assert worst < 0.02


def test_cohens_d():
    assert cohens_d([1, 2, 3], [3, 4, 5]) == pytest.approx(-2.0, abs=1e-12)
    assert math.isnan(cohens_d([1, 1], [1, 1]))


@pytest.mark.parametrize("p, m", [(0.0005, "***"), (0.005, "**"), (0.03, "*"), (0.2, "ns")])
def test_significance_marker(p, m):
    assert significance_marker(p) == m


def test_group_table_columns(tmp_path):
    p = tmp_path / "t.csv"
    write_group_table(p, [("rmssd_ms", mann_whitney([30, 35, 40], [20, 22, 25]))])
    lines = p.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "feature,group1_mean_sd,group2_mean_sd,n,p,significance,effect_d"
    assert lines[1].startswith("rmssd_ms,35.00 ± 5.00,22.33 ± 2.52,3/3,0.100,ns,")


# --- agreement ----------------------------------------------------------------

def test_pearson_examples():
    x = np.arange(10.0)
    assert pearson(x, 2 * x)[0] == pytest.approx(1.0)
    assert pearson(x, -x)[0] == pytest.approx(-1.0)
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4])[0] == pytest.approx(0.8, abs=1e-12)
    with pytest.raises(StatsError):
        pearson([1, 1, 1], [1, 2, 3])


def test_pearson_p_value_matches_scipy():
    from scipy.stats import pearsonr
    rng = np.random.default_rng(2)
    x = rng.normal(size=25)
    y = x + rng.normal(size=25)
    r, p = pearson(x, y)
    ref = pearsonr(x, y)
    assert r == pytest.approx(ref[0], abs=1e-12) and p == pytest.approx(ref[1], rel=1e-9)


def test_bland_altman_worked_example():
    r = bland_altman([10, 20, 30], [12, 19, 33])
    sd = math.sqrt(39 / 9)
    assert abs(r.bias - (-4 / 3)) < 1e-9
    assert abs(r.sd_diff - sd) < 1e-9
    assert abs(r.loa_low - (-4 / 3 - 1.96 * sd)) < 1e-9
    assert abs(r.loa_high - (-4 / 3 + 1.96 * sd)) < 1e-9
    assert r.loa_low == pytest.approx(-5.4134, abs=1e-4) and r.loa_high == pytest.approx(2.7468, abs=1e-4)


def test_bland_altman_degenerate():
    r = bland_altman([1, 2, 3], [1, 2, 3])
    assert (r.bias, r.loa_low, r.loa_high) == (0.0, 0.0, 0.0)
    r = bland_altman([6, 7, 9], [1, 2, 4])
    assert r.bias == 5.0 and r.sd_diff == 0.0


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=30))
def test_bland_altman_antisymmetric(pairs):
    a, b = zip(*pairs)
    f, r = bland_altman(a, b), bland_altman(b, a)
    assert f.bias == pytest.approx(-r.bias, abs=1e-9)
    assert (f.loa_high - f.loa_low) == pytest.approx(r.loa_high - r.loa_low, abs=1e-9)


# --- ROC ----------------------------------------------------------------------

def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert roc_auc([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0]) == 0.75
    assert roc_auc([0.5] * 6, [1, 0, 1, 0, 1, 0]) == 0.5


def test_auc_matches_bruteforce():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(2, 31))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = rng.integers(0, 8, n).astype(float)
        assert roc_auc(s, y) == brute_auc(s[y == 1], s[y == 0])


@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=40, unique=True), st.randoms())
def test_auc_complement_and_monotone_invariance(scores, rnd):
    y = np.array([i % 2 for i in range(len(scores))])
    rnd.shuffle(y)
    s = np.array(scores)
    assert roc_auc(s, y) + roc_auc(-s, y) == pytest.approx(1.0, abs=1e-12)
    assert roc_auc(2.0 * s, y) == roc_auc(s, y)
    assert roc_auc(np.argsort(np.argsort(s)) ** 3, y) == roc_auc(s, y)


def test_auc_needs_both_classes():
    with pytest.raises(StatsError):
        roc_auc([1, 2], [1, 1])


def test_bootstrap_ci():
    s = np.r_[np.linspace(0.6, 1, 20), np.linspace(0, 0.4, 20)]
    y = np.r_[np.ones(20), np.zeros(20)]
    assert bootstrap_auc_ci(s, y, 200, seed=1) == (1.0, 1.0)
    rng = np.random.default_rng(0)
    s2 = rng.normal(size=40)
    assert bootstrap_auc_ci(s2, y, 300, seed=7) == bootstrap_auc_ci(s2, y, 300, seed=7)


def test_bootstrap_ci_width_envelope():
    # binormal generator with d' = 0.954 gives AUC = Phi(d'/sqrt 2) = 0.75
    widths = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        s = np.r_[rng.normal(0.954, 1, 20), rng.normal(0, 1, 20)]
        y = np.r_[np.ones(20), np.zeros(20)]
        lo, hi = bootstrap_auc_ci(s, y, 500, seed=seed)
        widths.append(hi - lo)
    assert 0.1 <= min(widths) and max(widths) <= 0.4


def test_youden_examples():
    m = youden_threshold([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
    assert (m.sens, m.spec, m.youden_j) == (1.0, 1.0, 1.0)
    m = youden_threshold([0.3] * 4, [1, 0, 1, 0])
    assert m.youden_j == 0.0 and m.threshold == 0.3
    m = youden_threshold([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0])
    assert m.youden_j == pytest.approx(0.5)
    assert m.threshold == pytest.approx(0.3) and (m.sens, m.spec) == (1.0, 0.5)


def test_confusion_rates():
    m = confusion_at([0.9, 0.6, 0.4, 0.1], [1, 0, 1, 0], 0.5)
    assert (m.sens, m.spec, m.ppv, m.npv) == (0.5, 0.5, 0.5, 0.5)


# --- folds --------------------------------------------------------------------

def test_kfold_divisible():
    y = np.r_[np.ones(10), np.zeros(10)]
    f = stratified_kfold(y, 5, seed=3)
    for k in range(5):
        assert (y[f == k] == 1).sum() == 2 and (y[f == k] == 0).sum() == 2
    assert np.array_equal(f, stratified_kfold(y, 5, seed=3))


def test_kfold_cves_shape():
    y = np.r_[np.ones(84), np.zeros(88)]
    f = stratified_kfold(y, 5, seed=0)
    sizes = sorted(np.bincount(f, minlength=5).tolist(), reverse=True)
    assert sizes == [35, 35, 34, 34, 34]
    assert set(np.bincount(f[y == 1], minlength=5).tolist()) <= {16, 17}


@given(st.lists(st.integers(0, 1), min_size=10, max_size=80), st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_kfold_partitions(labels, k, seed):
    y = np.array(labels)
    if np.unique(y, return_counts=True)[1].min() < k:
        with pytest.raises(StatsError):
            stratified_kfold(y, k, seed)
        return
    f = stratified_kfold(y, k, seed)
    assert f.shape == y.shape and set(f.tolist()) == set(range(k))


def test_evaluate_invariants():
    rng = np.random.default_rng(1)
    y = np.r_[np.ones(30), np.zeros(30)]
    s = rng.normal(size=60) + y
    rep = evaluate(s, y, 200, seed=0, folds=stratified_kfold(y, 5, 0))
    assert rep.auc_ci_low <= rep.auc <= rep.auc_ci_high
    assert all(0 <= v <= 1 for v in (rep.sens, rep.spec, rep.ppv, rep.npv))
    assert len(rep.fold_aucs) == 5 and rep.n == 60
    assert "AUC" not in rep.table_row("m") and rep.table_row("m").startswith("m ")
