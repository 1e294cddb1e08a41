import numpy as np
import pytest

from laglab.evalmetrics import ScoreMatrix, aggregate, auc, iqm, normalize, stratified_bootstrap_ci


def iqm_direct(values):
    """Independent re-statement of the documented fractional-trim rule."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    n = x.size
    m = 0.25 * n
    total, weight = 0.0, 0.0
    for i, v in enumerate(x):
        lo = max(m - i, 0.0)           # trimmed mass hitting this index from below
        hi = max(m - (n - 1 - i), 0.0)  # and from above
        w = max(1.0 - lo - hi, 0.0)
        total += w * v
        weight += w
    return total / weight


def test_normalize_endpoints_and_midpoint():
    assert normalize(3.0, 3.0, 7.0) == 0.0
    assert normalize(7.0, 3.0, 7.0) == 1.0
    assert normalize(5.0, 3.0, 7.0) == 0.5


def test_normalize_degenerate_range_warns_and_emits_half():
    with pytest.warns(UserWarning):
        out = normalize(np.array([2.0, 2.0]), 2.0, 2.0)
    np.testing.assert_array_equal(out, [0.5, 0.5])


def test_normalize_preserves_argmax():
    rng = np.random.default_rng(0)
    for _ in range(50):
        scores = rng.standard_normal(6) * rng.uniform(0.1, 10)
        lo, hi = scores.min(), scores.max()
        assert np.argmax(normalize(scores, lo, hi)) == np.argmax(scores)


def test_iqm_four_values():
    assert iqm([1.0, 2.0, 3.0, 4.0]) == pytest.approx(2.5, abs=1e-15)


def test_iqm_constant_array():
    assert iqm(np.full(7, 3.25)) == pytest.approx(3.25, abs=1e-15)


def test_iqm_outlier_robustness():
    rng = np.random.default_rng(1)
    base = rng.normal(0.0, 1.0, 20)
    spoiled = base.copy()
    spoiled[0] = 1e6
    iqm_shift = abs(iqm(spoiled) - iqm(base))
    mean_shift = abs(spoiled.mean() - base.mean())
    assert iqm_shift < 0.2
    assert mean_shift > 1e4


def test_iqm_matches_direct_rule_fractional_sizes():
    rng = np.random.default_rng(2)
    for n in range(2, 40):
        values = rng.standard_normal(n)
        assert iqm(values) == pytest.approx(iqm_direct(values), abs=1e-12)


def test_aggregate_extremes_and_brute_force():
    ones = ScoreMatrix(np.ones((4, 3)), ["a", "b", "c"])
    agg = aggregate(ones)
    assert agg == {"median": 1.0, "iqm": 1.0, "mean": 1.0, "optimality_gap": 0.0}
    zeros = ScoreMatrix(np.zeros((4, 3)), ["a", "b", "c"])
    assert aggregate(zeros)["optimality_gap"] == 1.0

    rng = np.random.default_rng(3)
    scores = rng.uniform(-0.2, 1.4, size=(50, 5))
    sm = ScoreMatrix(scores, list("abcde"))
    agg = aggregate(sm)
    flat = scores.ravel()
    assert agg["median"] == pytest.approx(np.median(flat), abs=1e-12)
    assert agg["mean"] == pytest.approx(flat.mean(), abs=1e-12)
    assert agg["iqm"] == pytest.approx(iqm_direct(flat), abs=1e-12)
    assert agg["optimality_gap"] == pytest.approx(np.mean(1.0 - np.minimum(flat, 1.0)), abs=1e-12)


def test_bootstrap_zero_variance_collapses():
    sm = ScoreMatrix(np.full((6, 2), 0.7), ["a", "b"])
    lo, hi = stratified_bootstrap_ci(sm, lambda s: float(s.mean()), num_resamples=200)
    assert lo == hi == pytest.approx(0.7)


def test_bootstrap_deterministic_under_seed():
    rng = np.random.default_rng(4)
    sm = ScoreMatrix(rng.uniform(0, 1, (10, 3)), ["a", "b", "c"])
    a = stratified_bootstrap_ci(sm, lambda s: float(s.mean()), 500, rng=np.random.default_rng(5))
    b = stratified_bootstrap_ci(sm, lambda s: float(s.mean()), 500, rng=np.random.default_rng(5))
    assert a == b


def test_bootstrap_interval_narrows_with_runs():
    rng = np.random.default_rng(6)
    small = ScoreMatrix(rng.normal(0.5, 0.2, (10, 3)), list("abc"))
    large = ScoreMatrix(rng.normal(0.5, 0.2, (100, 3)), list("abc"))
    lo_s, hi_s = stratified_bootstrap_ci(small, lambda s: float(s.mean()), 500, rng=np.random.default_rng(7))
    lo_l, hi_l = stratified_bootstrap_ci(large, lambda s: float(s.mean()), 500, rng=np.random.default_rng(8))
    assert (hi_l - lo_l) < (hi_s - lo_s)


def test_bootstrap_coverage_on_gaussian():
    # nominal 95% interval should cover the true mean ~95% of the time
    rng = np.random.default_rng(9)
    trials, covered = 400, 0
    for _ in range(trials):
        sm = ScoreMatrix(rng.normal(0.0, 1.0, (25, 3)), list("abc"))
        lo, hi = stratified_bootstrap_ci(sm, lambda s: float(s.mean()), 400, rng=rng)
        covered += int(lo <= 0.0 <= hi)
    assert abs(covered / trials - 0.95) <= 0.02


def test_auc_constant_and_ramp():
    steps = np.array([0.0, 100.0, 200.0])
    assert auc(steps, np.ones(3)) == pytest.approx(1.0, abs=1e-15)
    assert auc(steps, np.zeros(3)) == pytest.approx(0.0, abs=1e-15)
    assert auc(np.array([0.0, 100.0]), np.array([0.0, 1.0])) == pytest.approx(0.5, abs=1e-15)
