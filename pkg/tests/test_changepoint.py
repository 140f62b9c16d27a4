import numpy as np
import pytest
from scipy import stats

from trajspec import changepoint as cp


def _steps(n, stride=200, start=0):
    return np.arange(start, start + n * stride, stride)


def test_max_derivative_ideal_step():
    v = np.concatenate([np.zeros(30), np.ones(30)])
    det = cp.detect_max_derivative(v, _steps(60))
    assert abs(det.detected_index - 30) <= 1
    assert det.detected_step == det.detected_index * 200


def test_max_derivative_ramp_tie_earliest():
    # integer ramp: 3-point means are exact, so interior differences tie
    # bit-for-bit and the earliest one wins
    v = np.arange(40.0)
    det = cp.detect_max_derivative(v, _steps(40))
    assert det.detected_index == 2


def test_max_derivative_noisy_monte_carlo():
    hits = 0
    for t in range(100):
        rng = np.random.default_rng([7, t])
        v = np.concatenate([np.zeros(30), np.ones(30)])
        v += 0.05 * rng.normal(size=60)
        det = cp.detect_max_derivative(v, _steps(60))
        hits += abs(det.detected_index - 30) <= 2
    assert hits >= 90


def test_cusum_fast_detection_of_large_shift():
    # textbook kappa=0.5, h=5 detects an 8-sigma shift within a step or
    # two (those parameters false-alarm on ~1/3 of pure-noise prefixes,
    # which is why they are not the defaults; seed 0 has a quiet prefix)
    rng = np.random.default_rng(0)
    v = rng.normal(size=60)
    v[30:] += 8.0
    det = cp.detect_cusum(v, _steps(60), reference_n=10, allowance=0.5,
                          threshold=5.0)
    assert det.detected_index is not None
    assert 30 <= det.detected_index <= 32
    assert det.statistic > 5.0
    det_default = cp.detect_cusum(v, _steps(60))
    assert 30 <= det_default.detected_index <= 32


def test_cusum_false_alarm_rate():
    alarms = 0
    trials = 500
    for t in range(trials):
        rng = np.random.default_rng([11, t])
        v = rng.normal(size=60)
        det = cp.detect_cusum(v, _steps(60))
        alarms += det.detected_index is not None
    assert alarms / trials < 0.05


def test_cusum_shift_below_allowance_not_detected():
    rng = np.random.default_rng(2)
    v = rng.normal(size=80)
    v[40:] += 0.2  # far below the allowance
    det = cp.detect_cusum(v, _steps(80), reference_n=10)
    assert det.detected_index is None


def test_cusum_degenerate_baseline():
    v = np.ones(30)
    with pytest.raises(ValueError, match="noise scale"):
        cp.detect_cusum(v, _steps(30))


def test_ttest_two_level_exact():
    v = np.concatenate([np.zeros(30), np.ones(30)])
    v += 0.01 * np.random.default_rng(3).normal(size=60)
    det = cp.detect_ttest(v, _steps(60), margin=5)
    assert det.detected_index == 30
    assert det.statistic > 50


def test_ttest_statistic_matches_scipy():
    rng = np.random.default_rng(4)
    v = rng.normal(size=40)
    v[22:] += 1.0
    det = cp.detect_ttest(v, _steps(40), margin=5)
    tau = det.detected_index
    ref = stats.ttest_ind(v[:tau], v[tau:], equal_var=False)
    assert det.statistic == pytest.approx(abs(ref.statistic), rel=1e-12)


def test_ttest_pure_noise_below_permutation_null():
    rng = np.random.default_rng(5)
    ok = 0
    trials = 60
    for t in range(trials):
        v = np.random.default_rng([13, t]).normal(size=60)
        det = cp.detect_ttest(v, _steps(60), margin=5)
        null = []
        for j in range(60):
            perm = np.random.default_rng([17, t, j]).permutation(v)
            null.append(cp.detect_ttest(perm, _steps(60), margin=5).statistic)
        ok += det.statistic <= np.quantile(null, 0.99)
    assert ok / trials >= 0.90


def test_ttest_paper_geometry_monte_carlo():
    # 60 points, planted shift at point 20, stride 200
    hits = 0
    for t in range(100):
        rng = np.random.default_rng([19, t])
        v = rng.normal(size=60)
        v[20:] += 2.5
        det = cp.detect_ttest(v, _steps(60), margin=5)
        hits += abs(det.detected_index - 20) <= 2
    assert hits >= 90


def test_score_detection_paper_examples():
    det = cp.ShiftDetection("cusum", 18_000, 21, 7.0)
    assert cp.score_detection(det, 17_800) == 200
    det2 = cp.ShiftDetection("cusum", 18_200, 22, 7.0)
    assert cp.score_detection(det2, 17_800) == 400
    det3 = cp.ShiftDetection("ttest", 17_800, 20, 9.0)
    assert cp.score_detection(det3, 17_800) == 0
    none_det = cp.ShiftDetection("cusum", None, None, 1.0)
    with pytest.raises(ValueError, match="no detection"):
        cp.score_detection(none_det, 17_800)


def test_translation_equivariance_noiseless():
    # tiny fixed dither keeps the t-test's zero-variance splits alive
    # without moving any detector off the planted step
    dither = 1e-6 * np.sin(np.arange(60.0))
    for delta in (0, 5, 9):
        v = np.concatenate([np.zeros(25 + delta),
                            np.ones(35 - delta)]) + dither
        dt = cp.detect_ttest(v, _steps(60), margin=5)
        assert dt.detected_index == 25 + delta
        dd = cp.detect_max_derivative(v, _steps(60))
        assert abs(dd.detected_index - (25 + delta)) <= 1


def test_ttest_statistic_monotone_in_shift_size():
    rng = np.random.default_rng(6)
    noise = rng.normal(size=60) * 0.1
    prev = 0.0
    for mag in (0.5, 1.0, 2.0, 4.0):
        v = noise.copy()
        v[30:] += mag
        det = cp.detect_ttest(v, _steps(60), margin=5)
        assert det.statistic > prev
        prev = det.statistic


def test_input_validation():
    with pytest.raises(ValueError):
        cp.detect_max_derivative(np.ones(3), _steps(3))
    with pytest.raises(ValueError):
        cp.detect_cusum(np.ones(8), _steps(8), reference_n=10)
    with pytest.raises(ValueError):
        cp.detect_ttest(np.ones(8), _steps(8), margin=5)
    with pytest.raises(ValueError, match="finite"):
        cp.detect_max_derivative(np.array([1, np.nan, 2, 3, 4.0]),
                                 _steps(5))
