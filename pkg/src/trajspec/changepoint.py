"""Distribution-shift detection on an observable series.

Three offline detectors over the same (values, steps) series: the largest
jump of the smoothed first difference, a two-sided CUSUM referenced to the
series' initial segment, and an exhaustive two-sample Welch t scan. All
run retrospectively on the full series; none implements sequential
stopping semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .timeseries import _smooth3


@dataclass
class ShiftDetection:
    method: str
    detected_step: int | None     # None when nothing crossed the threshold
    detected_index: int | None
    statistic: float
    params: dict = field(default_factory=dict)


def _as_series(values, steps):
    v = np.asarray(values, dtype=np.float64)
    s = np.asarray(steps, dtype=np.int64)
    if v.ndim != 1 or v.shape != s.shape:
        raise ValueError("values and steps must be 1-D and equal length")
    if np.any(np.diff(s) <= 0):
        raise ValueError("steps must be strictly increasing")
    if not np.all(np.isfinite(v)):
        raise ValueError("detectors need finite values")
    return v, s


def detect_max_derivative(values, steps) -> ShiftDetection:
    """Shift at the largest absolute first difference after smoothing.

    The difference d[t] = s[t+1] - s[t] localizes the change between t and
    t+1; the detection lands on t+1. Ties break to the earliest index.
    """
    v, s = _as_series(values, steps)
    if v.size < 5:
        raise ValueError("max-derivative detector needs length >= 5")
    sm = _smooth3(v)
    d = np.abs(np.diff(sm))
    t = int(np.argmax(d))  # argmax returns the first maximum
    return ShiftDetection("max_derivative", int(s[t + 1]), t + 1,
                          float(d[t]), {"smooth": 3})


def detect_cusum(values, steps, reference_n: int = 10,
                 allowance: float = 1.0,
                 threshold: float = 8.0) -> ShiftDetection:
    """Two-sided CUSUM against a baseline from the first points.

    The baseline mean comes from the first ``reference_n`` points. The
    noise scale comes from a MAD over the whole series' first differences
    (a level shift contributes a single outlier difference, so the
    estimate stays shift-insensitive, and a 10-point sample std is far
    too noisy to calibrate the threshold). Deviations beyond
    ``allowance`` noise units accumulate; a shift is declared at the
    first index where either side exceeds ``threshold`` noise units.

    Defaults are Monte Carlo calibrated: on 60-point pure-noise series
    the false-alarm rate is ~1.5% (textbook kappa=0.5, h=5 alarms on
    10-36% of such series because its in-control average run length is
    only ~465 points).
    """
    v, s = _as_series(values, steps)
    if reference_n < 5:
        raise ValueError("reference_n must be >= 5")
    if v.size <= reference_n:
        raise ValueError("series not longer than the reference segment")
    mu = v[:reference_n].mean()
    diffs = np.diff(v)
    sd = 1.4826 * np.median(np.abs(diffs - np.median(diffs))) / np.sqrt(2)
    if sd == 0:
        raise ValueError("degenerate baseline: series has no noise scale")
    kappa = allowance * sd
    h = threshold * sd
    s_pos = 0.0
    s_neg = 0.0
    params = {"reference_n": reference_n, "allowance": allowance,
              "threshold": threshold}
    best = 0.0
    for i in range(reference_n, v.size):
        s_pos = max(0.0, s_pos + (v[i] - mu - kappa))
        s_neg = max(0.0, s_neg + (mu - v[i] - kappa))
        excursion = max(s_pos, s_neg)
        best = max(best, excursion)
        if excursion > h:
            return ShiftDetection("cusum", int(s[i]), i,
                                  float(excursion / sd), params)
    return ShiftDetection("cusum", None, None, float(best / sd), params)


def detect_ttest(values, steps, margin: int = 5) -> ShiftDetection:
    """Exhaustive Welch two-sample t scan over every admissible split."""
    v, s = _as_series(values, steps)
    if margin < 5:
        raise ValueError("margin must be >= 5")
    if v.size < 2 * margin:
        raise ValueError("series shorter than twice the margin")
    best_t = -np.inf
    best_idx = None
    for tau in range(margin, v.size - margin + 1):
        left, right = v[:tau], v[tau:]
        var_l = left.var(ddof=1)
        var_r = right.var(ddof=1)
        denom = var_l / left.size + var_r / right.size
        if denom == 0:
            continue  # both sides constant at this split
        t_stat = abs((left.mean() - right.mean()) / np.sqrt(denom))
        if t_stat > best_t:
            best_t = t_stat
            best_idx = tau
    params = {"margin": margin}
    if best_idx is None:
        return ShiftDetection("ttest", None, None, np.nan, params)
    return ShiftDetection("ttest", int(s[best_idx]), best_idx,
                          float(best_t), params)


def score_detection(det: ShiftDetection, true_step: int) -> int:
    """Signed detection error in training steps."""
    if det.detected_step is None:
        raise ValueError(f"{det.method} made no detection; nothing to "
                         f"score")
    return int(det.detected_step) - int(true_step)
