"""Temporal coupling between spectral observables and a loss series.

Correlation-style statistics run on detrended, z-scored series: a cubic
trend is fit over the sample index and subtracted first, because slow
drifts otherwise dominate every correlation. Phase segmentation, by
contrast, operates on the raw ratio values (its thresholds are stated in
raw ratio units).

Sign convention for lags: positive lag means the first series leads the
second. Granger tests use ordinary least squares with an F test on the
added lag coefficients; the F tail probability comes from a local
continued-fraction implementation of the regularized incomplete beta
function, so no statistics package is required at run time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_SLIDING_WINDOW = 7


@dataclass
class MetricSeries:
    steps: np.ndarray   # strictly increasing ints
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.steps.shape != self.values.shape:
            raise ValueError("steps and values must have the same length")
        if np.any(np.diff(self.steps) <= 0):
            raise ValueError("steps must be strictly increasing")


@dataclass
class LagCorrelation:
    lags: np.ndarray
    r_at_lag: np.ndarray        # NaN for omitted lags
    n_overlap: np.ndarray
    peak_lag: int
    peak_r: float               # signed correlation at the peak
    omitted: list[int] = field(default_factory=list)


@dataclass
class PhaseSegmentation:
    method: str
    boundaries: list[tuple[str, int, int]]  # (name, start, end) end-excl
    params: dict
    no_collapse: bool = False

    def covers(self, length: int) -> bool:
        pos = 0
        for _, a, b in self.boundaries:
            if a != pos or b <= a:
                return False
            pos = b
        return pos == length


@dataclass
class PhaseCorrelation:
    phases: list[tuple[str, float, int, bool]]  # (name, r, n, flagged)
    global_r: float


@dataclass
class GrangerResult:
    cause: str
    effect: str
    n_lags: int
    f_stat: float
    p_value: float
    delta_r2: float
    r2_explained: float | None = None
    flagged: bool = False
    note: str = ""


def read_metric_csv(path: str | Path, name: str = "") -> MetricSeries:
    """Two-column (step, value) CSV with a header row."""
    path = Path(path)
    steps, values = [], []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(
                f"{path}: expected a two-column CSV 'step,value' with a "
                f"header row")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise ValueError(
                    f"{path}:{line_no}: expected two columns 'step,value', "
                    f"got {row}")
            steps.append(int(float(row[0])))
            values.append(float(row[1]))
    if not steps:
        raise ValueError(f"{path}: no data rows")
    return MetricSeries(np.array(steps), np.array(values),
                        name or path.stem)


def align(a: MetricSeries, b: MetricSeries):
    """Inner-join two series on step values; no interpolation.

    Pairs where either value is non-finite are dropped. Returns
    ``(steps, values_a, values_b)``.
    """
    common, ia, ib = np.intersect1d(a.steps, b.steps, return_indices=True)
    va, vb = a.values[ia], b.values[ib]
    ok = np.isfinite(va) & np.isfinite(vb)
    common, va, vb = common[ok], va[ok], vb[ok]
    if common.size < 8:
        raise ValueError(
            f"only {common.size} common finite steps between "
            f"{a.name or 'a'} and {b.name or 'b'}; need at least 8")
    return common, va, vb


def detrend_cubic(values: np.ndarray) -> np.ndarray:
    """Least-squares cubic over the sample index, subtracted."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 5:
        raise ValueError("cubic detrend needs a 1-D series of length >= 5")
    if not np.all(np.isfinite(v)):
        raise ValueError("cubic detrend requires finite values")
    x = np.linspace(-1.0, 1.0, v.size)
    basis = np.column_stack([np.ones_like(x), x, x * x, x ** 3])
    coef, *_ = np.linalg.lstsq(basis, v, rcond=None)
    return v - basis @ coef


def zscore(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    sd = v.std()
    if sd == 0:
        raise ValueError("cannot z-score a constant series")
    return (v - v.mean()) / sd


def prepare(values: np.ndarray) -> np.ndarray:
    """Standard preprocessing for correlation work: detrend, then z-score."""
    return zscore(detrend_cubic(values))


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 2:
        return np.nan
    x, y = x[ok], y[ok]
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        return np.nan
    r = float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))
    return float(np.clip(r, -1.0, 1.0))  # rounding may spill past +-1


def default_max_lag(n: int) -> int:
    return max(1, min(10, n // 4))


def xcorr_lagscan(x: np.ndarray, y: np.ndarray,
                  max_lag: int | None = None) -> LagCorrelation:
    """Pearson correlation of ``x[t - lag]`` against ``y[t]`` per lag.

    Positive peak lag means x leads y. Lags whose finite overlap is
    shorter than 8 points are omitted and recorded. Ties in |r| break
    toward the smaller |lag|, then toward the negative lag.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise ValueError("lag scan needs equal-length series")
    n = x.size
    if max_lag is None:
        max_lag = default_max_lag(n)
    lags = np.arange(-max_lag, max_lag + 1)
    r = np.full(lags.size, np.nan)
    n_overlap = np.zeros(lags.size, dtype=int)
    omitted = []
    for i, lag in enumerate(lags):
        if lag >= 0:
            xs, ys = x[:n - lag] if lag else x, y[lag:]
        else:
            xs, ys = x[-lag:], y[:n + lag]
        ok = np.isfinite(xs) & np.isfinite(ys)
        n_overlap[i] = int(ok.sum())
        if n_overlap[i] < 8:
            omitted.append(int(lag))
            continue
        r[i] = _pearson(xs[ok], ys[ok])
    finite = np.isfinite(r)
    if not finite.any():
        raise ValueError("no lag had enough overlap for a correlation")
    order = sorted(np.flatnonzero(finite),
                   key=lambda i: (-abs(r[i]), abs(int(lags[i])),
                                  int(lags[i])))
    best = order[0]
    return LagCorrelation(lags, r, n_overlap, int(lags[best]),
                          float(r[best]), omitted)


def rank_tracks(tracks: dict[str, np.ndarray], loss: np.ndarray,
                max_lag: int | None = None) -> list[dict]:
    """Rank named observable tracks by |peak r| against a loss series.

    All inputs must already share one step axis. Each track and the loss
    are detrended and z-scored before the lag scan; tracks that cannot be
    processed (too many gaps, constant) are reported with a note.
    """
    rows = []
    for name, values in tracks.items():
        values = np.asarray(values, dtype=np.float64)
        ok = np.isfinite(values) & np.isfinite(loss)
        if ok.sum() < max(8, values.size // 2):
            rows.append({"track": name, "peak_abs_r": np.nan,
                         "peak_lag": 0, "peak_r": np.nan,
                         "note": "insufficient finite overlap"})
            continue
        try:
            xs = prepare(values[ok])
            ys = prepare(loss[ok])
            scan = xcorr_lagscan(xs, ys, max_lag)
        except ValueError as e:
            rows.append({"track": name, "peak_abs_r": np.nan,
                         "peak_lag": 0, "peak_r": np.nan, "note": str(e)})
            continue
        rows.append({"track": name, "peak_abs_r": abs(scan.peak_r),
                     "peak_lag": scan.peak_lag, "peak_r": scan.peak_r,
                     "note": ""})
    rows.sort(key=lambda d: (-(d["peak_abs_r"]
                               if np.isfinite(d["peak_abs_r"]) else -1.0),
                             d["track"]))
    return rows


def rank_ratios(series, loss: MetricSeries,
                max_lag: int | None = None) -> list[dict]:
    """Rank every consecutive-ratio track plus drift speed against a loss.

    ``series`` is an observable series (anything with ``steps``,
    ``width``, ``drift_speed``, and a ``track`` accessor); the tracks
    are aligned to the loss on common steps and ranked by |peak r|.
    """
    common, ia, ib = np.intersect1d(series.steps, loss.steps,
                                    return_indices=True)
    if common.size < 8:
        raise ValueError(
            f"only {common.size} common steps between the series and "
            f"{loss.name or 'loss'}; need at least 8")
    tracks = {f"r_{k}": series.track(f"r_{k}")[ia]
              for k in range(1, series.width)}
    tracks["drift_speed"] = series.drift_speed[ia]
    return rank_tracks(tracks, loss.values[ib], max_lag)


def sliding_corr(x: np.ndarray, y: np.ndarray,
                 window: int = DEFAULT_SLIDING_WINDOW) -> np.ndarray:
    """Pearson r over a centered window at every position.

    Edge positions where the window does not fit, and windows where
    either side is constant, hold NaN.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise ValueError("sliding correlation needs equal-length series")
    if x.size < window:
        raise ValueError(f"series shorter than the window ({window})")
    half = window // 2
    out = np.full(x.size, np.nan)
    for c in range(half, x.size - (window - half) + 1):
        xa = x[c - half:c - half + window]
        ya = y[c - half:c - half + window]
        out[c] = _pearson(xa, ya)
    return out


def _smooth3(v: np.ndarray) -> np.ndarray:
    """3-point moving average; edges average what is available."""
    out = np.empty_like(v, dtype=np.float64)
    n = v.size
    for i in range(n):
        lo, hi = max(0, i - 1), min(n, i + 2)
        out[i] = v[lo:hi].mean()
    return out


def _dedupe_names(names: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for n in names:
        seen[n] = seen.get(n, 0) + 1
        out.append(n if seen[n] == 1 else f"{n}_{seen[n]}")
    return out


def segment_phases(values: np.ndarray, method: str = "derivative",
                   params: dict | None = None) -> PhaseSegmentation:
    """Split a ratio series into contiguous named phases.

    ``peak``: rise up to the (smoothed) maximum, plateau while the value
    stays above ``alpha`` times the peak, collapse after.

    ``derivative``: classify the smoothed first difference as rising,
    flat or falling (a dead band of ``deadband_frac`` times the largest
    |difference| counts as flat); boundaries must persist for at least
    ``min_persist`` windows or their run merges into the neighbor.

    ``threshold``: the collapse starts at the first value below ``low``
    after the series has exceeded ``high``; no crossing is a no-collapse
    result, not an error.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size < 10:
        raise ValueError("segmentation needs a series of length >= 10")
    params = dict(params or {})
    if method == "peak":
        return _segment_peak(v, params)
    if method == "derivative":
        return _segment_derivative(v, params)
    if method == "threshold":
        return _segment_threshold(v, params)
    raise ValueError(f"unknown segmentation method {method!r}")


def _segment_peak(v: np.ndarray, params: dict) -> PhaseSegmentation:
    alpha = params.setdefault("alpha", 0.9)
    s = _smooth3(v)
    peak = int(np.argmax(s))
    thresh = alpha * s[peak]
    lo = peak
    while lo > 0 and s[lo - 1] >= thresh:
        lo -= 1
    hi = peak
    while hi < v.size - 1 and s[hi + 1] >= thresh:
        hi += 1
    bounds = []
    if lo > 0:
        bounds.append(("rise", 0, lo))
    bounds.append(("plateau", lo, hi + 1))
    if hi + 1 < v.size:
        bounds.append(("collapse", hi + 1, v.size))
    return PhaseSegmentation("peak", bounds, params,
                             no_collapse=hi + 1 >= v.size)


def _segment_derivative(v: np.ndarray, params: dict) -> PhaseSegmentation:
    deadband_k = params.setdefault("deadband_k", 2.0)
    min_persist = params.setdefault("min_persist", 2)
    s = _smooth3(v)
    d = np.diff(s)
    peak = np.max(np.abs(d))
    if peak == 0:
        return PhaseSegmentation("derivative",
                                 [("plateau", 0, v.size)], params,
                                 no_collapse=True)
    # noise scale of d from second differences: piecewise-linear trends
    # cancel there, so the estimate tracks noise, not slopes. For the
    # 3-point smoother, std(diff(d)) = (sqrt(6)/3) sigma vs
    # std(d) = (2/3) sigma, hence the 2/sqrt(6) conversion.
    mad = float(np.median(np.abs(np.diff(d) - np.median(np.diff(d)))))
    sigma_d = 1.4826 * mad * (2.0 / np.sqrt(6.0))
    band = max(deadband_k * sigma_d, 1e-9 * peak)
    signs = np.zeros(d.size, dtype=int)
    signs[d > band] = 1
    signs[d < -band] = -1
    runs: list[list[int]] = []  # [sign, start, end) over d indices
    for i, sg in enumerate(signs):
        if runs and runs[-1][0] == sg:
            runs[-1][2] = i + 1
        else:
            runs.append([sg, i, i + 1])
    # a sign change only opens a boundary if the new sign persists
    # min_persist windows; shorter runs are absorbed by their predecessor
    merged: list[list[int]] = []
    for run in runs:
        short = (run[2] - run[1]) < min_persist
        if merged and (short or merged[-1][0] == run[0]):
            merged[-1][2] = run[2]
        else:
            merged.append(list(run))
    if len(merged) > 1 and merged[0][2] - merged[0][1] < min_persist:
        # a leading stub has no predecessor; it joins the run after it
        merged[1][1] = merged[0][1]
        merged.pop(0)
    name_of = {1: "rise", 0: "plateau", -1: "collapse"}
    names = _dedupe_names([name_of[m[0]] for m in merged])
    bounds = []
    for i, (run, name) in enumerate(zip(merged, names)):
        start = run[1] if i > 0 else 0
        end = run[2] + 1 if i == len(merged) - 1 else merged[i + 1][1]
        bounds.append((name, start, end))
    no_collapse = not any(n.startswith("collapse") for n, _, _ in bounds)
    return PhaseSegmentation("derivative", bounds, params, no_collapse)


def _segment_threshold(v: np.ndarray, params: dict) -> PhaseSegmentation:
    low = params.setdefault("low", 1.20)
    high = params.setdefault("high", 1.4)
    above = np.flatnonzero(v >= high)
    if above.size == 0:
        return PhaseSegmentation("threshold", [("rise", 0, v.size)],
                                 params, no_collapse=True)
    t_hi = int(above[0])
    below = np.flatnonzero(v[t_hi:] < low)
    if below.size == 0:
        bounds = []
        if t_hi > 0:
            bounds.append(("rise", 0, t_hi))
        bounds.append(("plateau", t_hi, v.size))
        return PhaseSegmentation("threshold", bounds, params,
                                 no_collapse=True)
    t_col = t_hi + int(below[0])
    bounds = []
    if t_hi > 0:
        bounds.append(("rise", 0, t_hi))
    if t_col > t_hi:
        bounds.append(("plateau", t_hi, t_col))
    bounds.append(("collapse", t_col, v.size))
    return PhaseSegmentation("threshold", bounds, params, no_collapse=False)


def collapse_onset(seg: PhaseSegmentation,
                   values: np.ndarray) -> int | None:
    """Window index where the collapse begins, or None.

    For a rise-plateau-collapse series this is the start of the first
    collapse-named phase at or after the smoothed maximum; spurious early
    dips and trailing fragmentation do not move it.
    """
    v = np.asarray(values, dtype=np.float64)
    peak = int(np.argmax(_smooth3(v)))
    starts = [a for name, a, b in seg.boundaries
              if name.startswith("collapse")]
    after = [a for a in starts if a >= peak]
    if after:
        return min(after)
    return max(starts) if starts else None


def phase_corr(x: np.ndarray, y: np.ndarray,
               seg: PhaseSegmentation) -> PhaseCorrelation:
    """Pearson r inside each phase, plus the global r for contrast."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise ValueError("phase correlation needs equal-length series")
    if not seg.covers(x.size):
        raise ValueError("segmentation does not cover the series")
    phases = []
    for name, a, b in seg.boundaries:
        r = _pearson(x[a:b], y[a:b])
        n = b - a
        phases.append((name, r, n, n < 5 or not np.isfinite(r)))
    return PhaseCorrelation(phases, _pearson(x, y))


# --- F statistics ---------------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    # Lentz continued fraction for the incomplete beta (NR style)
    max_iter, eps, fpmin = 300, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), accurate to ~1e-12."""
    if not (a > 0 and b > 0):
        raise ValueError("betainc needs positive shape parameters")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_tail_prob(f_stat: float, df_num: float, df_den: float) -> float:
    """P(F > f) for the F distribution."""
    if not np.isfinite(f_stat):
        return 0.0 if f_stat > 0 else 1.0
    if f_stat <= 0.0:
        return 1.0
    x = df_den / (df_den + df_num * f_stat)
    return betainc_reg(df_den / 2.0, df_num / 2.0, x)


# --- Granger causality ----------------------------------------------------

def _lagged_design(effect: np.ndarray, causes: list[np.ndarray],
                   lags: int):
    t = effect.size
    rows = t - lags
    y = effect[lags:]
    cols = [np.ones(rows)]
    for i in range(1, lags + 1):
        cols.append(effect[lags - i:t - i])
    for c in causes:
        for i in range(1, lags + 1):
            cols.append(c[lags - i:t - i])
    return y, np.column_stack(cols)


def _ols_rss(y: np.ndarray, x: np.ndarray) -> float:
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    return float(resid @ resid)


def granger(cause: np.ndarray, effect: np.ndarray, lags: int = 1,
            cause_name: str = "cause",
            effect_name: str = "effect") -> GrangerResult:
    """F test: do ``lags`` past values of cause improve predicting effect?

    Inputs should already be aligned, detrended, and z-scored. The
    restricted model regresses the effect on its own lags; the
    unrestricted model adds the cause's lags.
    """
    cause = np.asarray(cause, dtype=np.float64)
    effect = np.asarray(effect, dtype=np.float64)
    if cause.size != effect.size:
        raise ValueError("Granger test needs equal-length series")
    if lags < 1:
        raise ValueError("lags must be >= 1")
    rows = effect.size - lags
    df_den = rows - 2 * lags - 1
    if df_den < 8:
        raise ValueError(
            f"series too short: {rows} usable rows leave {df_den} "
            f"denominator degrees of freedom (need >= 8)")
    y, x_r = _lagged_design(effect, [], lags)
    _, x_u = _lagged_design(effect, [cause], lags)
    flagged = False
    note = ""
    cond = np.linalg.cond(x_u)
    if cond > 1e10:
        flagged = True
        note = f"collinear regressors (condition number {cond:.2e})"
    rss_r = _ols_rss(y, x_r)
    rss_u = _ols_rss(y, x_u)
    tss = float(((y - y.mean()) ** 2).sum())
    num = max(rss_r - rss_u, 0.0)
    tiny = 1e-14 * max(tss, 1.0)
    if rss_u <= tiny:
        f_stat = np.inf if num > tiny else 0.0
        flagged = True
        note = note or "unrestricted model fits exactly"
    else:
        f_stat = (num / lags) / (rss_u / df_den)
    p = f_tail_prob(f_stat, lags, df_den)
    delta_r2 = num / tss if tss > 0 else 0.0
    return GrangerResult(cause_name, effect_name, lags, float(f_stat),
                         float(p), float(delta_r2), flagged=flagged,
                         note=note)


def residualized_granger(edge: np.ndarray, loss: np.ndarray,
                         resid_lags: int = 1, granger_lags: int = 1,
                         edge_name: str = "edge",
                         loss_name: str = "loss") -> GrangerResult:
    """Regress the loss out of the edge, then test the residual as cause.

    The edge is regressed on the loss at lags 0..resid_lags; the fraction
    of edge variance that regression explains is reported as
    ``r2_explained`` and the residual is Granger-tested against the loss.
    """
    edge = np.asarray(edge, dtype=np.float64)
    loss = np.asarray(loss, dtype=np.float64)
    if edge.size != loss.size:
        raise ValueError("series must be aligned")
    if resid_lags < 0:
        raise ValueError("resid_lags must be >= 0")
    t = edge.size
    rows = t - resid_lags
    y = edge[resid_lags:]
    cols = [np.ones(rows)]
    for i in range(0, resid_lags + 1):
        cols.append(loss[resid_lags - i:t - i])
    x = np.column_stack(cols)
    if np.linalg.cond(x) > 1e10:
        return GrangerResult(f"resid({edge_name})", loss_name,
                             granger_lags, np.nan, np.nan, np.nan,
                             r2_explained=np.nan, flagged=True,
                             note="degenerate loss regression "
                                  "(constant or collinear)")
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    tss = float(((y - y.mean()) ** 2).sum())
    r2_explained = 1.0 - float(resid @ resid) / tss if tss > 0 else np.nan
    result = granger(resid, loss[resid_lags:], granger_lags,
                     cause_name=f"resid({edge_name})",
                     effect_name=loss_name)
    result.r2_explained = r2_explained
    return result


def granger_multivariate(observables: dict[str, np.ndarray],
                         effect: np.ndarray, lags: int = 1,
                         effect_name: str = "effect") -> GrangerResult:
    """Joint F test over the lags of several observables at once."""
    effect = np.asarray(effect, dtype=np.float64)
    names = list(observables)
    causes = [np.asarray(observables[k], dtype=np.float64) for k in names]
    if not causes:
        raise ValueError("need at least one observable")
    for c in causes:
        if c.size != effect.size:
            raise ValueError("all series must be aligned")
    m = len(causes)
    rows = effect.size - lags
    n_regressors = 1 + lags + lags * m
    if n_regressors > rows / 3:
        raise ValueError(
            f"{n_regressors} regressors exceed a third of the {rows} "
            f"usable rows; joint test would overfit")
    k_added = lags * m
    df_den = rows - n_regressors
    if df_den < 8:
        raise ValueError("too few degrees of freedom for the joint test")
    y, x_r = _lagged_design(effect, [], lags)
    _, x_u = _lagged_design(effect, causes, lags)
    flagged = False
    note = ""
    cond = np.linalg.cond(x_u)
    if cond > 1e10:
        flagged = True
        note = f"collinear regressors (condition number {cond:.2e})"
    rss_r = _ols_rss(y, x_r)
    rss_u = _ols_rss(y, x_u)
    tss = float(((y - y.mean()) ** 2).sum())
    num = max(rss_r - rss_u, 0.0)
    tiny = 1e-14 * max(tss, 1.0)
    if rss_u <= tiny:
        f_stat = np.inf if num > tiny else 0.0
        flagged = True
        note = note or "unrestricted model fits exactly"
    else:
        f_stat = (num / k_added) / (rss_u / df_den)
    p = f_tail_prob(f_stat, k_added, df_den)
    delta_r2 = num / tss if tss > 0 else 0.0
    return GrangerResult("+".join(names), effect_name, lags, float(f_stat),
                         float(p), float(delta_r2), flagged=flagged,
                         note=note)
