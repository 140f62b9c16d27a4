"""Window spectra to trajectory observables.

For each rolling window this module reduces the Gram spectrum to the
quantities the rest of the pipeline consumes: consecutive singular value
ratios, the signal rank (argmax ratio), gap ratio and edge strength, the
95%-variance rank, total variance, drift speed, and the coefficient of
variation of the noise eigenvalues. A Monte Carlo isotropic-noise null
calibrates which ranks stick out and how spread the noise bulk should be.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gram import DotMatrix, GramMatrix, Spectrum, eig_sym, eigvals_psd, \
    window_gram

# singular values below RANK_EPS * sigma_1 count as numerically zero
RANK_EPS = 1e-10


@dataclass
class SpectralSummary:
    window_start: int
    width: int
    eigenvalues: np.ndarray      # descending, length W
    ratios: np.ndarray           # length W-1, NaN where undefined
    k_star: int                  # signal rank, 1-based
    gap_ratio: float             # ratio at the edge (NaN if undefined)
    edge_strength: float         # gap_ratio - 1
    k95: int                     # smallest rank capturing 95% of variance
    total_variance: float
    drift_speed: float           # norm of the window's mean delta
    noise_cv: float              # std/mean of eigenvalues past the edge
    numeric_rank: int
    degenerate: bool             # zero window or numeric rank < 3


@dataclass
class MpNull:
    p_eff: int
    width: int
    trials: int
    seed: int
    max_ratio_q50: float
    max_ratio_q95: float
    max_ratio_q99: float
    cv_null: float               # mean eigenvalue CV under isotropic noise
    rank_null_q95: np.ndarray    # per-rank 95th pct of lambda_k / trace


@dataclass
class BbpExcess:
    window_start: int
    flags: np.ndarray            # bool per rank: above the 95% noise null
    cv_ratio: float              # observed noise CV / (extrapolated) null CV
    ambient_p: int | None


@dataclass
class SplitHalf:
    window_start: int
    width: int
    k_star_even: int
    k_star_odd: int
    edge_match: bool
    profile_corr: float          # NaN when degenerate
    degenerate: bool


@dataclass
class ObservableSeries:
    width: int
    window_starts: np.ndarray
    steps: np.ndarray            # training step of each window's last delta
    gap_ratio: np.ndarray
    edge_strength: np.ndarray
    k_star: np.ndarray
    k95: np.ndarray
    drift_speed: np.ndarray
    total_variance: np.ndarray
    noise_cv: np.ndarray
    degenerate: np.ndarray       # bool
    ratio_tracks: np.ndarray     # (n_windows, W-1), NaN where undefined

    def track(self, name: str) -> np.ndarray:
        """Named observable track; ``r_<k>`` selects a ratio track."""
        if name.startswith("r_"):
            k = int(name[2:])
            if not (1 <= k <= self.width - 1):
                raise KeyError(f"no ratio track {name} at W={self.width}")
            return self.ratio_tracks[:, k - 1]
        try:
            return getattr(self, name)
        except AttributeError:
            raise KeyError(f"unknown observable {name!r}") from None


def summarize(spec: Spectrum, g: GramMatrix) -> SpectralSummary:
    """Reduce one window's spectrum to the standard observables.

    Ratios are formed only where the smaller singular value is above the
    numerical-rank floor. When the tail of the spectrum is numerically
    zero the edge is pinned at the numeric rank and the gap reported as
    the last finite ratio. Argmax ties break toward the smallest rank.
    """
    w = spec.eigenvalues.shape[0]
    if w < 3:
        raise ValueError("summaries need windows of width >= 3")
    lam = spec.eigenvalues
    sigma = spec.singular_values
    total = float(lam.sum())

    gram_sum = float(g.values.sum())
    drift = float(np.sqrt(max(gram_sum, 0.0)) / w)

    ratios = np.full(w - 1, np.nan)
    if sigma[0] <= 0.0:
        return SpectralSummary(
            spec.window_start, w, lam, ratios, k_star=0, gap_ratio=np.nan,
            edge_strength=np.nan, k95=w, total_variance=total,
            drift_speed=drift, noise_cv=np.nan, numeric_rank=0,
            degenerate=True)

    floor = RANK_EPS * sigma[0]
    rank = int(np.sum(sigma > floor))
    for k in range(1, rank):  # ratio r_k needs sigma_{k+1} above the floor
        ratios[k - 1] = sigma[k - 1] / sigma[k]

    if rank < w:
        k_star = rank
        gap = float(ratios[rank - 2]) if rank >= 2 else np.nan
    else:
        k_star = int(np.nanargmax(ratios)) + 1  # ties resolve to smallest k
        gap = float(ratios[k_star - 1])

    share = np.cumsum(lam) / total if total > 0 else np.ones(w)
    k95 = int(np.searchsorted(share, 0.95 - 1e-15) + 1)
    k95 = min(k95, w)

    noise = lam[k_star:]
    if noise.size and noise.mean() > 0:
        noise_cv = float(noise.std() / noise.mean())
    else:
        noise_cv = np.nan

    return SpectralSummary(
        spec.window_start, w, lam, ratios, k_star=k_star, gap_ratio=gap,
        edge_strength=gap - 1.0 if np.isfinite(gap) else np.nan, k95=k95,
        total_variance=total, drift_speed=drift, noise_cv=noise_cv,
        numeric_rank=rank, degenerate=rank < 3)


def _max_valid_ratio(sigma: np.ndarray) -> float:
    floor = RANK_EPS * sigma[0]
    rank = int(np.sum(sigma > floor))
    if rank < 2:
        return np.nan
    r = sigma[:rank - 1] / sigma[1:rank]
    return float(r.max())


def mp_null(p_eff: int, width: int, trials: int = 500,
            seed: int = 0) -> MpNull:
    """Monte Carlo null for isotropic Gaussian noise windows.

    Draws ``trials`` matrices of shape (W, p_eff) with iid N(0,1) entries,
    eigendecomposes their Gram matrices, and records the null distribution
    of the maximum consecutive ratio, the mean eigenvalue coefficient of
    variation, and per-rank 95th-percentile eigenvalue shares.

    The run at a reduced ``p_eff`` extrapolates to larger ambient
    dimension through the sqrt(W/p) scaling of the eigenvalue CV (see
    :func:`bbp_excess`).
    """
    if trials < 100:
        raise ValueError("null calibration needs at least 100 trials")
    if p_eff < width:
        raise ValueError("p_eff must be at least the window width")
    max_ratios = np.empty(trials)
    cvs = np.empty(trials)
    shares = np.empty((trials, width))
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        x = rng.standard_normal((width, p_eff))
        lam = eigvals_psd(x @ x.T)
        sigma = np.sqrt(lam)
        max_ratios[t] = _max_valid_ratio(sigma)
        cvs[t] = lam.std() / lam.mean()
        shares[t] = lam / lam.sum()
    q50, q95, q99 = np.quantile(max_ratios, [0.50, 0.95, 0.99])
    return MpNull(
        p_eff=p_eff, width=width, trials=trials, seed=seed,
        max_ratio_q50=float(q50), max_ratio_q95=float(q95),
        max_ratio_q99=float(q99), cv_null=float(cvs.mean()),
        rank_null_q95=np.quantile(shares, 0.95, axis=0))


def bbp_excess(summary: SpectralSummary, null: MpNull,
               ambient_p: int | None = None) -> BbpExcess:
    """Flag ranks whose eigenvalue share exceeds the 95% noise null.

    ``cv_ratio`` compares the window's noise-eigenvalue CV to the null CV;
    when ``ambient_p`` differs from the null's ``p_eff`` the null CV is
    extrapolated by the sqrt(W/p) law.
    """
    if summary.width != null.width:
        raise ValueError(
            f"summary window {summary.width} does not match null window "
            f"{null.width}")
    total = summary.total_variance
    if total > 0:
        share = summary.eigenvalues / total
        flags = share > null.rank_null_q95
    else:
        flags = np.zeros(summary.width, dtype=bool)
    cv_eff = null.cv_null
    if ambient_p is not None:
        cv_eff = null.cv_null * np.sqrt(null.p_eff / ambient_p)
    cv_ratio = summary.noise_cv / cv_eff if cv_eff > 0 else np.nan
    return BbpExcess(summary.window_start, flags, float(cv_ratio), ambient_p)


def rolling_series(d: DotMatrix, width: int,
                   step_stride: int | None = None) -> ObservableSeries:
    """One spectral summary per window start, assembled into time series.

    Degenerate windows are flagged, never dropped, so every array keeps
    one entry per window and the step axis stays aligned.
    """
    n = d.n
    if n < width + 2:
        raise ValueError(
            f"need at least W+2={width + 2} deltas for a rolling series, "
            f"have {n}")
    n_windows = n - width + 1
    summaries = []
    for t0 in range(n_windows):
        g = window_gram(d, t0, width)
        summaries.append(summarize(eig_sym(g), g))
    if step_stride is not None:
        steps = np.array([(t0 + width) * step_stride
                          for t0 in range(n_windows)])
    else:
        steps = np.array([d.step_map[t0 + width - 1][1]
                          for t0 in range(n_windows)])
    if np.any(np.diff(steps) <= 0):
        raise ValueError("step axis is not strictly increasing")
    return ObservableSeries(
        width=width,
        window_starts=np.arange(n_windows),
        steps=steps,
        gap_ratio=np.array([s.gap_ratio for s in summaries]),
        edge_strength=np.array([s.edge_strength for s in summaries]),
        k_star=np.array([s.k_star for s in summaries]),
        k95=np.array([s.k95 for s in summaries]),
        drift_speed=np.array([s.drift_speed for s in summaries]),
        total_variance=np.array([s.total_variance for s in summaries]),
        noise_cv=np.array([s.noise_cv for s in summaries]),
        degenerate=np.array([s.degenerate for s in summaries]),
        ratio_tracks=np.stack([s.ratios for s in summaries]))


def split_half(d: DotMatrix, t0: int, width: int) -> SplitHalf:
    """Edge agreement between even- and odd-indexed half-windows."""
    if width % 2 != 0:
        raise ValueError("split-half needs an even window width")
    if width < 6:
        raise ValueError("split-half needs W >= 6")
    if t0 < 0 or t0 + width > d.n:
        raise ValueError("window out of range")
    even = np.arange(t0, t0 + width, 2)
    odd = even + 1
    halves = []
    for idx in (even, odd):
        sub = d.values[np.ix_(idx, idx)]
        lam = eigvals_psd(sub)
        sigma = np.sqrt(lam)
        w2 = width // 2
        ratios = np.full(w2 - 1, np.nan)
        if sigma[0] > 0:
            floor = RANK_EPS * sigma[0]
            rank = int(np.sum(sigma > floor))
            for k in range(1, rank):
                ratios[k - 1] = sigma[k - 1] / sigma[k]
            k_star = rank if rank < w2 else int(np.nanargmax(ratios)) + 1
        else:
            k_star = 0
        halves.append((k_star, ratios))
    (k_even, r_even), (k_odd, r_odd) = halves
    both = np.isfinite(r_even) & np.isfinite(r_odd)
    degenerate = both.sum() < 2
    if not degenerate:
        a, b = r_even[both], r_odd[both]
        if a.std() == 0 or b.std() == 0:
            degenerate = True
    corr = np.nan
    if not degenerate:
        corr = float(np.corrcoef(r_even[both], r_odd[both])[0, 1])
    return SplitHalf(t0, width, k_even, k_odd,
                     edge_match=(k_even == k_odd and k_even > 0),
                     profile_corr=corr, degenerate=degenerate)


def series_to_csv(series: ObservableSeries, path: str | Path) -> None:
    """Plot-ready table: one row per window, ratio tracks last."""
    path = Path(path)
    w = series.width
    header = ["t0", "step", "gap_ratio", "k_star", "edge_strength", "k95",
              "drift_speed", "total_variance"]
    header += [f"r_{k}" for k in range(1, w)]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i in range(len(series.window_starts)):
            row = [int(series.window_starts[i]), int(series.steps[i]),
                   _fmt(series.gap_ratio[i]), int(series.k_star[i]),
                   _fmt(series.edge_strength[i]), int(series.k95[i]),
                   _fmt(series.drift_speed[i]),
                   _fmt(series.total_variance[i])]
            row += [_fmt(v) for v in series.ratio_tracks[i]]
            writer.writerow(row)


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else repr(float(v))


def series_to_dict(series: ObservableSeries) -> dict:
    def arr(a):
        return [None if isinstance(v, float) and not np.isfinite(v)
                else (v if not isinstance(v, float) else float(v))
                for v in a.tolist()]
    return {
        "window": series.width,
        "t0": series.window_starts.tolist(),
        "step": series.steps.tolist(),
        "gap_ratio": arr(series.gap_ratio),
        "edge_strength": arr(series.edge_strength),
        "k_star": series.k_star.tolist(),
        "k95": series.k95.tolist(),
        "drift_speed": arr(series.drift_speed),
        "total_variance": arr(series.total_variance),
        "noise_cv": arr(series.noise_cv),
        "degenerate": [bool(x) for x in series.degenerate],
        "ratio_tracks": [[None if not np.isfinite(v) else float(v)
                          for v in row] for row in series.ratio_tracks],
    }


def series_to_json(series: ObservableSeries, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(series_to_dict(series), indent=1, sort_keys=True) + "\n")
