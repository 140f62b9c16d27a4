"""Synthetic spiked trajectories with planted ground truth.

A trajectory is a sequence of parameter deltas

    delta_t = tau * sqrt(p) * sum_i a_i(t) z_{i,t} u_i  +  xi_t,

with exactly orthonormal planted directions u_i, per-spike amplitude
schedules a_i(t) expressed in units of tau*sqrt(p) (so detectability is
scale-free in p), iid standard normal coefficients z_{i,t}, and noise
xi_t that is either isotropic with std tau or anisotropic with a
power-law covariance spectrum in a random rotated basis.

The random coefficients matter: with k > 1 spikes, deterministic
amplitudes alone would make every delta's signal component collinear and
the planted signal would collapse to rank one. Independent per-step
coefficients give the signal block a genuine rank k, with window singular
values concentrating near a_i * sqrt(W) * tau * sqrt(p).

Everything derives from the same counter-based generator used for
sketching, so a (plan, seed) pair yields byte-identical data no matter
how generation is chunked, in memory or streamed to a checkpoint store.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .store import (STORE_VERSION, FilterRecord, KeyEntry, Manifest,
                    StepEntry, validate_manifest, write_manifest)
from .timeseries import MetricSeries

# counter-stream row layout (per seed)
_DIR_ROW = 0          # raw direction streams, one row per spike
_COEF_ROW = 512       # per-spike coefficient streams, indexed by delta
_NOISE_ROW = 1024     # one row per delta index
_ROT_ROW = 1 << 20    # rotation matrix rows for anisotropic noise
_LOSS_ROW = 1 << 21   # coupled-loss noise

_MAX_ANISO_P = 4096


@dataclass
class Schedule:
    """Per-spike amplitude over delta index, in units of tau*sqrt(p).

    ``coefficients`` selects the per-step coefficient stream: "iid"
    draws standard normals (a generic stochastic direction), "drift"
    pins them at one (a persistent movement direction), "alternating"
    flips sign every step (an oscillation direction). Two drift spikes
    are collinear in time and collapse to joint rank one; mixing modes
    keeps each planted direction its own singular value.
    """
    kind: str                     # constant | ramp | trapezoid | step
    params: tuple
    coefficients: str = "iid"     # iid | drift | alternating

    def values(self, n: int) -> np.ndarray:
        t = np.arange(n, dtype=np.float64)
        if self.kind == "constant":
            (a,) = self.params
            return np.full(n, float(a))
        if self.kind == "ramp":
            a0, a1 = self.params
            return a0 + (a1 - a0) * t / max(n - 1, 1)
        if self.kind == "trapezoid":
            lo, hi, rise_end, fall_start = self.params
            out = np.full(n, float(hi))
            ramp = np.arange(rise_end) / max(rise_end, 1)
            out[:rise_end] = lo + (hi - lo) * ramp
            m = n - fall_start
            if m > 0:
                ramp = np.arange(m) / max(m, 1)
                out[fall_start:] = hi - (hi - lo) * ramp
            return out
        if self.kind == "step":
            before, after, at = self.params
            return np.where(t < at, float(before), float(after))
        raise ValueError(f"unknown schedule kind {self.kind!r}")

    def shift_index(self) -> int | None:
        return int(self.params[2]) if self.kind == "step" else None


def constant(a: float) -> Schedule:
    return Schedule("constant", (a,))


def ramp(a0: float, a1: float) -> Schedule:
    return Schedule("ramp", (a0, a1))


def trapezoid(lo: float, hi: float, rise_end: int,
              fall_start: int) -> Schedule:
    return Schedule("trapezoid", (lo, hi, rise_end, fall_start))


def step(before: float, after: float, at: int) -> Schedule:
    return Schedule("step", (before, after, at))


@dataclass
class NoiseSpec:
    kind: str = "isotropic"       # isotropic | powerlaw
    tau: float = 1.0
    exponent: float = 1.0         # powerlaw: variance_i ~ i^-exponent
    cutoff: int = 64              # powerlaw: flat floor past this rank


@dataclass
class SpikePlan:
    schedules: list[Schedule] = field(default_factory=list)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    @property
    def n_spikes(self) -> int:
        return len(self.schedules)

    def to_dict(self) -> dict:
        return {
            "schedules": [{"kind": s.kind, "params": list(s.params)}
                          for s in self.schedules],
            "noise": {"kind": self.noise.kind, "tau": self.noise.tau,
                      "exponent": self.noise.exponent,
                      "cutoff": self.noise.cutoff},
        }


@dataclass
class GroundTruth:
    n_spikes: int
    p: int
    n_deltas: int
    tau: float
    seed: int
    amplitudes: np.ndarray        # (k, n) schedule values, tau*sqrt(p) units
    coefficients: np.ndarray      # (k, n) realized a_i(t) * z_{i,t}
    noise_kind: str
    shift_index: int | None = None
    coupling: dict | None = None

    def to_dict(self) -> dict:
        return {
            "n_spikes": self.n_spikes, "p": self.p,
            "n_deltas": self.n_deltas, "tau": self.tau, "seed": self.seed,
            "amplitudes": self.amplitudes.tolist(),
            "coefficients": self.coefficients.tolist(),
            "noise_kind": self.noise_kind, "shift_index": self.shift_index,
            "coupling": self.coupling,
        }


def _coef_stream(schedule: Schedule, seed: int, spike: int,
                 n: int) -> np.ndarray:
    if schedule.coefficients == "iid":
        return rng.gauss_block(seed, _COEF_ROW + spike, 0, n)
    if schedule.coefficients == "drift":
        return np.ones(n)
    if schedule.coefficients == "alternating":
        return np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    raise ValueError(
        f"unknown coefficient mode {schedule.coefficients!r}")


def _truth(plan: SpikePlan, n: int, p: int, seed: int) -> GroundTruth:
    k = plan.n_spikes
    amps = (np.stack([s.values(n) for s in plan.schedules])
            if k else np.zeros((0, n)))
    z = (np.stack([_coef_stream(s, seed, i, n)
                   for i, s in enumerate(plan.schedules)])
         if k else np.zeros((0, n)))
    shift = None
    for s in plan.schedules:
        if s.shift_index() is not None:
            shift = s.shift_index()
            break
    return GroundTruth(k, p, n, plan.noise.tau, seed, amps, amps * z,
                       plan.noise.kind, shift_index=shift)


def orthonormal_directions(seed: int, k: int, p: int) -> np.ndarray:
    """Exactly orthonormal planted directions from raw counter streams.

    Raw Gaussian rows are whitened through the Cholesky factor of their
    Gram matrix, which keeps the construction reproducible under chunked
    generation (the raw streams are pure counter functions and the k x k
    Gram is tiny). Orthonormality is verified to 1e-10 before use.
    """
    if k == 0:
        return np.zeros((0, p))
    if p < 8 * k:
        raise ValueError(f"p={p} too small for {k} spikes (need >= 8k)")
    g = np.stack([rng.gauss_block(seed, _DIR_ROW + i, 0, p)
                  for i in range(k)])
    gram = g @ g.T
    chol = np.linalg.cholesky(gram)
    u = np.linalg.solve(chol, g)
    err = np.max(np.abs(u @ u.T - np.eye(k)))
    if err > 1e-10:
        raise RuntimeError(
            f"direction orthonormalization failed (residual {err:.2e})")
    return u


def _direction_transform(seed: int, k: int, p: int,
                         chunk: int) -> np.ndarray:
    """Whitening coefficients for streamed direction generation."""
    gram = np.zeros((k, k))
    for lo in range(0, p, chunk):
        m = min(chunk, p - lo)
        g = np.stack([rng.gauss_block(seed, _DIR_ROW + i, lo, m)
                      for i in range(k)])
        gram += g @ g.T
    return np.linalg.inv(np.linalg.cholesky(gram))


def _powerlaw_noise(plan: SpikePlan, n: int, p: int,
                    seed: int) -> np.ndarray:
    spec = plan.noise
    if p > _MAX_ANISO_P:
        raise ValueError(
            f"anisotropic noise supports p <= {_MAX_ANISO_P}, got {p}")
    ranks = np.arange(1, p + 1, dtype=np.float64)
    var = ranks ** (-spec.exponent)
    var[spec.cutoff:] = var[min(spec.cutoff, p) - 1]
    var *= p / var.sum()  # mean variance tau^2, comparable to isotropic
    scale = spec.tau * np.sqrt(var)
    rot_raw = np.stack([rng.gauss_block(seed, _ROT_ROW + i, 0, p)
                        for i in range(p)])
    q, _ = np.linalg.qr(rot_raw)
    z = np.stack([rng.gauss_block(seed, _NOISE_ROW + t, 0, p)
                  for t in range(n)])
    return (z * scale) @ q.T


def gen_trajectory(plan: SpikePlan, n_deltas: int, p: int,
                   seed: int = 0) -> tuple[np.ndarray, GroundTruth]:
    """In-memory delta sequence for a plan; returns (deltas, truth)."""
    k = plan.n_spikes
    if n_deltas < 2:
        raise ValueError("need at least 2 deltas")
    truth = _truth(plan, n_deltas, p, seed)
    tau = plan.noise.tau
    if plan.noise.kind == "isotropic":
        noise = np.stack([rng.gauss_block(seed, _NOISE_ROW + t, 0, p)
                          for t in range(n_deltas)]) * tau
    elif plan.noise.kind == "powerlaw":
        noise = _powerlaw_noise(plan, n_deltas, p, seed)
    else:
        raise ValueError(f"unknown noise kind {plan.noise.kind!r}")
    deltas = noise
    if k:
        u = orthonormal_directions(seed, k, p)
        scale = tau * np.sqrt(p)
        deltas = deltas + (truth.coefficients.T * scale) @ u
    return deltas, truth


def gen_store(plan: SpikePlan, n_deltas: int, p: int, store_dir,
              seed: int = 0, step_stride: int = 200, start_step: int = 0,
              chunk: int = 1 << 22,
              key_name: str = "theta") -> tuple[Manifest, GroundTruth]:
    """Stream a plan to a canonical checkpoint store of any size.

    Checkpoints are the cumulative sums of the deltas from a zero vector,
    so the full pipeline (store, deltas, sketching, dots) can run end to
    end on synthetic data. Only isotropic noise is supported here; the
    anisotropic mode is a small-p test device. Writes ground_truth.json
    beside the manifest.
    """
    if plan.noise.kind != "isotropic":
        raise ValueError("streamed stores support isotropic noise only")
    k = plan.n_spikes
    truth = _truth(plan, n_deltas, p, seed)
    tau = plan.noise.tau
    transform = _direction_transform(seed, k, p, chunk) if k else None
    coef = truth.coefficients * (tau * np.sqrt(p))  # (k, n) absolute

    store_dir = Path(store_dir)
    store_dir.mkdir(parents=True, exist_ok=True)
    steps = [start_step + step_stride * t for t in range(n_deltas + 1)]

    # chunk-major streaming: every step blob is appended one coordinate
    # chunk at a time so memory stays O(chunk), not O(p)
    handles = [open(store_dir / f"step_{s}.bin", "wb") for s in steps]
    hashes = [hashlib.sha256() for _ in steps]
    try:
        for lo in range(0, p, chunk):
            m = min(chunk, p - lo)
            if k:
                g = np.stack([rng.gauss_block(seed, _DIR_ROW + i, lo, m)
                              for i in range(k)])
                u_chunk = transform @ g
            theta = np.zeros(m)
            buf = np.ascontiguousarray(theta, dtype="<f4").tobytes()
            handles[0].write(buf)
            hashes[0].update(buf)
            for t in range(n_deltas):
                delta = rng.gauss_block(seed, _NOISE_ROW + t, lo, m) * tau
                if k:
                    delta += coef[:, t] @ u_chunk
                theta += delta
                buf = np.ascontiguousarray(theta, dtype="<f4").tobytes()
                handles[t + 1].write(buf)
                hashes[t + 1].update(buf)
    finally:
        for h in handles:
            h.close()

    entries = [StepEntry(s, f"step_{s}.bin", p,
                         "sha256:" + hashes[i].hexdigest())
               for i, s in enumerate(steps)]
    manifest = Manifest(STORE_VERSION, entries, [KeyEntry(key_name, 0, p)],
                        FilterRecord([], []), root=store_dir)
    validate_manifest(manifest)
    write_manifest(manifest)
    (store_dir / "ground_truth.json").write_text(
        json.dumps({"plan": plan.to_dict(), **truth.to_dict()},
                   indent=1, sort_keys=True) + "\n")
    return manifest, truth


def gen_coupled_loss(gap_values: np.ndarray, steps: np.ndarray,
                     lag: int = 0, sign: int = 1, noise_std: float = 0.0,
                     seed: int = 0,
                     trend_scale: float = 1.0) -> tuple[MetricSeries, dict]:
    """Loss series driven by the gap series at a planted lag.

    loss[t] = sign * gap[t - lag] + cubic trend + noise, emitted on the
    steps where the lagged gap exists. A positive lag means the gap leads
    the loss. The trend is a fixed cubic so detrending is always
    exercised.
    """
    gap = np.asarray(gap_values, dtype=np.float64)
    steps = np.asarray(steps, dtype=np.int64)
    n = gap.size
    if steps.size != n:
        raise ValueError("gap values and steps must align")
    if abs(lag) > n // 4:
        raise ValueError(f"|lag| {abs(lag)} too large for {n} points")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    lo = max(0, lag)
    hi = n + min(0, lag)
    idx = np.arange(lo, hi)
    base = sign * gap[idx - lag]
    x = np.linspace(-1.0, 1.0, idx.size)
    scale = gap[np.isfinite(gap)].std() or 1.0
    trend = trend_scale * scale * (0.3 - 0.5 * x + 0.2 * x * x
                                   + 0.4 * x ** 3)
    noise = rng.gauss_block(seed, _LOSS_ROW, 0, idx.size) * noise_std
    series = MetricSeries(steps[idx], base + trend + noise, "val_loss")
    truth = {"lag": lag, "sign": sign, "noise_std": noise_std,
             "seed": seed}
    return series, truth


def oracle_spectrum(deltas: np.ndarray, t0: int, width: int) -> np.ndarray:
    """Window singular values by an independent dense route (small p).

    Eigendecomposes the p x p covariance of the window with LAPACK, a
    completely different code path from the Gram-side Jacobi engine.
    """
    x = np.asarray(deltas, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected (n_deltas, p) array")
    p = x.shape[1]
    if p > 2000:
        raise ValueError("oracle route is restricted to p <= 2000")
    if t0 < 0 or t0 + width > x.shape[0]:
        raise ValueError("window out of range")
    w = x[t0:t0 + width]
    lam = np.linalg.eigvalsh(w.T @ w)[::-1][:width]
    lam = np.where(lam < 0, 0.0, lam)
    return np.sqrt(lam)
