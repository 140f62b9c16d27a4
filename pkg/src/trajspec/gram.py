"""Pairwise dot-product matrix and rolling-window Gram spectra.

The N x N matrix of delta inner products is the one expensive artifact in
the pipeline: it is computed once (streamed from the store in coordinate
chunks, 64-bit accumulation, fixed-order pairwise combination of chunk
contributions) and every window size W afterwards only extracts W x W
principal submatrices from it.

Eigenvalues come from a cyclic Jacobi solver. Window sizes are small
(W <= 64 enforced), where Jacobi is accurate to machine precision and
needs no external solver.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .store import KeySpan, Manifest, StoreError, open_blob

logger = logging.getLogger(__name__)

MAX_WINDOW = 64

# eigenvalues in [-PSD_TOL * trace, 0) clamp to zero; below is corruption
PSD_TOL = 1e-9

# default coordinate chunk for streamed dot products (elements)
STREAM_CHUNK = 2 * 1024 * 1024


@dataclass
class DotMatrix:
    values: np.ndarray          # (N, N) float64, symmetric PSD
    source: str                 # "full" | "sketched:<fp>" | "group:<name>"
    step_map: list[tuple[int, int]]  # delta index -> (from_step, to_step)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class GramMatrix:
    values: np.ndarray  # (W, W) float64
    window_start: int
    width: int


@dataclass
class Spectrum:
    eigenvalues: np.ndarray      # descending, non-negative
    singular_values: np.ndarray  # sqrt of the above
    window_start: int


@njit(cache=True)
def _jacobi_eigvals(a, rel_tol):
    """Cyclic Jacobi on symmetric ``a`` (destroyed); returns the diagonal.

    Sweeps until the off-diagonal Frobenius norm drops below
    ``rel_tol * ||a||_F`` of the input matrix.
    """
    n = a.shape[0]
    norm2 = 0.0
    for i in range(n):
        for j in range(n):
            norm2 += a[i, j] * a[i, j]
    threshold2 = (rel_tol * rel_tol) * norm2
    for _sweep in range(100):
        off2 = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off2 += 2.0 * a[i, j] * a[i, j]
        if off2 <= threshold2:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                app = a[p, p]
                aqq = a[q, q]
                for i in range(n):
                    if i != p and i != q:
                        aip = a[i, p]
                        aiq = a[i, q]
                        a[i, p] = aip * c - aiq * s
                        a[p, i] = a[i, p]
                        a[i, q] = aiq * c + aip * s
                        a[q, i] = a[i, q]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
    out = np.empty(n)
    for i in range(n):
        out[i] = a[i, i]
    return out


def eigvals_psd(values: np.ndarray) -> np.ndarray:
    """Descending eigenvalues of a small symmetric PSD matrix via Jacobi.

    Small negative eigenvalues from accumulated rounding are clamped to
    zero; anything below ``-1e-9 * trace`` means the input is corrupted
    and raises.
    """
    a = np.array(values, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("Gram matrix must be square")
    if a.shape[0] > MAX_WINDOW:
        raise ValueError(f"window {a.shape[0]} exceeds max {MAX_WINDOW}")
    scale = np.linalg.norm(a)
    asym = np.max(np.abs(a - a.T))
    if scale > 0 and asym > 1e-8 * scale:
        raise ValueError(
            f"matrix is not symmetric: max asymmetry {asym:.3e} vs scale "
            f"{scale:.3e}")
    a = (a + a.T) / 2.0
    trace = float(np.trace(a))
    lam = _jacobi_eigvals(a, 1e-12)
    floor = -PSD_TOL * max(trace, 0.0)
    if np.any(lam < floor):
        worst = float(lam.min())
        raise ValueError(
            f"eigenvalue {worst:.6e} below PSD tolerance {floor:.6e}; "
            f"input Gram matrix is not positive semidefinite")
    lam = np.where(lam < 0.0, 0.0, lam)
    # exact zeros surface as solver dust around 1e-16 * lambda_max, which
    # would otherwise leak past downstream rank floors; anything beneath
    # the resolution of 64-bit Gram assembly is zero
    lam = np.where(lam < 1e-13 * lam.max(initial=0.0), 0.0, lam)
    return np.sort(lam)[::-1].copy()


def eig_sym(g: GramMatrix) -> Spectrum:
    """Eigendecompose a window Gram matrix (values only, no vectors)."""
    lam = eigvals_psd(g.values)
    return Spectrum(lam, np.sqrt(lam), g.window_start)


def _tree_combine(parts: list[np.ndarray]) -> np.ndarray:
    """Fixed-order pairwise combination of chunk contributions."""
    if not parts:
        raise ValueError("nothing to combine")
    work = list(parts)
    while len(work) > 1:
        nxt = []
        for i in range(0, len(work) - 1, 2):
            nxt.append(work[i] + work[i + 1])
        if len(work) % 2 == 1:
            nxt.append(work[-1])
        work = nxt
    return work[0]


def dot_matrix(vectors, source: str = "full",
               step_map: list[tuple[int, int]] | None = None,
               chunk: int = STREAM_CHUNK) -> DotMatrix:
    """All pairwise inner products of equal-length vectors (in memory).

    64-bit accumulation; the coordinate axis is processed in fixed chunks
    whose contributions combine by a pairwise tree, so results do not
    depend on parallel scheduling.
    """
    x = np.ascontiguousarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array of stacked vectors")
    n, p = x.shape
    if n < 2:
        raise ValueError("need at least 2 vectors")
    parts = [x[:, lo:lo + chunk] @ x[:, lo:lo + chunk].T
             for lo in range(0, p, chunk)]
    d = _tree_combine(parts)
    d = (d + d.T) / 2.0
    if step_map is None:
        step_map = [(i, i + 1) for i in range(n)]
    if len(step_map) != n:
        raise ValueError("step_map length must match the number of vectors")
    return DotMatrix(d, source, list(step_map))


def _span_chunks(span_ranges, chunk):
    for off, length in span_ranges:
        lo = off
        end = off + length
        while lo < end:
            hi = min(lo + chunk, end)
            yield lo, hi
            lo = hi


def dot_matrix_from_store(manifest: Manifest,
                          span: KeySpan | None = None,
                          chunk: int = STREAM_CHUNK,
                          verify: bool = True) -> DotMatrix:
    """Stream the store once and build the delta dot-product matrix.

    Blobs are memory-mapped and read one coordinate chunk at a time, so
    resident memory stays at ``O(n_steps * chunk)`` regardless of p.
    With a ``span``, only that group's coordinates contribute and the
    result is tagged ``group:<name>``.
    """
    steps = manifest.step_indices
    if len(steps) < 2:
        raise StoreError("store has fewer than 2 checkpoints")
    if span is not None and span.size == 0:
        raise StoreError(f"group {span.group_name!r} spans no coordinates")
    if verify:
        for s in steps:
            open_blob(manifest, s, verify=True)
    blobs = [open_blob(manifest, s) for s in steps]
    n = len(steps) - 1
    ranges = span.ranges if span is not None \
        else [(0, manifest.param_count)]
    parts = []
    for lo, hi in _span_chunks(ranges, chunk):
        theta = np.empty((len(blobs), hi - lo), dtype=np.float64)
        for i, blob in enumerate(blobs):
            theta[i, :] = blob[lo:hi]
        deltas = theta[1:] - theta[:-1]
        parts.append(deltas @ deltas.T)
    d = _tree_combine(parts)
    d = (d + d.T) / 2.0
    source = "full" if span is None else f"group:{span.group_name}"
    step_map = list(zip(steps[:-1], steps[1:]))
    return DotMatrix(d, source, step_map)


def group_dot_matrix(manifest: Manifest, span: KeySpan,
                     chunk: int = STREAM_CHUNK,
                     verify: bool = True) -> DotMatrix:
    """Dot-product matrix restricted to one layer group's coordinates."""
    return dot_matrix_from_store(manifest, span=span, chunk=chunk,
                                 verify=verify)


def window_gram(d: DotMatrix, t0: int, width: int) -> GramMatrix:
    """Extract the W x W principal submatrix for the window at ``t0``."""
    if width < 2:
        raise ValueError("window width must be >= 2")
    if width > MAX_WINDOW:
        raise ValueError(f"window {width} exceeds max {MAX_WINDOW}")
    if t0 < 0 or t0 + width > d.n:
        raise ValueError(
            f"window [{t0}, {t0 + width}) exceeds the {d.n} available "
            f"deltas")
    sub = np.array(d.values[t0:t0 + width, t0:t0 + width])
    return GramMatrix(sub, t0, width)


def check_dot_matrix(d: DotMatrix) -> None:
    """Validate symmetry, diagonal sign, and PSD-within-tolerance."""
    v = d.values
    scale = np.linalg.norm(v)
    if scale > 0 and np.max(np.abs(v - v.T)) > 1e-9 * scale:
        raise ValueError("dot matrix is not symmetric")
    if np.any(np.diag(v) < 0):
        raise ValueError("dot matrix has a negative diagonal entry")
    lam = np.linalg.eigvalsh(v)
    if lam.min() < -PSD_TOL * max(np.trace(v), 0.0):
        raise ValueError(
            f"dot matrix is not PSD within tolerance (min eig "
            f"{lam.min():.3e})")


def _source_slug(source: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", source)


def save_dot_matrix(d: DotMatrix, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    slug = _source_slug(d.source)
    bin_path = out_dir / f"dots_{slug}.bin"
    header = {
        "n": d.n,
        "source": d.source,
        "step_map": [[int(a), int(b)] for a, b in d.step_map],
        "dtype": "<f8",
        "order": "row-major",
    }
    (out_dir / f"dots_{slug}.json").write_text(
        json.dumps(header, indent=1, sort_keys=True) + "\n")
    np.ascontiguousarray(d.values, dtype="<f8").tofile(bin_path)
    return bin_path


def load_dot_matrix(out_dir: str | Path, source: str = "full") -> DotMatrix:
    out_dir = Path(out_dir)
    slug = _source_slug(source)
    header_path = out_dir / f"dots_{slug}.json"
    if not header_path.exists():
        raise StoreError(f"no dot matrix header {header_path}")
    header = json.loads(header_path.read_text())
    n = int(header["n"])
    values = np.fromfile(out_dir / f"dots_{slug}.bin",
                         dtype="<f8").reshape(n, n)
    step_map = [(int(a), int(b)) for a, b in header["step_map"]]
    return DotMatrix(values, header["source"], step_map)
