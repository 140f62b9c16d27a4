"""Counter-based Gaussian streams for on-the-fly random projection.

Every variate is a pure function of ``(seed, row, index)``: the 64-bit
counter ``row << 40 | index`` is pushed through the splitmix64 golden-ratio
step and the Stafford mix13 finalizer, and the resulting uniform is mapped
to a normal deviate by Wichura's PPND16 rational approximation of the
inverse normal CDF (absolute error well below 1e-9).

Because nothing is stored and no state is carried between calls, any slice
of a stream can be regenerated independently. Reductions over a stream use
fixed-size base blocks (:data:`BASE_BLOCK` elements, summed sequentially)
combined by a pairwise tree, so dot products against a stream are
bit-identical no matter how the caller chunks the coordinate axis.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

# Coordinates live in the low 40 bits of the counter, rows above them.
MAX_INDEX = 1 << 40
MAX_ROW = 1 << 23

# Elements per reduction base block. Fixed: changing it changes results.
BASE_BLOCK = 4096

_GOLDEN = uint64(0x9E3779B97F4A7C15)
_MIX1 = uint64(0xBF58476D1CE4E5B9)
_MIX2 = uint64(0x94D049BB133111EB)

# 2^-53 and 2^-54: map the top 53 bits of the counter hash to (0, 1).
_U53 = 1.1102230246251565e-16
_U54 = 5.551115123125783e-17


@njit(cache=True)
def _mix13(z):
    z = (z ^ (z >> uint64(30))) * _MIX1
    z = (z ^ (z >> uint64(27))) * _MIX2
    return z ^ (z >> uint64(31))


@njit(cache=True)
def _seed_key_impl(seed):
    # Decorrelate nearby seeds before they enter the counter stream.
    return _mix13(uint64(seed) * _GOLDEN + uint64(0x632BE59BD9B4E019))


def _seed_key(seed) -> np.uint64:
    # dispatcher returns a Python int; re-wrap so downstream jitted calls
    # type the key as uint64 (int64/uint64 mixes promote to float64)
    return np.uint64(_seed_key_impl(np.uint64(seed)))


@njit(cache=True, fastmath=True, error_model="numpy")
def _gauss_fill(key, base, n, out, ubuf, ibuf):
    """Fill ``out[:n]`` with normals for counters ``base .. base+n-1``.

    Branchless central PPND16 path first (covers |u - 0.5| <= 0.425, about
    85% of draws, and vectorizes). Tail positions are then compacted into
    ``ibuf`` and fixed up in a tight second loop; the compaction plus a
    branchless sign keeps mispredictions from serializing the tail math.
    """
    for i in range(n):
        z = key + (base + uint64(i)) * _GOLDEN
        z = (z ^ (z >> uint64(30))) * _MIX1
        z = (z ^ (z >> uint64(27))) * _MIX2
        z = z ^ (z >> uint64(31))
        u = (z >> uint64(11)) * _U53 + _U54
        ubuf[i] = u
        q = u - 0.5
        r = 0.180625 - q * q
        r = max(r, 0.0)
        r2 = r * r
        r4 = r2 * r2
        n0 = 3.3871328727963666080e0 + r * 1.3314166789178437745e2
        n1 = 1.9715909503065514427e3 + r * 1.3731693765509461125e4
        n2 = 4.5921953931549871457e4 + r * 6.7265770927008700853e4
        n3 = 3.3430575583588128105e4 + r * 2.5090809287301226727e3
        num = (n0 + n1 * r2) + (n2 + n3 * r2) * r4
        d0 = 1.0 + r * 4.2313330701600911252e1
        d1 = 6.8718700749205790830e2 + r * 5.3941960214247511077e3
        d2 = 2.1213794301586595867e4 + r * 3.9307895800092710610e4
        d3 = 2.8729085735721942674e4 + r * 5.2264952788528545610e3
        den = (d0 + d1 * r2) + (d2 + d3 * r2) * r4
        out[i] = q * num / den
    k = 0
    for i in range(n):
        if abs(ubuf[i] - 0.5) > 0.425:
            ibuf[k] = i
            k += 1
    for j in range(k):
        i = ibuf[j]
        u = ubuf[i]
        q = u - 0.5
        r = min(u, 1.0 - u)
        r = np.sqrt(-np.log(r))
        if r <= 5.0:
            r = r - 1.6
            r2 = r * r
            r4 = r2 * r2
            a0 = 1.42343711074968357734e0 \
                + r * 4.63033784615654529590e0
            a1 = 5.76949722146069140550e0 \
                + r * 3.64784832476320460504e0
            a2 = 1.27045825245236838258e0 \
                + r * 2.41780725177450611770e-1
            a3 = 2.27238449892691845833e-2 \
                + r * 7.74545014278341407640e-4
            num = (a0 + a1 * r2) + (a2 + a3 * r2) * r4
            b0 = 1.0 + r * 2.05319162663775882187e0
            b1 = 1.67638483018380384940e0 \
                + r * 6.89767334985100004550e-1
            b2 = 1.48103976427480074590e-1 \
                + r * 1.51986665636164571966e-2
            b3 = 5.47593808499534494600e-4 \
                + r * 1.05075007164441684324e-9
            den = (b0 + b1 * r2) + (b2 + b3 * r2) * r4
        else:
            r = r - 5.0
            r2 = r * r
            r4 = r2 * r2
            a0 = 6.65790464350110377720e0 \
                + r * 5.46378491116411436990e0
            a1 = 1.78482653991729133580e0 \
                + r * 2.96560571828504891230e-1
            a2 = 2.65321895265761230930e-2 \
                + r * 1.24266094738807843860e-3
            a3 = 2.71155556874348757815e-5 \
                + r * 2.01033439929228813265e-7
            num = (a0 + a1 * r2) + (a2 + a3 * r2) * r4
            b0 = 1.0 + r * 5.99832206555887937690e-1
            b1 = 1.36929880922735805310e-1 \
                + r * 1.48753612908506148525e-2
            b2 = 7.86869131145613259100e-4 \
                + r * 1.84631831751005468180e-5
            b3 = 1.42151175831644588870e-7 \
                + r * 2.04426310338993978564e-15
            den = (b0 + b1 * r2) + (b2 + b3 * r2) * r4
        out[i] = np.copysign(num / den, q)


@njit(cache=True)
def _tree_reduce(partials, nblk):
    """Fold ``partials[:nblk]`` with a fixed pairwise tree, in place."""
    k = nblk
    while k > 1:
        half = (k + 1) // 2
        for i in range(k // 2):
            partials[i] = partials[2 * i] + partials[2 * i + 1]
        if k % 2 == 1:
            partials[k // 2] = partials[k - 1]
        k = half
    return partials[0]


@njit(cache=True)
def _row_dot_range(key, row, values, start, out_partials, buf, ubuf,
                   ibuf):
    """Partial sums of <values, gauss stream> over fixed base blocks.

    ``values[i]`` pairs with stream index ``start + i``. ``start`` must be
    a multiple of BASE_BLOCK so block boundaries are absolute, not relative
    to the call: that is what makes chunked calls exactly composable.
    """
    n = values.shape[0]
    nblk = (n + BASE_BLOCK - 1) // BASE_BLOCK
    base = (uint64(row) << uint64(40)) + uint64(start)
    for b in range(nblk):
        lo = b * BASE_BLOCK
        m = min(BASE_BLOCK, n - lo)
        _gauss_fill(key, base + uint64(lo), m, buf, ubuf, ibuf)
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        acc3 = 0.0
        i = 0
        while i + 4 <= m:
            acc0 += values[lo + i] * buf[i]
            acc1 += values[lo + i + 1] * buf[i + 1]
            acc2 += values[lo + i + 2] * buf[i + 2]
            acc3 += values[lo + i + 3] * buf[i + 3]
            i += 4
        while i < m:
            acc0 += values[lo + i] * buf[i]
            i += 1
        out_partials[b] = (acc0 + acc1) + (acc2 + acc3)
    return nblk


@njit(cache=True)
def _project_kernel(key, d, values, out):
    buf = np.empty(BASE_BLOCK)
    ubuf = np.empty(BASE_BLOCK)
    ibuf = np.empty(BASE_BLOCK, dtype=np.int64)
    nblk = (values.shape[0] + BASE_BLOCK - 1) // BASE_BLOCK
    partials = np.empty(max(nblk, 1))
    for j in range(d):
        if values.shape[0] == 0:
            out[j] = 0.0
            continue
        _row_dot_range(key, j, values, 0, partials, buf, ubuf, ibuf)
        out[j] = _tree_reduce(partials, nblk)


def gauss_block(seed: int, row: int, start: int, n: int) -> np.ndarray:
    """Return the ``n`` stream variates for ``(seed, row)`` at ``start``."""
    if not (0 <= row < MAX_ROW):
        raise ValueError(f"row {row} out of range [0, {MAX_ROW})")
    if not (0 <= start and start + n <= MAX_INDEX):
        raise ValueError("index range exceeds the 40-bit counter space")
    out = np.empty(n)
    ubuf = np.empty(n)
    ibuf = np.empty(n, dtype=np.int64)
    base = np.uint64((row << 40) + start)
    _gauss_fill(_seed_key(np.uint64(seed)), base, n, out, ubuf, ibuf)
    return out


def stream_dot(seed: int, row: int, values: np.ndarray) -> float:
    """Deterministic <values, gauss(seed, row, .)> with tree reduction."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.shape[0] > MAX_INDEX:
        raise ValueError("vector longer than the 40-bit counter space")
    if values.shape[0] == 0:
        return 0.0
    nblk = (values.shape[0] + BASE_BLOCK - 1) // BASE_BLOCK
    partials = np.empty(nblk)
    buf = np.empty(BASE_BLOCK)
    ubuf = np.empty(BASE_BLOCK)
    ibuf = np.empty(BASE_BLOCK, dtype=np.int64)
    _row_dot_range(_seed_key(np.uint64(seed)), row, values, 0, partials,
                   buf, ubuf, ibuf)
    return float(_tree_reduce(partials, nblk))


class StreamDotAccumulator:
    """Chunked evaluation of stream dots for one or more rows.

    Feed coordinate chunks in order with :meth:`update`; any chunk sizes
    work. Incomplete base blocks are buffered internally so the absolute
    BASE_BLOCK grid (and with it the reduction tree) never depends on the
    caller's chunking: the result equals :func:`stream_dot` on the
    concatenated vector bit for bit.
    """

    def __init__(self, seed: int, rows: int):
        if rows > MAX_ROW:
            raise ValueError("too many rows for the counter layout")
        self._key = _seed_key(np.uint64(seed))
        self._rows = rows
        self._offset = 0  # elements already folded into blocks
        self._pending = np.empty(0)
        self._partials: list[list[np.ndarray]] = [[] for _ in range(rows)]
        self._buf = np.empty(BASE_BLOCK)
        self._ubuf = np.empty(BASE_BLOCK)
        self._ibuf = np.empty(BASE_BLOCK, dtype=np.int64)
        self._closed = False

    def _consume(self, values: np.ndarray) -> None:
        nblk = (values.shape[0] + BASE_BLOCK - 1) // BASE_BLOCK
        for j in range(self._rows):
            partials = np.empty(nblk)
            _row_dot_range(self._key, j, values, self._offset, partials,
                           self._buf, self._ubuf, self._ibuf)
            self._partials[j].append(partials)
        self._offset += values.shape[0]

    def update(self, values: np.ndarray) -> None:
        if self._closed:
            raise RuntimeError("accumulator already finalized")
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape[0] == 0:
            return
        if self._pending.shape[0]:
            values = np.concatenate([self._pending, values])
        n_whole = (values.shape[0] // BASE_BLOCK) * BASE_BLOCK
        if n_whole:
            self._consume(values[:n_whole])
        self._pending = values[n_whole:].copy()

    def finalize(self) -> np.ndarray:
        self._closed = True
        if self._pending.shape[0]:
            self._consume(self._pending)
            self._pending = np.empty(0)
        out = np.zeros(self._rows)
        for j in range(self._rows):
            if not self._partials[j]:
                continue
            allp = np.concatenate(self._partials[j])
            out[j] = _tree_reduce(allp, allp.shape[0])
        return out


def project_rows(seed: int, d: int, values: np.ndarray) -> np.ndarray:
    """All ``d`` stream dots of ``values`` at once (unscaled)."""
    if d > MAX_ROW:
        raise ValueError("d exceeds the row capacity of the counter layout")
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.shape[0] > MAX_INDEX:
        raise ValueError("vector longer than the 40-bit counter space")
    out = np.empty(d)
    _project_kernel(_seed_key(np.uint64(seed)), d, values, out)
    return out
