"""Streaming Gaussian random projection of delta vectors.

Each projected coordinate is ``sketch[j] = (1/sqrt(d)) <delta, phi_j>``
where the projection row ``phi_j`` is a unit-variance Gaussian stream
regenerated on the fly from the counter-based generator: no d x p matrix
is ever stored, results are invariant to how the coordinate axis is
chunked, and the same (seed, d) always reproduces byte-identical
sketches. The 1/sqrt(d) scaling is applied here, at projection time, so
sketched dot products estimate full-dimensional ones directly.

The empirically sufficient projection dimension is d = 10 W for window
size W; at that size the spectral gap survives within about 10% relative
error.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .gram import DotMatrix, dot_matrix
from .store import DeltaVector, Manifest, StoreError, iter_deltas

DEFAULT_BLOCK = 1 << 20


@dataclass(frozen=True)
class SketchConfig:
    d: int
    seed: int
    block_size: int = DEFAULT_BLOCK

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("projection dimension d must be >= 1")
        if self.d > rng.MAX_ROW:
            raise ValueError(f"d exceeds the row capacity {rng.MAX_ROW}")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")

    @property
    def fingerprint(self) -> str:
        # block_size is excluded on purpose: chunk invariance means it
        # cannot affect a single output byte
        digest = hashlib.sha256(
            f"jl-gauss:d={self.d}:seed={self.seed}".encode()).hexdigest()
        return digest[:16]


@dataclass
class SketchVector:
    values: np.ndarray            # float64, length d
    from_step: int
    to_step: int
    config_fingerprint: str


def default_d(width: int) -> int:
    """Projection dimension rule of thumb: 10 rows per window slot."""
    return 10 * width


def project(delta: DeltaVector, config: SketchConfig) -> SketchVector:
    """Project one delta to d coordinates (pure, deterministic)."""
    values = np.ascontiguousarray(delta.values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("delta contains non-finite values")
    out = rng.project_rows(config.seed, config.d, values)
    out /= np.sqrt(config.d)
    return SketchVector(out, delta.from_step, delta.to_step,
                        config.fingerprint)


def project_chunked(chunks, config: SketchConfig, from_step: int,
                    to_step: int) -> SketchVector:
    """Project a delta supplied as a stream of coordinate chunks.

    Chunk boundaries must fall on the generator's base-block grid except
    for the final chunk; output is bit-identical to :func:`project` on
    the concatenated vector.
    """
    acc = rng.StreamDotAccumulator(config.seed, config.d)
    for chunk in chunks:
        acc.update(np.ascontiguousarray(chunk, dtype=np.float64))
    out = acc.finalize() / np.sqrt(config.d)
    return SketchVector(out, from_step, to_step, config.fingerprint)


def _store_header(store_dir: Path) -> dict | None:
    path = store_dir / "sketches.json"
    if not path.exists():
        return None
    return json.loads(path.read_text())


def project_store(manifest: Manifest, config: SketchConfig,
                  out_dir: str | Path, overwrite: bool = False,
                  chunk: int | None = None) -> list[SketchVector]:
    """Sketch every adjacent delta of a store, persisting the results.

    Refuses to clobber an existing sketch store built under a different
    configuration unless ``overwrite`` is set. Blobs stream through
    memory ``chunk`` coordinates at a time (default: the config's
    block_size), so arbitrarily large models fit.
    """
    steps = manifest.step_indices
    if len(steps) < 2:
        raise StoreError("need at least 2 checkpoints to sketch deltas")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    existing = _store_header(out_dir)
    if existing and existing.get("fingerprint") != config.fingerprint \
            and not overwrite:
        raise StoreError(
            f"sketch store at {out_dir} has fingerprint "
            f"{existing.get('fingerprint')}, requested "
            f"{config.fingerprint}; pass overwrite=True to replace it")

    chunk = max(chunk or config.block_size, 1)
    sketches = []
    from .store import open_blob
    for s in steps:
        open_blob(manifest, s, verify=True)
    prev = open_blob(manifest, steps[0])
    for idx in range(1, len(steps)):
        cur = open_blob(manifest, steps[idx])
        acc = rng.StreamDotAccumulator(config.seed, config.d)
        p = manifest.param_count
        for lo in range(0, p, chunk):
            hi = min(lo + chunk, p)
            block = (cur[lo:hi].astype(np.float64)
                     - prev[lo:hi].astype(np.float64))
            acc.update(block)
        values = acc.finalize() / np.sqrt(config.d)
        sk = SketchVector(values, steps[idx - 1], steps[idx],
                          config.fingerprint)
        sketches.append(sk)
        _write_sketch(out_dir, sk)
        prev = cur
    header = {
        "fingerprint": config.fingerprint,
        "d": config.d,
        "seed": config.seed,
        "steps": [[sk.from_step, sk.to_step] for sk in sketches],
    }
    (out_dir / "sketches.json").write_text(
        json.dumps(header, indent=1, sort_keys=True) + "\n")
    return sketches


def _write_sketch(out_dir: Path, sk: SketchVector) -> None:
    path = out_dir / f"sketch_{sk.to_step}.bin"
    np.ascontiguousarray(sk.values, dtype="<f8").tofile(path)


def load_sketches(store_dir: str | Path) -> tuple[list[SketchVector], dict]:
    store_dir = Path(store_dir)
    header = _store_header(store_dir)
    if header is None:
        raise StoreError(f"no sketches.json in {store_dir}")
    sketches = []
    for from_step, to_step in header["steps"]:
        path = store_dir / f"sketch_{to_step}.bin"
        values = np.fromfile(path, dtype="<f8")
        if values.shape[0] != header["d"]:
            raise StoreError(
                f"{path.name} has {values.shape[0]} values, header says "
                f"d={header['d']}")
        sketches.append(SketchVector(values, from_step, to_step,
                                     header["fingerprint"]))
    return sketches, header


def sketch_dot_matrix(sketches: list[SketchVector]) -> DotMatrix:
    """Dot-product matrix of sketched deltas, tagged with the config."""
    if len(sketches) < 2:
        raise ValueError("need at least 2 sketches")
    fp = sketches[0].config_fingerprint
    if any(sk.config_fingerprint != fp for sk in sketches):
        raise ValueError("sketches mix different configurations")
    x = np.stack([sk.values for sk in sketches])
    step_map = [(sk.from_step, sk.to_step) for sk in sketches]
    return dot_matrix(x, source=f"sketched:{fp}", step_map=step_map)


def project_deltas(manifest: Manifest, config: SketchConfig) -> list[SketchVector]:
    """Sketch all deltas in memory (small stores, no persistence)."""
    return [project(dv, config) for dv in iter_deltas(manifest)]
