"""Canonical on-disk checkpoint store.

Layout: ``<dir>/manifest.json`` plus one ``step_<N>.bin`` blob per
checkpoint. A blob is the little-endian float32 concatenation of all
retained tensors in manifest key order; every blob in a store has the same
length and the same key order. The manifest records, per step, the blob
path and a sha256 content hash that is verified on load.

:func:`build_manifest` turns a directory of raw per-step dumps (blob plus
``step_<N>.keys.json`` sidecar naming the concatenated keys) into a
canonical store: prefixes are stripped, excluded keys dropped, and keys
re-sorted lexicographically, rewriting blobs when the layout changes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

STORE_VERSION = "trajspec-store-v1"


class StoreError(RuntimeError):
    """A checkpoint store violated its format contract."""


class ChecksumError(StoreError):
    """Blob bytes do not match the checksum recorded in the manifest."""


@dataclass(frozen=True)
class KeyEntry:
    key: str
    offset: int
    length: int


@dataclass(frozen=True)
class StepEntry:
    step_index: int
    blob_path: str
    param_count: int
    checksum: str


@dataclass
class FilterRecord:
    stripped_prefixes: list[str] = field(default_factory=list)
    excluded_key_patterns: list[str] = field(default_factory=list)


@dataclass
class Manifest:
    version: str
    steps: list[StepEntry]
    key_order: list[KeyEntry]
    filter_record: FilterRecord
    root: Path
    extra: dict = field(default_factory=dict)

    @property
    def param_count(self) -> int:
        return self.steps[0].param_count if self.steps else 0

    @property
    def step_indices(self) -> list[int]:
        return [s.step_index for s in self.steps]

    def step(self, step_index: int) -> StepEntry:
        for s in self.steps:
            if s.step_index == step_index:
                return s
        raise StoreError(f"step {step_index} not present in manifest")

    def key_at(self, offset: int) -> KeyEntry:
        """Key entry whose span contains the given element offset."""
        for e in self.key_order:
            if e.offset <= offset < e.offset + e.length:
                return e
        raise IndexError(f"offset {offset} outside [0, {self.param_count})")


@dataclass
class ParamVector:
    values: np.ndarray  # float32, length p
    step_index: int


@dataclass
class DeltaVector:
    values: np.ndarray  # float64, length p
    from_step: int
    to_step: int


@dataclass
class KeySpan:
    group_name: str
    ranges: list[tuple[int, int]]  # (offset, length), non-overlapping

    @property
    def size(self) -> int:
        return sum(length for _, length in self.ranges)


def _sha256_file(path: Path, chunk: int = 1 << 24) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while True:
            block = f.read(chunk)
            if not block:
                break
            h.update(block)
    return "sha256:" + h.hexdigest()


def validate_manifest(m: Manifest) -> None:
    if not m.steps:
        raise StoreError("manifest has no steps")
    idx = m.step_indices
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise StoreError(f"step indices not strictly increasing: {idx}")
    p = m.steps[0].param_count
    for s in m.steps:
        if s.param_count != p:
            raise StoreError(
                f"step {s.step_index} param_count {s.param_count} != {p}")
    offset = 0
    for e in m.key_order:
        if e.offset != offset:
            raise StoreError(
                f"key {e.key!r} offset {e.offset} breaks contiguity "
                f"(expected {offset})")
        if e.length < 0:
            raise StoreError(f"key {e.key!r} has negative length")
        offset += e.length
    if offset != p:
        raise StoreError(f"key lengths sum to {offset}, param_count is {p}")


_MANIFEST_FIELDS = {"version", "steps", "key_order", "filter_record"}


def read_manifest(store_dir: str | Path) -> Manifest:
    store_dir = Path(store_dir)
    path = store_dir / "manifest.json"
    if not path.exists():
        raise StoreError(f"no manifest.json in {store_dir}")
    doc = json.loads(path.read_text())
    m = Manifest(
        version=doc.get("version", ""),
        steps=[StepEntry(s["step_index"], s["blob_path"], s["param_count"],
                         s["checksum"]) for s in doc["steps"]],
        key_order=[KeyEntry(k["key"], k["offset"], k["length"])
                   for k in doc["key_order"]],
        filter_record=FilterRecord(
            list(doc.get("filter_record", {}).get("stripped_prefixes", [])),
            list(doc.get("filter_record", {}).get("excluded_key_patterns",
                                                  []))),
        root=store_dir,
        extra={k: v for k, v in doc.items() if k not in _MANIFEST_FIELDS},
    )
    validate_manifest(m)
    return m


def write_manifest(m: Manifest, store_dir: str | Path | None = None) -> Path:
    store_dir = Path(store_dir) if store_dir is not None else m.root
    doc = dict(m.extra)  # unknown fields ride along
    doc["version"] = m.version
    doc["steps"] = [
        {"step_index": s.step_index, "blob_path": s.blob_path,
         "param_count": s.param_count, "checksum": s.checksum}
        for s in m.steps]
    doc["key_order"] = [
        {"key": e.key, "offset": e.offset, "length": e.length}
        for e in m.key_order]
    doc["filter_record"] = {
        "stripped_prefixes": m.filter_record.stripped_prefixes,
        "excluded_key_patterns": m.filter_record.excluded_key_patterns}
    path = store_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def strip_key(key: str, prefixes: list[str]) -> str:
    for pre in prefixes:
        if pre and key.startswith(pre):
            return key[len(pre):]
    return key


def is_excluded(key: str, patterns: list[str]) -> bool:
    # anchored: the pattern must consume the whole (post-strip) key
    return any(re.fullmatch(pat, key) for pat in patterns)


_STEP_RE = re.compile(r"step_(\d+)\.bin$")


def _scan_raw_steps(checkpoint_dir: Path) -> list[tuple[int, Path, Path]]:
    found = []
    for blob in sorted(checkpoint_dir.glob("step_*.bin")):
        match = _STEP_RE.search(blob.name)
        if not match:
            continue
        sidecar = blob.with_name(blob.stem + ".keys.json")
        if not sidecar.exists():
            raise StoreError(f"{blob.name} has no {sidecar.name} sidecar")
        found.append((int(match.group(1)), blob, sidecar))
    found.sort(key=lambda t: t[0])
    return found


def build_manifest(
    checkpoint_dir: str | Path,
    strip_prefixes: list[str] | tuple = (),
    exclude_patterns: list[str] | tuple = (),
) -> Manifest:
    """Normalize a directory of raw per-step dumps into a canonical store.

    Raw layout: ``step_<N>.bin`` (little-endian float32 tensor concat) with
    a ``step_<N>.keys.json`` sidecar listing ``[{"key": ..., "length": ...},
    ...]`` in concatenation order. Keys are prefix-stripped, excluded keys
    dropped, and the survivors sorted lexicographically; blobs whose layout
    changes are rewritten in place. Writes and returns the manifest.
    """
    checkpoint_dir = Path(checkpoint_dir)
    strip_prefixes = list(strip_prefixes)
    exclude_patterns = list(exclude_patterns)
    raw = _scan_raw_steps(checkpoint_dir)
    if len(raw) < 2:
        raise StoreError(
            f"need at least 2 checkpoints, found {len(raw)} in "
            f"{checkpoint_dir}")

    # normalize each step's key list; require identical sets across steps
    canon: list[tuple[str, int]] | None = None  # (stripped key, length)
    per_step_raw: list[list[tuple[str, str, int]]] = []
    for step_index, blob, sidecar in raw:
        entries = json.loads(sidecar.read_text())
        kept: list[tuple[str, str, int]] = []  # (stripped, raw, length)
        for e in entries:
            stripped = strip_key(e["key"], strip_prefixes)
            if is_excluded(stripped, exclude_patterns):
                continue
            kept.append((stripped, e["key"], int(e["length"])))
        names = [k for k, _, _ in kept]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise StoreError(
                f"duplicate keys after prefix stripping at step "
                f"{step_index}: {dupes}")
        this = sorted((k, ln) for k, _, ln in kept)
        if canon is None:
            canon = this
        elif this != canon:
            ours = {k for k, _ in this}
            theirs = {k for k, _ in canon}
            diff = sorted(ours.symmetric_difference(theirs))
            raise StoreError(
                f"inconsistent key sets across checkpoints; step "
                f"{step_index} differs on: {diff}")
        per_step_raw.append(kept)

    assert canon is not None
    key_order = []
    offset = 0
    for k, ln in canon:
        key_order.append(KeyEntry(k, offset, ln))
        offset += ln
    p = offset

    steps = []
    for (step_index, blob, sidecar), kept in zip(raw, per_step_raw):
        raw_entries = json.loads(sidecar.read_text())
        raw_order = [(e["key"], int(e["length"])) for e in raw_entries]
        normalized_raw = [
            (strip_key(k, strip_prefixes), ln) for k, ln in raw_order
            if not is_excluded(strip_key(k, strip_prefixes), exclude_patterns)
        ]
        if normalized_raw != canon or sum(ln for _, ln in raw_order) != p:
            _rewrite_blob(blob, raw_order, strip_prefixes, exclude_patterns,
                          canon)
        steps.append(StepEntry(step_index, blob.name, p,
                               _sha256_file(blob)))

    manifest = Manifest(STORE_VERSION, steps, key_order,
                        FilterRecord(strip_prefixes, exclude_patterns),
                        root=checkpoint_dir)
    validate_manifest(manifest)
    write_manifest(manifest)
    return manifest


def _rewrite_blob(blob: Path, raw_order, strip_prefixes, exclude_patterns,
                  canon) -> None:
    total = sum(ln for _, ln in raw_order)
    data = np.fromfile(blob, dtype="<f4")
    if data.shape[0] != total:
        raise StoreError(
            f"{blob.name}: {data.shape[0]} elements on disk, sidecar "
            f"declares {total}")
    pieces = {}
    pos = 0
    for k, ln in raw_order:
        stripped = strip_key(k, strip_prefixes)
        if not is_excluded(stripped, exclude_patterns):
            pieces[stripped] = data[pos:pos + ln]
        pos += ln
    out = np.concatenate([pieces[k] for k, _ in canon]) if canon \
        else np.empty(0, dtype="<f4")
    out.astype("<f4").tofile(blob)
    # refresh the sidecar so a re-run sees the normalized layout
    sidecar = blob.with_name(blob.stem + ".keys.json")
    sidecar.write_text(json.dumps(
        [{"key": k, "length": ln} for k, ln in canon], indent=1) + "\n")


def load_vector(manifest: Manifest, step_index: int) -> ParamVector:
    entry = manifest.step(step_index)
    path = manifest.root / entry.blob_path
    if not path.exists():
        raise StoreError(f"blob missing: {path}")
    actual = _sha256_file(path)
    if actual != entry.checksum:
        raise ChecksumError(
            f"step {step_index}: checksum {actual} != manifest "
            f"{entry.checksum}")
    values = np.fromfile(path, dtype="<f4")
    if values.shape[0] != entry.param_count:
        raise StoreError(
            f"step {step_index}: blob has {values.shape[0]} elements, "
            f"manifest says {entry.param_count}")
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        key = manifest.key_at(bad)
        raise StoreError(
            f"step {step_index}: non-finite value at offset {bad} "
            f"(key {key.key!r}, span [{key.offset}, "
            f"{key.offset + key.length}))")
    return ParamVector(values, step_index)


def open_blob(manifest: Manifest, step_index: int,
              verify: bool = False) -> np.memmap:
    """Memory-map a blob for chunked reads (checksum not verified unless
    asked; streaming callers verify once up front)."""
    entry = manifest.step(step_index)
    path = manifest.root / entry.blob_path
    if verify:
        actual = _sha256_file(path)
        if actual != entry.checksum:
            raise ChecksumError(
                f"step {step_index}: checksum {actual} != manifest "
                f"{entry.checksum}")
    return np.memmap(path, dtype="<f4", mode="r",
                     shape=(entry.param_count,))


def verify_store(manifest: Manifest) -> None:
    """Check every blob's checksum; raises ChecksumError on mismatch."""
    for s in manifest.steps:
        open_blob(manifest, s.step_index, verify=True)


def compute_delta(manifest: Manifest, a: ParamVector,
                  b: ParamVector) -> DeltaVector:
    idx = manifest.step_indices
    try:
        pos = idx.index(a.step_index)
    except ValueError:
        raise StoreError(f"step {a.step_index} not in manifest") from None
    if pos + 1 >= len(idx) or idx[pos + 1] != b.step_index:
        raise StoreError(
            f"steps {a.step_index} -> {b.step_index} are not adjacent in "
            f"the manifest (successor is "
            f"{idx[pos + 1] if pos + 1 < len(idx) else 'none'}); deltas "
            f"must not skip checkpoints")
    values = b.values.astype(np.float64) - a.values.astype(np.float64)
    return DeltaVector(values, a.step_index, b.step_index)


def load_delta(manifest: Manifest, position: int) -> DeltaVector:
    """Delta number ``position`` (0-based over adjacent step pairs)."""
    idx = manifest.step_indices
    if not (0 <= position < len(idx) - 1):
        raise StoreError(
            f"delta position {position} out of range [0, {len(idx) - 1})")
    a = load_vector(manifest, idx[position])
    b = load_vector(manifest, idx[position + 1])
    return compute_delta(manifest, a, b)


def iter_deltas(manifest: Manifest):
    """Yield all adjacent deltas in order, loading each blob once."""
    idx = manifest.step_indices
    prev = load_vector(manifest, idx[0])
    for step in idx[1:]:
        cur = load_vector(manifest, step)
        yield compute_delta(manifest, prev, cur)
        prev = cur


def _merge_ranges(offsets: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for off, ln in sorted(offsets):
        if merged and merged[-1][0] + merged[-1][1] == off:
            merged[-1] = (merged[-1][0], merged[-1][1] + ln)
        else:
            merged.append((off, ln))
    return merged


def group_spans(manifest: Manifest,
                grouping: list[tuple[str, str]]) -> list[KeySpan]:
    """Assign each key to the first group whose pattern matches its start.

    Patterns are regexes anchored at the start of the (post-strip) key.
    Keys matched by no group land in an implicit ``other`` group. A group
    that matches nothing yields an empty span and a warning.
    """
    compiled = [(name, re.compile(pat)) for name, pat in grouping]
    buckets: dict[str, list[tuple[int, int]]] = {n: [] for n, _ in compiled}
    other: list[tuple[int, int]] = []
    for e in manifest.key_order:
        for name, pat in compiled:
            if pat.match(e.key):
                buckets[name].append((e.offset, e.length))
                break
        else:
            other.append((e.offset, e.length))
    spans = []
    for name, _ in compiled:
        if not buckets[name]:
            logger.warning("group %r matched no keys", name)
        spans.append(KeySpan(name, _merge_ranges(buckets[name])))
    if other:
        spans.append(KeySpan("other", _merge_ranges(other)))
    return spans


class StoreWriter:
    """Stream a canonical store to disk, one step at a time.

    Used by the synthetic generator and by tests; checkpoint values are fed
    in coordinate chunks so arbitrarily large parameter counts never have
    to be resident at once.
    """

    def __init__(self, store_dir: str | Path,
                 key_order: list[tuple[str, int]],
                 filter_record: FilterRecord | None = None):
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        names = [k for k, _ in key_order]
        if sorted(names) != names:
            raise StoreError("key_order must be lexicographically sorted")
        self._key_order = []
        offset = 0
        for k, ln in key_order:
            self._key_order.append(KeyEntry(k, offset, ln))
            offset += ln
        self._p = offset
        self._filter = filter_record or FilterRecord()
        self._steps: list[StepEntry] = []
        self._last_index: int | None = None

    @property
    def param_count(self) -> int:
        return self._p

    def add_step(self, step_index: int, chunks) -> None:
        """Write one blob from an iterable of float chunks (cast to f32)."""
        if self._last_index is not None and step_index <= self._last_index:
            raise StoreError("steps must be added in increasing order")
        name = f"step_{step_index}.bin"
        path = self.store_dir / name
        h = hashlib.sha256()
        written = 0
        with open(path, "wb") as f:
            for chunk in chunks:
                buf = np.ascontiguousarray(chunk, dtype="<f4").tobytes()
                h.update(buf)
                f.write(buf)
                written += len(buf) // 4
        if written != self._p:
            raise StoreError(
                f"step {step_index}: wrote {written} elements, key order "
                f"requires {self._p}")
        self._steps.append(StepEntry(step_index, name, self._p,
                                     "sha256:" + h.hexdigest()))
        self._last_index = step_index

    def finalize(self) -> Manifest:
        m = Manifest(STORE_VERSION, self._steps, self._key_order,
                     self._filter, root=self.store_dir)
        validate_manifest(m)
        write_manifest(m)
        return m


def write_raw_checkpoint(checkpoint_dir: str | Path, step_index: int,
                         tensors: dict[str, np.ndarray]) -> None:
    """Write one raw (pre-manifest) dump: blob + keys sidecar.

    Tensor insertion order is preserved in the blob; :func:`build_manifest`
    does the sorting. Arrays are flattened row-major and cast to f32.
    """
    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    blob = checkpoint_dir / f"step_{step_index}.bin"
    entries = []
    with open(blob, "wb") as f:
        for key, arr in tensors.items():
            flat = np.ascontiguousarray(arr, dtype="<f4").reshape(-1)
            f.write(flat.tobytes())
            entries.append({"key": key, "length": int(flat.shape[0])})
    sidecar = checkpoint_dir / f"step_{step_index}.keys.json"
    sidecar.write_text(json.dumps(entries, indent=1) + "\n")
