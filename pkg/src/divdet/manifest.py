"""Embedding manifests: the interchange format between encoders and the
numeric pipeline.

A manifest on disk is a pair of files:

* ``<path>``            - one JSON header line ``{"dimension": D, "count": N,
  "dtype": "f32"}`` followed by ``N`` rows of ``D`` little-endian float32
  values (no separators, ``4*D`` bytes per row).
* ``<path>.meta.jsonl`` - one JSON object per record, in row order, with
  fields ``id``, ``label`` ("real" | "fake"), ``generator``, ``branch``
  ("pixel" | "spectrum" | "fused"), ``source_path``.

Vectors are L2-normalized exactly once, at ingestion: the norm is computed
in float64 and the result rounded back to float32.  Rows that are already
unit-norm within 1e-6 are kept bit-for-bit, which makes write -> read the
identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, FormatError, IntegrityError
from .imageops import bilinear_resize, to_grayscale

LABEL_NAMES = {"real": 0, "fake": 1}
LABEL_STRINGS = {0: "real", 1: "fake"}
BRANCHES = ("pixel", "spectrum", "fused")

NORM_TOL = 1e-6

# toy_embed internals, fixed by contract: images are pooled to this grid and
# a constant bias sample is appended so uniform images still embed nonzero.
_TOY_GRID = 16
_TOY_FLAT = _TOY_GRID * _TOY_GRID + 1


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    """One sample: identity, binary label (0=real, 1=fake), generator tag,
    branch, and its feature vector."""

    id: str
    label: int
    generator: str
    branch: str
    vector: np.ndarray
    source_path: str = ""

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 (real) or 1 (fake), got {self.label!r}")
        if self.branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}, got {self.branch!r}")


@dataclass(eq=False)
class Manifest:
    """An ordered, immutable-by-convention collection of embedding records.

    Record order is the canonical processing order for every deterministic
    operation downstream; nothing may reorder it.
    """

    dimension: int
    records: list[EmbeddingRecord]
    source_note: str = ""
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def count(self) -> int:
        return len(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    def matrix(self) -> np.ndarray:
        """All vectors stacked as a float64 (count, dimension) array (cached)."""
        if self._matrix is None:
            if self.count == 0:
                self._matrix = np.zeros((0, self.dimension), dtype=np.float64)
            else:
                self._matrix = np.stack([r.vector for r in self.records]).astype(np.float64)
        return self._matrix

    def validate(self) -> None:
        seen: set[tuple[str, str]] = set()
        for r in self.records:
            if r.vector.shape != (self.dimension,):
                raise IntegrityError(
                    f"record {r.id!r}: vector has {r.vector.shape[0]} values, "
                    f"manifest dimension is {self.dimension}"
                )
            key = (r.id, r.branch)
            if key in seen:
                raise IntegrityError(f"duplicate id {r.id!r} for branch {r.branch!r}")
            seen.add(key)

    def subset(self, keep_ids: Iterable[str]) -> "Manifest":
        """New manifest containing only ``keep_ids``, in the original order."""
        keep = set(keep_ids)
        records = [r for r in self.records if r.id in keep]
        return Manifest(self.dimension, records, source_note=self.source_note)

    @classmethod
    def from_arrays(
        cls,
        ids: Sequence[str],
        labels: Sequence[int],
        vectors: np.ndarray,
        generators: Sequence[str] | str = "",
        branch: str = "pixel",
        source_note: str = "",
    ) -> "Manifest":
        """Build a manifest from parallel arrays, normalizing each row."""
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or len(ids) != vectors.shape[0] or len(labels) != len(ids):
            raise ValueError("ids, labels and vector rows must align")
        if isinstance(generators, str):
            generators = [generators] * len(ids)
        records = [
            EmbeddingRecord(
                id=str(i),
                label=int(y),
                generator=g,
                branch=branch,
                vector=_normalize_ingest(v.astype(np.float32), str(i)),
            )
            for i, y, g, v in zip(ids, labels, generators, vectors)
        ]
        m = cls(dimension=int(vectors.shape[1]), records=records, source_note=source_note)
        m.validate()
        return m


def _normalize_ingest(vec32: np.ndarray, rec_id: str) -> np.ndarray:
    """Unit-normalize a float32 row (norm in float64).

    Rows already unit within 1e-6 are returned untouched so that round-trips
    preserve bits.  A zero-norm row is unusable data.
    """
    v64 = vec32.astype(np.float64)
    norm = float(np.linalg.norm(v64))
    if norm == 0.0:
        raise DataError(f"record {rec_id!r} has a zero-norm vector")
    if abs(norm - 1.0) <= NORM_TOL:
        return vec32
    out = (v64 / norm).astype(np.float32)
    out.flags.writeable = False
    return out


def _meta_path(path) -> Path:
    return Path(str(path) + ".meta.jsonl")


def write_manifest(manifest: Manifest, path) -> None:
    """Write vectors file + metadata sidecar.  Round-trips bit-exactly."""
    manifest.validate()
    path = Path(path)
    header = {"dimension": manifest.dimension, "count": manifest.count, "dtype": "f32"}
    with open(path, "wb") as f:
        f.write((json.dumps(header) + "\n").encode("utf-8"))
        for r in manifest.records:
            f.write(np.ascontiguousarray(r.vector, dtype="<f4").tobytes())
    with open(_meta_path(path), "w", encoding="utf-8") as f:
        if manifest.source_note:
            f.write(json.dumps({"source_note": manifest.source_note}) + "\n")
        for r in manifest.records:
            f.write(
                json.dumps(
                    {
                        "id": r.id,
                        "label": LABEL_STRINGS[r.label],
                        "generator": r.generator,
                        "branch": r.branch,
                        "source_path": r.source_path,
                    }
                )
                + "\n"
            )


def read_manifest(path) -> Manifest:
    """Read a manifest pair from disk, establishing every invariant.

    Raises FormatError for malformed headers or metadata, IntegrityError when
    header, payload and sidecar disagree, DataError for zero-norm vectors.
    """
    path = Path(path)
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: unreadable header line: {e}") from e
        for key in ("dimension", "count", "dtype"):
            if key not in header:
                raise FormatError(f"{path}: header missing field {key!r}")
        dim, count = header["dimension"], header["count"]
        if not isinstance(dim, int) or dim < 1:
            raise FormatError(f"{path}: header field 'dimension' must be a positive integer")
        if not isinstance(count, int) or count < 0:
            raise FormatError(f"{path}: header field 'count' must be a nonnegative integer")
        if header["dtype"] != "f32":
            raise FormatError(f"{path}: header field 'dtype' must be 'f32'")
        payload = f.read()

    expected = 4 * dim * count
    if len(payload) != expected:
        raise IntegrityError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected} "
            f"({count} rows x {dim} values)"
        )
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, dim) if count else np.zeros((0, dim), "<f4")

    meta_file = _meta_path(path)
    if not meta_file.exists():
        raise FormatError(f"{meta_file}: metadata sidecar not found")
    source_note = ""
    entries = []
    with open(meta_file, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{meta_file}:{lineno}: bad JSON: {e}") from e
            if "source_note" in obj and "id" not in obj:
                source_note = str(obj["source_note"])
                continue
            entries.append((lineno, obj))
    if len(entries) != count:
        raise IntegrityError(
            f"{meta_file}: {len(entries)} metadata rows for {count} vector rows"
        )

    records = []
    for (lineno, obj), vec in zip(entries, rows):
        for key in ("id", "label"):
            if key not in obj:
                raise FormatError(f"{meta_file}:{lineno}: missing field {key!r}")
        label = obj["label"]
        if label not in LABEL_NAMES:
            raise FormatError(
                f"{meta_file}:{lineno}: label must be 'real' or 'fake', got {label!r}"
            )
        vec = vec.copy()
        vec.flags.writeable = False
        records.append(
            EmbeddingRecord(
                id=str(obj["id"]),
                label=LABEL_NAMES[label],
                generator=str(obj.get("generator", "")),
                branch=str(obj.get("branch", "pixel")),
                vector=_normalize_ingest(vec, str(obj["id"])),
            )
        )
    m = Manifest(dimension=dim, records=records, source_note=source_note)
    m.validate()
    return m


def toy_embed(image: np.ndarray, dim: int, seed: int) -> np.ndarray:
    """Deterministic stand-in embedding so the pipeline runs without a real
    encoder.

    The image is pooled to a fixed 16x16 grayscale grid (bilinear), flattened,
    a constant 1.0 bias sample is appended, and the result is projected
    through a Gaussian matrix drawn from ``default_rng(seed)`` and
    L2-normalized.  Identical (image, dim, seed) always gives identical
    output.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("image is empty")
    if dim < 2:
        raise ValueError("dim must be at least 2")
    grid = bilinear_resize(to_grayscale(arr), _TOY_GRID, _TOY_GRID)
    flat = np.concatenate([grid.ravel(), [1.0]])
    rng = np.random.default_rng(seed)
    proj = rng.standard_normal((dim, _TOY_FLAT))
    v = proj @ flat
    return v / np.linalg.norm(v)
