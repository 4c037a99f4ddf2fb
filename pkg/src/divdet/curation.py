"""Diversity curation: similarity dedup, class refinement, and balancing.

The curator reduces a labeled embedding manifest in three passes:

1. ``global``      - greedy first-keep dedup over all records at threshold T.
2. ``class_*``     - if the classes are unbalanced beyond tolerance, dedup
   the larger class alone at a refined (lower) threshold found by bisection.
3. ``balance``     - any residual imbalance is removed by a seeded uniform
   subsample of the larger class.

Every pass is deterministic given (manifest order, config), and every
discarded record is attributed to the kept record that displaced it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DataError
from .manifest import EmbeddingRecord, Manifest

logger = logging.getLogger(__name__)

REFINE_ITERATIONS = 12

STAGE_GLOBAL = "global"
STAGE_CLASS_REAL = "class_real"
STAGE_CLASS_FAKE = "class_fake"
STAGE_BALANCE = "balance"

# balance-pass discards are subsampled, not similarity-driven; their
# similarity field carries this sentinel
BALANCE_SENTINEL = 1.0


@dataclass(frozen=True)
class CurationConfig:
    """Knobs for the curation passes.

    threshold: global dedup cutoff in (0, 1]; pairs strictly above it are
        considered redundant.  1.0 disables filtering entirely.
    balance_tolerance: largest allowed |#real - #fake| in the output.
    seed: RNG seed for the balancing subsample.
    refine_floor: lowest threshold the class-refinement bisection may try.
    """

    threshold: float
    balance_tolerance: int = 0
    seed: int = 0
    refine_floor: float = 0.3

    def __post_init__(self):
        if not (0.0 < self.threshold <= 1.0):
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")
        if not (0.0 < self.refine_floor <= self.threshold):
            raise ValueError(
                f"refine_floor must be in (0, threshold], got {self.refine_floor}"
            )
        if self.balance_tolerance < 0:
            raise ValueError("balance_tolerance must be nonnegative")


@dataclass(frozen=True)
class Discard:
    """One removed record: who was dropped, which kept record displaced it,
    at what similarity, during which pass."""

    discarded_id: str
    kept_id: str
    similarity: float
    stage: str


@dataclass
class CurationReport:
    """Full audit of a curation run.

    Counts trace the funnel: total input, survivors of the global pass
    (split by class), and the final output size.  ``refined_threshold`` is
    the class-refinement cutoff actually applied, or None when that pass
    did not run.
    """

    input_count: int
    after_global: int
    real_after_global: int
    fake_after_global: int
    final_count: int
    refined_threshold: float | None
    discards: list[Discard] = field(default_factory=list)

    def to_jsonl(self) -> str:
        """Line-delimited form: one summary line, then one line per discard."""
        lines = [
            json.dumps(
                {
                    "input_count": self.input_count,
                    "after_global": self.after_global,
                    "real_after_global": self.real_after_global,
                    "fake_after_global": self.fake_after_global,
                    "final_count": self.final_count,
                    "refined_threshold": self.refined_threshold,
                    "discard_count": len(self.discards),
                }
            )
        ]
        for d in self.discards:
            lines.append(
                json.dumps(
                    {
                        "discarded_id": d.discarded_id,
                        "kept_id": d.kept_id,
                        "similarity": d.similarity,
                        "stage": d.stage,
                    }
                )
            )
        return "\n".join(lines) + "\n"


def greedy_dedup(
    records: Sequence[EmbeddingRecord], threshold: float
) -> tuple[list[str], list[Discard]]:
    """Single forward dedup scan in the given order.

    A record is discarded iff some earlier *kept* record is strictly more
    similar than ``threshold``; it is attributed to the first such record.
    The kept set therefore never contains a pair above the threshold.
    """
    if not records:
        raise ValueError("records must be nonempty")
    if not (0.0 < threshold <= 1.0):
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    kept_ids: list[str] = []
    kept_rows: list[np.ndarray] = []
    discards: list[Discard] = []
    kept_mat = np.zeros((0, records[0].vector.shape[0]), dtype=np.float64)
    dirty = False
    for rec in records:
        if dirty:
            kept_mat = np.stack(kept_rows)
            dirty = False
        v = rec.vector.astype(np.float64)
        if kept_rows:
            sims = np.clip(kept_mat @ v, -1.0, 1.0)
            over = np.nonzero(sims > threshold)[0]
            if over.size:
                first = int(over[0])
                discards.append(
                    Discard(rec.id, kept_ids[first], float(sims[first]), STAGE_GLOBAL)
                )
                continue
        kept_ids.append(rec.id)
        kept_rows.append(v)
        dirty = True
    return kept_ids, discards


def _dedup_count(records: Sequence[EmbeddingRecord], threshold: float) -> int:
    kept, _ = greedy_dedup(records, threshold)
    return len(kept)


def _refine_threshold(
    larger: Sequence[EmbeddingRecord], target: int, floor: float, ceiling: float
) -> float:
    """Bisect for the largest threshold that dedups ``larger`` down to at
    most ``target`` records; fall back to the floor when none qualifies."""
    lo, hi = floor, ceiling
    best = None
    for _ in range(REFINE_ITERATIONS):
        mid = 0.5 * (lo + hi)
        if _dedup_count(larger, mid) <= target:
            best = mid
            lo = mid
        else:
            hi = mid
    return best if best is not None else floor


def curate(manifest: Manifest, cfg: CurationConfig) -> tuple[Manifest, CurationReport]:
    """Run all curation passes over a labeled manifest.

    Returns the curated manifest (a subset of the input, original order
    preserved) and the audit report.  Requires both classes present.
    """
    if manifest.count == 0:
        raise ValueError("manifest is empty")
    labels = manifest.labels()
    if len(set(labels.tolist())) < 2:
        raise DataError("curation requires both real and fake records")

    discards: list[Discard] = []

    kept_ids, global_discards = greedy_dedup(manifest.records, cfg.threshold)
    discards.extend(global_discards)
    kept_set = set(kept_ids)
    kept_records = [r for r in manifest.records if r.id in kept_set]
    by_class: dict[int, list[EmbeddingRecord]] = {0: [], 1: []}
    for r in kept_records:
        by_class[r.label].append(r)
    real_after = len(by_class[0])
    fake_after = len(by_class[1])
    logger.info(
        "global dedup: %d -> %d (%d real / %d fake)",
        manifest.count, len(kept_records), real_after, fake_after,
    )

    refined_threshold = None
    if abs(real_after - fake_after) > cfg.balance_tolerance:
        larger_label = 0 if real_after > fake_after else 1
        larger = by_class[larger_label]
        target = len(by_class[1 - larger_label]) + cfg.balance_tolerance
        refined_threshold = _refine_threshold(
            larger, target, cfg.refine_floor, cfg.threshold
        )
        refined_kept, refined_discards = greedy_dedup(larger, refined_threshold)
        stage = STAGE_CLASS_REAL if larger_label == 0 else STAGE_CLASS_FAKE
        for d in refined_discards:
            discards.append(Discard(d.discarded_id, d.kept_id, d.similarity, stage))
        refined_set = set(refined_kept)
        by_class[larger_label] = [r for r in larger if r.id in refined_set]
        logger.info(
            "class refinement at %.6f: %s class %d -> %d",
            refined_threshold, "real" if larger_label == 0 else "fake",
            len(larger), len(by_class[larger_label]),
        )

    n_real, n_fake = len(by_class[0]), len(by_class[1])
    if abs(n_real - n_fake) > cfg.balance_tolerance:
        larger_label = 0 if n_real > n_fake else 1
        larger = by_class[larger_label]
        target = len(by_class[1 - larger_label]) + cfg.balance_tolerance
        rng = np.random.default_rng(cfg.seed)
        drop_idx = rng.choice(len(larger), size=len(larger) - target, replace=False)
        drop_set = {larger[i].id for i in drop_idx}
        survivors = [r for r in larger if r.id not in drop_set]
        anchor = survivors[0].id if survivors else ""
        for r in larger:
            if r.id in drop_set:
                discards.append(Discard(r.id, anchor, BALANCE_SENTINEL, STAGE_BALANCE))
        by_class[larger_label] = survivors
        logger.info("balance subsample: dropped %d records", len(drop_set))

    final_set = {r.id for recs in by_class.values() for r in recs}
    curated = manifest.subset(final_set)
    report = CurationReport(
        input_count=manifest.count,
        after_global=len(kept_records),
        real_after_global=real_after,
        fake_after_global=fake_after,
        final_count=curated.count,
        refined_threshold=refined_threshold,
        discards=discards,
    )
    return curated, report


class DiversityCurator(BaseEstimator):
    """Estimator-style wrapper around :func:`curate` for bare arrays.

    ``fit_resample`` follows the resampler convention: it returns a reduced
    (X, y) rather than transforming feature values.  Rows are assumed (and
    normalized to be) unit vectors; row order is the dedup scan order.
    """

    def __init__(self, threshold: float = 0.9, balance_tolerance: int = 0,
                 seed: int = 0, refine_floor: float = 0.3):
        self.threshold = threshold
        self.balance_tolerance = balance_tolerance
        self.seed = seed
        self.refine_floor = refine_floor

    def _config(self) -> CurationConfig:
        return CurationConfig(
            threshold=self.threshold,
            balance_tolerance=self.balance_tolerance,
            seed=self.seed,
            refine_floor=self.refine_floor,
        )

    def fit_resample(self, X, y) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be 2-D with one label per row")
        manifest = Manifest.from_arrays(
            ids=[str(i) for i in range(X.shape[0])], labels=y.tolist(), vectors=X
        )
        curated, report = curate(manifest, self._config())
        self.report_ = report
        keep = np.array(sorted(int(i) for i in curated.ids()), dtype=np.int64)
        self.sample_indices_ = keep
        return X[keep], y[keep]
