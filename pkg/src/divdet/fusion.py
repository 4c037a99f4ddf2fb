"""Token-level fusion of pixel-branch and spectrum-branch features.

A branch contributes an ordered list of per-block class tokens; fusion is
their concatenation with the pixel branch first.  Either branch may select
zero blocks, which degrades cleanly to a single-branch feature.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError, IntegrityError, PairingError
from .manifest import Manifest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BranchFeature:
    """Per-sample output of one branch encoder: class tokens in a fixed
    block order shared across the dataset."""

    id: str
    branch: str
    tokens: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.branch not in ("pixel", "spectrum"):
            raise ValueError(f"branch must be 'pixel' or 'spectrum', got {self.branch!r}")
        dims = {t.shape for t in self.tokens}
        if len(dims) > 1 or any(t.ndim != 1 for t in self.tokens):
            raise ValueError("all tokens must be 1-D vectors of one shared dimension")

    @property
    def width(self) -> int:
        return sum(t.shape[0] for t in self.tokens)


@dataclass(frozen=True)
class FusedFeature:
    """The detector-head input: pixel tokens then spectrum tokens, flattened
    into one vector, with the sample's binary label (0=real, 1=fake)."""

    id: str
    vector: np.ndarray
    label: int
    generator: str = ""

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


def fuse(pixel: BranchFeature | None, spectrum: BranchFeature | None,
         label: int = 0, generator: str = "") -> FusedFeature:
    """Concatenate one sample's branch tokens, pixel branch first.

    Both features must be present and agree on id; a missing branch is a
    pairing failure naming the id.  A branch with zero selected tokens
    contributes nothing, but at least one token overall is required.
    """
    if pixel is None and spectrum is None:
        raise PairingError("both branches missing")
    if pixel is None:
        raise PairingError(f"pixel branch missing for id {spectrum.id!r}")
    if spectrum is None:
        raise PairingError(f"spectrum branch missing for id {pixel.id!r}")
    if pixel.id != spectrum.id:
        raise PairingError(f"branch ids differ: {pixel.id!r} vs {spectrum.id!r}")
    parts = list(pixel.tokens) + list(spectrum.tokens)
    if not parts:
        raise ValueError(f"id {pixel.id!r}: no tokens selected in either branch")
    vector = np.concatenate([np.asarray(t, dtype=np.float64) for t in parts])
    return FusedFeature(id=pixel.id, vector=vector, label=label, generator=generator)


def pair_manifests(pixel_manifest: Manifest, spectrum_manifest: Manifest) -> list[FusedFeature]:
    """Inner-join two branch manifests on id and fuse each matched pair.

    Each manifest record contributes its single vector as one token.
    Output follows pixel-manifest order; unmatched ids on either side are
    counted and logged, not errors.  Per-id label disagreement is a data
    integrity failure; an empty join is unusable.
    """
    spec_by_id = {r.id: r for r in spectrum_manifest.records}
    fused: list[FusedFeature] = []
    for rec in pixel_manifest.records:
        other = spec_by_id.get(rec.id)
        if other is None:
            continue
        if other.label != rec.label:
            raise IntegrityError(
                f"id {rec.id!r}: label disagrees between branches "
                f"(pixel={rec.label}, spectrum={other.label})"
            )
        fused.append(
            fuse(
                BranchFeature(rec.id, "pixel", (rec.vector,)),
                BranchFeature(rec.id, "spectrum", (other.vector,)),
                label=rec.label,
                generator=rec.generator,
            )
        )
    matched = {f.id for f in fused}
    unmatched = (pixel_manifest.count - len(matched)) + sum(
        1 for i in spec_by_id if i not in matched
    )
    if unmatched:
        logger.warning("pair_manifests: %d records had no partner and were skipped", unmatched)
    if not fused:
        raise DataError("no ids shared between pixel and spectrum manifests")
    return fused


def single_branch_features(manifest: Manifest) -> list[FusedFeature]:
    """Features for a one-branch ablation: each record's vector used alone."""
    return [
        FusedFeature(id=r.id, vector=r.vector.astype(np.float64), label=r.label,
                     generator=r.generator)
        for r in manifest.records
    ]


def feature_matrix(features: list[FusedFeature]) -> tuple[np.ndarray, np.ndarray]:
    """Stack fused features into (X, y) arrays, checking width consistency."""
    if not features:
        raise ValueError("no features given")
    widths = {f.vector.shape[0] for f in features}
    if len(widths) > 1:
        raise IntegrityError(f"inconsistent fused widths: {sorted(widths)}")
    X = np.stack([f.vector for f in features]).astype(np.float64)
    y = np.array([f.label for f in features], dtype=np.int64)
    return X, y
