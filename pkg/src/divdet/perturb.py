"""Robustness perturbations: Gaussian blur and JPEG re-encoding, plus the
train/test application protocol.

Train phase degrades a seeded fraction of samples with parameters drawn
from small discrete sets; test phase degrades every sample with parameters
drawn from wide continuous ranges.  Every application is logged so a run
can be audited and replayed.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import convolve1d

KIND_GAUSSIAN = "gaussian"
KIND_JPEG = "jpeg"
KIND_BOTH = "both"
KIND_NONE = "none"
KINDS = (KIND_GAUSSIAN, KIND_JPEG, KIND_BOTH, KIND_NONE)


@dataclass(frozen=True)
class PerturbSpec:
    """Protocol parameters.

    Train-phase draws come from the discrete sets; test-phase draws come
    uniformly from the closed ranges.  ``apply_fraction`` gates the train
    phase per sample; 0 disables perturbation entirely in both phases.
    """

    kind: str = KIND_BOTH
    train_sigmas: tuple[float, ...] = (0.5, 1.0)
    train_qualities: tuple[int, ...] = (50, 70)
    test_sigma_range: tuple[float, float] = (0.0, 3.0)
    test_quality_range: tuple[int, int] = (30, 100)
    apply_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not (0.0 <= self.apply_fraction <= 1.0):
            raise ValueError("apply_fraction must be in [0, 1]")
        if not self.train_sigmas or not self.train_qualities:
            raise ValueError("train-phase parameter sets must be non-empty")
        if any(s < 0 for s in self.train_sigmas) or self.test_sigma_range[0] < 0:
            raise ValueError("blur sigma values must be nonnegative")
        if self.test_sigma_range[0] > self.test_sigma_range[1]:
            raise ValueError("test_sigma_range must be ordered")
        for q in (*self.train_qualities, *self.test_quality_range):
            if not (1 <= q <= 100):
                raise ValueError("JPEG qualities must lie in [1, 100]")
        if self.test_quality_range[0] > self.test_quality_range[1]:
            raise ValueError("test_quality_range must be ordered")


@dataclass(frozen=True)
class PerturbEvent:
    """One applied perturbation: sample id, kind, drawn parameter."""

    id: str
    kind: str
    parameter: float


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur.

    Kernel truncated at radius ceil(3 sigma) and renormalized to sum 1;
    edges handled by reflecting the image (edge sample repeated), so
    constant images pass through unchanged.  sigma = 0 is the identity.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    image = np.asarray(image, dtype=np.float64)
    if sigma == 0:
        return image.copy()
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x * x) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    out = convolve1d(image, kernel, axis=0, mode="reflect")
    out = convolve1d(out, kernel, axis=1, mode="reflect")
    return out


def jpeg_roundtrip(image: np.ndarray, quality: int) -> np.ndarray:
    """Encode to baseline JPEG (4:2:0 subsampling) and decode back.

    Input and output are float grids in [0, 1]; quantization to 8 bits is
    part of the round trip.  Deterministic for fixed quality.
    """
    if not (1 <= int(quality) <= 100) or int(quality) != quality:
        raise ValueError(f"quality must be an integer in [1, 100], got {quality!r}")
    image = np.asarray(image, dtype=np.float64)
    squeeze = image.ndim == 2
    if squeeze:
        image = image[:, :, None]
    if image.shape[2] == 1:
        arr = np.clip(np.rint(image[:, :, 0] * 255.0), 0, 255).astype(np.uint8)
        pil = Image.fromarray(arr, mode="L")
    elif image.shape[2] == 3:
        arr = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
        pil = Image.fromarray(arr, mode="RGB")
    else:
        raise ValueError(f"expected 1 or 3 channels, got {image.shape[2]}")
    buf = io.BytesIO()
    pil.save(buf, format="JPEG", quality=int(quality), subsampling=2)
    buf.seek(0)
    decoded = np.asarray(Image.open(buf), dtype=np.float64) / 255.0
    if decoded.ndim == 2:
        decoded = decoded[:, :, None]
    return decoded[:, :, 0] if squeeze else decoded


def _perturb_one(image, events, rng, spec: PerturbSpec, phase: str, sample_id: str):
    """Apply the drawn perturbation(s) for one sample, logging each draw.
    For kind=both the order is fixed: blur first, then JPEG."""
    out = image
    if spec.kind in (KIND_GAUSSIAN, KIND_BOTH):
        if phase == "train":
            sigma = float(spec.train_sigmas[rng.integers(len(spec.train_sigmas))])
        else:
            sigma = float(rng.uniform(*spec.test_sigma_range))
        out = gaussian_blur(out, sigma)
        events.append(PerturbEvent(sample_id, KIND_GAUSSIAN, sigma))
    if spec.kind in (KIND_JPEG, KIND_BOTH):
        if phase == "train":
            quality = int(spec.train_qualities[rng.integers(len(spec.train_qualities))])
        else:
            quality = int(rng.integers(spec.test_quality_range[0],
                                       spec.test_quality_range[1] + 1))
        out = jpeg_roundtrip(out, quality)
        events.append(PerturbEvent(sample_id, KIND_JPEG, float(quality)))
    return out


def apply_protocol(
    images: list[tuple[str, np.ndarray]],
    spec: PerturbSpec,
    phase: str,
) -> tuple[list[tuple[str, np.ndarray]], list[PerturbEvent]]:
    """Run the perturbation protocol over (id, image) pairs.

    Train phase: each sample is independently selected with probability
    ``apply_fraction``; selected samples get parameters drawn uniformly
    from the discrete train sets.  Test phase: every sample is perturbed
    with parameters drawn uniformly from the test ranges (unless
    apply_fraction is 0, which disables the protocol).  Unselected samples
    pass through untouched.  Same seed, same log.
    """
    if phase not in ("train", "test"):
        raise ValueError(f"phase must be 'train' or 'test', got {phase!r}")
    rng = np.random.default_rng(spec.seed)
    out: list[tuple[str, np.ndarray]] = []
    events: list[PerturbEvent] = []
    for sample_id, image in images:
        if spec.kind == KIND_NONE or spec.apply_fraction == 0.0:
            out.append((sample_id, image))
            continue
        if phase == "train" and rng.random() >= spec.apply_fraction:
            out.append((sample_id, image))
            continue
        out.append((sample_id, _perturb_one(image, events, rng, spec, phase, sample_id)))
    return out, events


def events_to_jsonl(events: list[PerturbEvent]) -> str:
    return "".join(
        json.dumps({"id": e.id, "kind": e.kind, "parameter": e.parameter}) + "\n"
        for e in events
    )
