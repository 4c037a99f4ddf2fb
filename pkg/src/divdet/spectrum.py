"""Frequency-domain image representation for the spectrum branch.

Each channel is mapped to its centered DFT magnitude, compressed with
log(1 + m), min-max normalized to [0, 1], and resized to the encoder's
input resolution.  Generative up-sampling artifacts show up as periodic
energy in this representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import FormatError, IntegrityError
from .imageops import bilinear_resize


@dataclass(frozen=True)
class SpectrumParams:
    log_scaled: bool = True
    center_shifted: bool = True


@dataclass(frozen=True)
class SpectrumImage:
    """A conditioned magnitude spectrum: H x W x C grid of values in [0, 1]."""

    grid: np.ndarray
    source_id: str
    params: SpectrumParams = SpectrumParams()


def dft2_magnitude(channel: np.ndarray) -> np.ndarray:
    """Magnitude of the 2-D DFT with the zero-frequency bin moved to the
    grid center.  Linear in input amplitude; shape is preserved."""
    channel = np.asarray(channel, dtype=np.float64)
    if channel.ndim != 2 or channel.shape[0] < 1 or channel.shape[1] < 1:
        raise ValueError(f"expected a nonempty 2-D array, got shape {channel.shape}")
    return np.abs(np.fft.fftshift(np.fft.fft2(channel)))


def to_spectrum_image(
    image: np.ndarray, target_resolution: int, source_id: str = ""
) -> SpectrumImage:
    """Condition an image into its spectrum-branch representation.

    Per channel: centered DFT magnitude, log(1 + m), min-max to [0, 1],
    bilinear resize to ``target_resolution`` square.  A channel whose
    spectrum is perfectly flat (min == max) becomes all zeros rather than
    an error.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.size == 0:
        raise ValueError("image is empty")
    if target_resolution < 1:
        raise ValueError("target_resolution must be positive")
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3:
        raise ValueError(f"expected H x W or H x W x C image, got shape {image.shape}")
    channels = []
    for c in range(image.shape[2]):
        mag = np.log1p(dft2_magnitude(image[:, :, c]))
        lo, hi = float(mag.min()), float(mag.max())
        if hi > lo:
            mag = (mag - lo) / (hi - lo)
        else:
            mag = np.zeros_like(mag)
        channels.append(bilinear_resize(mag, target_resolution, target_resolution))
    grid = np.stack(channels, axis=-1)
    return SpectrumImage(grid=grid, source_id=source_id)


def write_spectrum_file(spec: SpectrumImage, path) -> None:
    """Lossless on-disk form: one JSON header line (shape, dtype, flags)
    followed by the grid as row-major little-endian float64."""
    grid = np.asarray(spec.grid, dtype=np.float64)
    if grid.ndim == 2:
        grid = grid[:, :, None]
    header = {
        "height": int(grid.shape[0]),
        "width": int(grid.shape[1]),
        "channels": int(grid.shape[2]),
        "dtype": "f64",
        "source_id": spec.source_id,
        "log_scaled": spec.params.log_scaled,
        "center_shifted": spec.params.center_shifted,
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header) + "\n").encode("utf-8"))
        f.write(np.ascontiguousarray(grid, dtype="<f8").tobytes())


def read_spectrum_file(path) -> SpectrumImage:
    path = Path(path)
    with open(path, "rb") as f:
        try:
            header = json.loads(f.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: unreadable spectrum header: {e}") from e
        payload = f.read()
    try:
        h, w, c = int(header["height"]), int(header["width"]), int(header["channels"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: bad spectrum header: {e}") from e
    if len(payload) != 8 * h * w * c:
        raise IntegrityError(
            f"{path}: payload is {len(payload)} bytes, header implies {8 * h * w * c}"
        )
    grid = np.frombuffer(payload, dtype="<f8").reshape(h, w, c).astype(np.float64)
    return SpectrumImage(
        grid=grid,
        source_id=str(header.get("source_id", "")),
        params=SpectrumParams(
            log_scaled=bool(header.get("log_scaled", True)),
            center_shifted=bool(header.get("center_shifted", True)),
        ),
    )


class SpectrumTransformer(BaseEstimator, TransformerMixin):
    """Stateless transformer mapping a batch of images to spectrum grids.

    ``transform`` accepts an (n, H, W) or (n, H, W, C) array, or a list of
    per-image arrays with possibly differing sizes, and returns an
    (n, R, R, C) array where R is ``target_resolution``.
    """

    def __init__(self, target_resolution: int = 224):
        self.target_resolution = target_resolution

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        grids = [to_spectrum_image(img, self.target_resolution).grid for img in X]
        return np.stack(grids)
