"""Small deterministic image helpers used by several modules.

Everything here is plain numpy so that results are identical across
platforms and runs; no interpolation library is pulled in.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

# BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Collapse an (H, W) or (H, W, C) array to a single (H, W) channel.

    Three-channel input is combined with BT.601 luma weights; single-channel
    input passes through.  Other channel counts are rejected.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 1:
        return arr[:, :, 0]
    if arr.ndim == 3 and arr.shape[2] == 3:
        return arr @ _LUMA
    raise ValueError(f"expected (H,W) or (H,W,1|3) image, got shape {arr.shape}")


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (H, W) or (H, W, C) to (out_h, out_w[, C]) by bilinear sampling.

    Uses the half-pixel-center convention: output center i maps to input
    coordinate (i + 0.5) * H / out_h - 0.5, clamped at the borders.  Resizing
    to the identical shape reproduces the input exactly.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    arr = np.asarray(image, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    h, w, _ = arr.shape

    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]

    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bot = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return out[:, :, 0] if squeeze else out


def load_image(path) -> np.ndarray:
    """Load an image file as float64 RGB in [0, 1], shape (H, W, 3)."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        return np.asarray(rgb, dtype=np.float64) / 255.0


def save_png(image: np.ndarray, path) -> None:
    """Write a float [0, 1] (H, W) or (H, W, 3) array as an 8-bit PNG."""
    arr = np.asarray(image, dtype=np.float64)
    u8 = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8).save(path, format="PNG")
