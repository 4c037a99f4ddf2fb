"""Cosine similarity over unit vectors, scalar and blocked-pairwise forms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit vectors.

    Accumulates the dot product in float64 regardless of input dtype and
    clamps to [-1, 1] so float noise can never push a score outside the
    valid range.  Inputs are assumed unit-norm; shape mismatch is an error.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"expected equal-length 1-D vectors, got {a.shape} and {b.shape}")
    return float(np.clip(a @ b, -1.0, 1.0))


@dataclass(frozen=True)
class SimilarityBlock:
    """One tile of the (n, m) similarity matrix.

    ``values[i, j]`` is the similarity of row ``row_start + i`` against row
    ``col_start + j`` of the two input matrices.
    """

    row_start: int
    col_start: int
    values: np.ndarray


def pairwise_blocks(
    left: np.ndarray,
    right: np.ndarray | None = None,
    block: int = 1024,
) -> Iterator[SimilarityBlock]:
    """Yield the cosine similarity matrix of two row sets tile by tile.

    ``right=None`` compares ``left`` against itself.  Each tile is an
    at-most ``block`` x ``block`` float64 array computed by one matrix
    product and clamped to [-1, 1]; tiles are yielded row-major so callers
    can stream arbitrarily large comparisons at bounded memory.
    """
    left = np.asarray(left, dtype=np.float64)
    right = left if right is None else np.asarray(right, dtype=np.float64)
    if left.ndim != 2 or right.ndim != 2 or left.shape[1] != right.shape[1]:
        raise ValueError(
            f"expected 2-D matrices with equal width, got {left.shape} and {right.shape}"
        )
    if block < 1:
        raise ValueError("block must be positive")
    for i in range(0, left.shape[0], block):
        lt = left[i : i + block]
        for j in range(0, right.shape[0], block):
            rt = right[j : j + block]
            values = np.clip(lt @ rt.T, -1.0, 1.0)
            yield SimilarityBlock(row_start=i, col_start=j, values=values)


def pairwise_block(
    vectors: np.ndarray,
    i_range: tuple[int, int],
    j_range: tuple[int, int],
) -> SimilarityBlock:
    """One rectangular tile of the self-similarity matrix of ``vectors``.

    ``i_range`` and ``j_range`` are half-open [start, stop) row index ranges;
    out-of-bounds ranges are an error.  Values are independent of any outer
    tiling scheme: each entry is the clamped float64 dot product.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError(f"expected a 2-D matrix of row vectors, got shape {vectors.shape}")
    n = vectors.shape[0]
    for name, (start, stop) in (("i_range", i_range), ("j_range", j_range)):
        if not (0 <= start <= stop <= n):
            raise ValueError(f"{name} {start, stop} out of bounds for {n} vectors")
    values = np.clip(vectors[i_range[0] : i_range[1]] @ vectors[j_range[0] : j_range[1]].T, -1.0, 1.0)
    return SimilarityBlock(row_start=i_range[0], col_start=j_range[0], values=values)


def pairwise(left: np.ndarray, right: np.ndarray | None = None, block: int = 1024) -> np.ndarray:
    """Materialized cosine similarity matrix (assembled from tiles)."""
    left = np.asarray(left, dtype=np.float64)
    r = left if right is None else np.asarray(right, dtype=np.float64)
    out = np.empty((left.shape[0], r.shape[0]), dtype=np.float64)
    for tile in pairwise_blocks(left, right, block=block):
        v = tile.values
        out[tile.row_start : tile.row_start + v.shape[0], tile.col_start : tile.col_start + v.shape[1]] = v
    return out
