"""Sub-image decomposition at rate r, and its exact inverse.

Two readings of the decomposition are supported:

* ``block``: sub-image (i, j) is the contiguous r x r tile at rows
  [i*r, i*r + r), cols [j*r, j*r + r).  This matches the reference
  reshape(H/r, r, W/r, r, C) -> transpose(0, 2, 1, 3, 4) semantics.
* ``phase``: sub-image (s, t), s, t in [0, r), collects the pixels at
  positions (s + a*r, t + b*r) -- the strided pixel-unshuffle reading.

Both are exact partitions: every pixel lands in exactly one sub-image,
and recomposition is a bit-exact inverse.  Sub-images are flattened
row-major with channels innermost.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .imageio import validate_image


class PkMode(str, Enum):
    BLOCK = "block"
    PHASE = "phase"


@dataclass(frozen=True)
class SubImageCollection:
    vectors: np.ndarray  # (count, dim)
    mode: PkMode
    rate: int
    source_shape: tuple  # (H, W, C)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _check_rate(h: int, w: int, rate: int) -> None:
    if rate < 1:
        raise ValueError(f"rate must be >= 1, got {rate}")
    if h % rate != 0 or w % rate != 0:
        raise ValueError(f"rate {rate} does not divide image dims {h}x{w}")


def pk_decompose(img: np.ndarray, rate: int, mode: PkMode = PkMode.BLOCK) -> SubImageCollection:
    """Split an image into non-overlapping sub-image vectors at the given rate."""
    arr = validate_image(img)
    h, w, c = arr.shape
    _check_rate(h, w, rate)
    mode = PkMode(mode)
    if mode is PkMode.BLOCK:
        # (H/r, r, W/r, r, C) -> tiles indexed (i, j), row-major inside.
        vectors = (
            arr.reshape(h // rate, rate, w // rate, rate, c)
            .transpose(0, 2, 1, 3, 4)
            .reshape(h // rate * (w // rate), rate * rate * c)
        )
    else:
        # (s + a*r, t + b*r): sub-image indexed (s, t), positions (a, b) inside.
        vectors = (
            arr.reshape(h // rate, rate, w // rate, rate, c)
            .transpose(1, 3, 0, 2, 4)
            .reshape(rate * rate, (h // rate) * (w // rate) * c)
        )
    return SubImageCollection(np.ascontiguousarray(vectors), mode, rate, (h, w, c))


def pk_recompose(coll: SubImageCollection) -> np.ndarray:
    """Exact inverse of pk_decompose."""
    h, w, c = coll.source_shape
    rate = coll.rate
    _check_rate(h, w, rate)
    if coll.mode is PkMode.BLOCK:
        expect = ((h // rate) * (w // rate), rate * rate * c)
    else:
        expect = (rate * rate, (h // rate) * (w // rate) * c)
    if coll.vectors.shape != expect:
        raise ValueError(
            f"inconsistent collection: vectors {coll.vectors.shape}, expected {expect}"
        )
    if coll.mode is PkMode.BLOCK:
        return np.ascontiguousarray(
            coll.vectors.reshape(h // rate, w // rate, rate, rate, c)
            .transpose(0, 2, 1, 3, 4)
            .reshape(h, w, c)
        )
    return np.ascontiguousarray(
        coll.vectors.reshape(rate, rate, h // rate, w // rate, c)
        .transpose(2, 0, 3, 1, 4)
        .reshape(h, w, c)
    )


def permute_subimages(coll: SubImageCollection, perm) -> SubImageCollection:
    """Reorder sub-image vectors by a permutation of [0, count)."""
    perm = np.asarray(perm, dtype=np.intp)
    if perm.shape != (coll.count,) or not np.array_equal(
        np.sort(perm), np.arange(coll.count)
    ):
        raise ValueError("perm is not a bijection on [0, count)")
    return replace(coll, vectors=coll.vectors[perm])
