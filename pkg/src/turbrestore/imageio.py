"""Image tensors, PNG I/O, and seeded randomness.

Images are float64 numpy arrays of shape (H, W, C) with C in {1, 3},
values in [0, 1] after any I/O round-trip. Intermediate math may leave
the range; clamping is always explicit.

Randomness uses numpy's Philox counter-based generator. Philox is
portable (bit-identical sequences across platforms for a given key)
and splittable: child streams are derived from (seed, stream) keys.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check shape/dtype/finiteness of an (H, W, C) image array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(
            f"{name}: expected (H, W, C) with C in {{1, 3}}, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    return arr


def load_png(path) -> np.ndarray:
    """Load an 8-bit grayscale or RGB PNG as float64 in [0, 1]."""
    try:
        im = Image.open(path)
    except FileNotFoundError:
        raise FileNotFoundError(f"no such image file: {path}")
    if im.format != "PNG":
        raise ValueError(f"{path}: not a PNG file (format={im.format})")
    if im.mode not in ("L", "RGB"):
        # Reject palette / alpha / 16-bit rather than silently converting.
        raise ValueError(
            f"{path}: unsupported PNG mode {im.mode!r}; only 8-bit L or RGB"
        )
    arr = np.asarray(im, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def save_png(img: np.ndarray, path) -> None:
    """Save an image as 8-bit PNG; values are clamped then rounded to v*255."""
    arr = validate_image(img)
    bytes_ = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    if bytes_.shape[2] == 1:
        im = Image.fromarray(bytes_[:, :, 0], mode="L")
    else:
        im = Image.fromarray(bytes_, mode="RGB")
    im.save(path, format="PNG")


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, stream); same key -> same sequence."""
    key = (int(seed) & (2**64 - 1)) | (int(stream) & (2**64 - 1)) << 64
    return np.random.Generator(np.random.Philox(key=key))


def rng_uniform(rng: np.random.Generator, lo: float, hi: float, n: int) -> np.ndarray:
    """Draw n uniform values in [lo, hi), advancing the generator state."""
    if not lo < hi:
        raise ValueError(f"rng_uniform: need lo < hi, got lo={lo}, hi={hi}")
    return rng.uniform(lo, hi, size=int(n))
