"""Turbulence-style degradation: elastic deformation, Gaussian blur, noise.

The observation pipeline is deform(blur(I)) + noise, clamped to [0, 1].
An order flag swaps deform and blur.  Everything is deterministic for a
given seed; zero parameters give the identity bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .imageio import make_rng, validate_image

ORDER_BLUR_WARP = "blur-warp"
ORDER_WARP_BLUR = "warp-blur"


@dataclass(frozen=True)
class DegradationConfig:
    elastic_alpha: float = 0.0  # displacement magnitude, pixels
    elastic_sigma: float = 1.0  # smoothing std of the displacement field
    blur_sigma: float = 0.0     # PSF std, pixels
    noise_std: float = 0.0      # additive Gaussian noise std, intensity units
    seed: int = 0
    order: str = ORDER_BLUR_WARP

    def __post_init__(self):
        for name in ("elastic_alpha", "elastic_sigma", "blur_sigma", "noise_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.elastic_alpha > 0 and self.elastic_sigma <= 0:
            raise ValueError("elastic_sigma must be > 0 when elastic_alpha > 0")
        if self.order not in (ORDER_BLUR_WARP, ORDER_WARP_BLUR):
            raise ValueError(f"unknown order {self.order!r}")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian truncated at +-ceil(3*sigma), renormalized to sum 1."""
    if sigma <= 0:
        return np.array([1.0])
    radius = math.ceil(3.0 * sigma)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _smooth2d(plane: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with reflected (symmetric) edges."""
    if sigma <= 0:
        return plane.copy()
    k = gaussian_kernel(sigma)
    out = correlate1d(plane, k, axis=0, mode="reflect")
    return correlate1d(out, k, axis=1, mode="reflect")


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Channel-wise separable Gaussian blur; sigma = 0 is the identity."""
    arr = validate_image(img)
    if sigma <= 0:
        return arr.copy()
    out = np.empty_like(arr)
    for c in range(arr.shape[2]):
        out[:, :, c] = _smooth2d(arr[:, :, c], sigma)
    return out


def make_elastic_field(shape, alpha: float, sigma: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Random displacement field (H, W, 2): [..., 0] = dx, [..., 1] = dy.

    Each component is alpha * gaussian_smooth(uniform(-1, 1), sigma).
    The kernel is a convex combination, so |displacement| <= alpha
    (smoothing gain bound 1).
    """
    h, w = shape
    if alpha == 0:
        return np.zeros((h, w, 2))
    raw = rng.uniform(-1.0, 1.0, size=(h, w, 2))
    field = np.empty((h, w, 2))
    field[:, :, 0] = alpha * _smooth2d(raw[:, :, 0], sigma)
    field[:, :, 1] = alpha * _smooth2d(raw[:, :, 1], sigma)
    return field


def warp(img: np.ndarray, field: np.ndarray) -> np.ndarray:
    """Bilinear resampling at (x + dx, y + dy) with clamp-to-edge.

    A zero field is the identity bit-exactly.
    """
    arr = validate_image(img)
    h, w, _ = arr.shape
    if field.shape != (h, w, 2):
        raise ValueError(f"field shape {field.shape} does not match image {arr.shape}")
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
    sr = np.clip(rows + field[:, :, 1], 0.0, h - 1.0)
    sc = np.clip(cols + field[:, :, 0], 0.0, w - 1.0)
    r0 = np.floor(sr).astype(np.intp)
    c0 = np.floor(sc).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (sr - r0)[:, :, None]
    fc = (sc - c0)[:, :, None]
    return ((1 - fr) * (1 - fc) * arr[r0, c0]
            + (1 - fr) * fc * arr[r0, c1]
            + fr * (1 - fc) * arr[r1, c0]
            + fr * fc * arr[r1, c1])


def degrade(img: np.ndarray, cfg: DegradationConfig) -> np.ndarray:
    """Apply the full observation pipeline and clamp to [0, 1].

    RNG draws happen in a fixed order (field, then noise) regardless of
    the blur/warp order, so the same seed always produces the same
    degradation operators.
    """
    arr = validate_image(img)
    rng = make_rng(cfg.seed)
    field = make_elastic_field(arr.shape[:2], cfg.elastic_alpha, cfg.elastic_sigma, rng)
    if cfg.order == ORDER_BLUR_WARP:
        out = warp(gaussian_blur(arr, cfg.blur_sigma), field)
    else:
        out = gaussian_blur(warp(arr, field), cfg.blur_sigma)
    if cfg.noise_std > 0:
        out = out + rng.normal(0.0, cfg.noise_std, size=out.shape)
    return np.clip(out, 0.0, 1.0)
