"""Reference-based quality metrics and embedding-based verification.

PSNR assumes a [0, 1] dynamic range and is capped at 100 dB for
identical images.  SSIM uses the canonical 11x11 Gaussian window with
sigma 1.5 and K1 = 0.01, K2 = 0.03, averaged over the valid region and
channels.  Verification metrics (cosine identity similarity, top-k
accuracy) accept embeddings from any feature extractor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .imageio import validate_image

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images."""
    a = validate_image(a, "a")
    b = validate_image(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def _ssim_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    t = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / SSIM_SIGMA) ** 2)
    return k / k.sum()


def _filt(plane: np.ndarray, k: np.ndarray) -> np.ndarray:
    half = len(k) // 2
    out = correlate1d(plane, k, axis=0, mode="reflect")
    out = correlate1d(out, k, axis=1, mode="reflect")
    return out[half:-half, half:-half]  # keep only fully-supported windows


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local structural similarity; symmetric, ssim(x, x) = 1."""
    a = validate_image(a, "a")
    b = validate_image(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    h, w, c = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"image {h}x{w} smaller than the {SSIM_WINDOW}-pixel window")
    k = _ssim_window()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    vals = []
    for ch in range(c):
        x = a[:, :, ch]
        y = b[:, :, ch]
        mx = _filt(x, k)
        my = _filt(y, k)
        sxx = _filt(x * x, k) - mx * mx
        syy = _filt(y * y, k) - my * my
        sxy = _filt(x * y, k) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        vals.append(float(np.mean(num / den)))
    return math.fsum(vals) / c


def deg(e1, e2) -> float:
    """Cosine similarity of two embeddings, as a percentage."""
    e1 = np.asarray(e1, dtype=np.float64).ravel()
    e2 = np.asarray(e2, dtype=np.float64).ravel()
    n1 = np.linalg.norm(e1)
    n2 = np.linalg.norm(e2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("zero embedding vector")
    return 100.0 * float(e1 @ e2) / (n1 * n2)


@dataclass(frozen=True)
class EmbeddingSet:
    labels: tuple
    vectors: np.ndarray  # (n, d)

    def __post_init__(self):
        v = self.vectors
        if v.ndim != 2 or v.shape[0] != len(self.labels):
            raise ValueError("labels and vectors misaligned")
        if np.any(np.linalg.norm(v, axis=1) == 0.0):
            raise ValueError("embedding set contains a zero vector")


def topk_accuracy(probes: EmbeddingSet, gallery: EmbeddingSet, k: int,
                  strict: bool = True) -> float:
    """Percentage of probes whose label is among their k nearest gallery
    entries by cosine similarity.  Ties break toward lower gallery index.

    With strict=True a probe label missing from the gallery is an error;
    otherwise it counts as a miss.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(gallery.labels) == 0:
        raise ValueError("empty gallery")
    gv = gallery.vectors / np.linalg.norm(gallery.vectors, axis=1, keepdims=True)
    pv = probes.vectors / np.linalg.norm(probes.vectors, axis=1, keepdims=True)
    gallery_labels = set(gallery.labels)
    hits = 0
    for label, v in zip(probes.labels, pv):
        if label not in gallery_labels:
            if strict:
                raise ValueError(f"probe label {label!r} absent from gallery")
            continue
        sims = gv @ v
        # stable sort on descending similarity keeps lower indices first at ties
        order = np.argsort(-sims, kind="stable")[:k]
        if any(gallery.labels[i] == label for i in order):
            hits += 1
    return 100.0 * hits / len(probes.labels)
