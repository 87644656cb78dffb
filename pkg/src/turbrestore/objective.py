"""Composite reconstruction objective over multi-output result sets.

The perceptual and identity slots accept any feature extractor; the
bundled ones (identity pixels, fixed seeded random projections) are
deterministic stand-ins for pretrained networks, so tests validate the
composition algebra rather than perceptual semantics.  Feature-space
norms are mean absolute differences (L1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contextual import ContextualConfig, spcx
from .hpc import PseudoResultSet
from .imageio import make_rng, validate_image


@dataclass(frozen=True)
class LossWeights:
    adv: float = 1.0
    per: float = 0.1
    id: float = 10.0

    def __post_init__(self):
        if min(self.adv, self.per, self.id) < 0:
            raise ValueError("loss weights must be nonnegative")


class IdentityExtractor:
    """Features are the pixels themselves."""

    def extract(self, img: np.ndarray):
        return [validate_image(img)]


class RandomProjectionExtractor:
    """Fixed seeded Gaussian projections of the image at two scales."""

    def __init__(self, shape, seed: int = 0, dim: int = 64):
        h, w, c = shape
        if h % 2 or w % 2:
            raise ValueError("image dims must be even for the half-scale features")
        self.shape = (h, w, c)
        rng = make_rng(seed, stream=3)
        n_full = h * w * c
        n_half = (h // 2) * (w // 2) * c
        self.p_full = rng.normal(0.0, 1.0 / np.sqrt(n_full), size=(dim, n_full))
        self.p_half = rng.normal(0.0, 1.0 / np.sqrt(n_half), size=(dim, n_half))

    def extract(self, img: np.ndarray):
        arr = validate_image(img)
        if arr.shape != self.shape:
            raise ValueError(f"expected image shape {self.shape}, got {arr.shape}")
        h, w, c = arr.shape
        half = arr.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))
        return [self.p_full @ arr.ravel(), self.p_half @ half.ravel()]


class DiscriminatorStub:
    """Frozen seeded linear scorer: image -> scalar logit."""

    def __init__(self, shape, seed: int = 0):
        h, w, c = shape
        self.shape = (h, w, c)
        rng = make_rng(seed, stream=4)
        self.w = rng.normal(0.0, 1.0 / np.sqrt(h * w * c), size=h * w * c)
        self.b = rng.normal(0.0, 0.1)

    def score(self, img: np.ndarray) -> float:
        arr = validate_image(img)
        if arr.shape != self.shape:
            raise ValueError(f"expected image shape {self.shape}, got {arr.shape}")
        return float(self.w @ arr.ravel() + self.b)


def softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


def l2_loss(pred: np.ndarray, targets) -> float:
    """Mean over targets of the per-pixel mean squared error."""
    pred = validate_image(pred, "pred")
    targets = [targets] if isinstance(targets, np.ndarray) else list(targets)
    if not targets:
        raise ValueError("need at least one target")
    vals = []
    for t in targets:
        t = validate_image(t, "target")
        if t.shape != pred.shape:
            raise ValueError(f"shape mismatch: {pred.shape} vs {t.shape}")
        vals.append(float(np.mean((pred - t) ** 2)))
    return math.fsum(vals) / len(vals)


def feature_l1(feats_a, feats_b) -> float:
    """Mean over maps of the mean absolute feature difference."""
    if len(feats_a) != len(feats_b):
        raise ValueError("feature map counts differ")
    vals = [float(np.mean(np.abs(np.asarray(a) - np.asarray(b))))
            for a, b in zip(feats_a, feats_b)]
    return math.fsum(vals) / len(vals)


def spcx_multi_loss(pred_set: PseudoResultSet, target: np.ndarray,
                    cfg: ContextualConfig) -> float:
    """Mean sub-image contextual distance over all outputs in the set."""
    vals = [spcx(target, out, cfg) for out in pred_set.outputs]
    return math.fsum(vals) / len(vals)


def l_rec(pred_set: PseudoResultSet, target: np.ndarray, cfg: ContextualConfig,
          weights: LossWeights, phi, eta, disc: DiscriminatorStub):
    """Composite loss and its per-term breakdown.

    total = spcx - w_adv * adv + w_per * per + w_id * id, where each
    term is the mean over the set's outputs.  The adversarial term is a
    generator gain, hence its negative sign.
    """
    target = validate_image(target, "target")
    outputs = pred_set.outputs
    if not outputs:
        raise ValueError("empty pseudo-result set")
    n = len(outputs)
    ft = phi.extract(target)
    et = eta.extract(target)
    spcx_terms, adv_terms, per_terms, id_terms = [], [], [], []
    for out in outputs:
        spcx_terms.append(spcx(target, out, cfg))
        adv_terms.append(softplus(disc.score(out)))
        per_terms.append(feature_l1(ft, phi.extract(out)))
        id_terms.append(feature_l1(et, eta.extract(out)))
    breakdown = {
        "spcx": math.fsum(spcx_terms) / n,
        "adv": math.fsum(adv_terms) / n,
        "per": math.fsum(per_terms) / n,
        "id": math.fsum(id_terms) / n,
    }
    total = (breakdown["spcx"]
             - weights.adv * breakdown["adv"]
             + weights.per * breakdown["per"]
             + weights.id * breakdown["id"])
    breakdown["total"] = total
    return total, breakdown
