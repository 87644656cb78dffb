"""Hierarchical multi-output generation via grouped affine modulation.

A small frozen convolutional pyramid stands in for a pretrained
hierarchical generator: the mechanism under test is the branching, not
image quality.  Stage k (coarse to fine, k = 1..g) consumes modulation
group k, which holds 2^k (scale, shift) pairs.  Every branch entering
stage k spawns two children, one per pair assigned to it, so a single
forward pass yields 2^g leaf images.  Shared prefixes are evaluated
once; this is bit-exact against 2^g independent full passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imageio import make_rng


@dataclass(frozen=True)
class ModulationParams:
    """groups[k-1] has shape (2^k, 2, C): per pair, a scale and shift vector."""
    groups: tuple

    @property
    def depth(self) -> int:
        return len(self.groups)

    def validate(self, channels: int) -> None:
        for k, grp in enumerate(self.groups, start=1):
            if grp.shape != (2**k, 2, channels):
                raise ValueError(
                    f"group {k}: expected shape {(2**k, 2, channels)}, got {grp.shape}"
                )


def identity_mods(g: int, channels: int) -> ModulationParams:
    """All (scale, shift) = (1, 0): every leaf reproduces the unmodulated pass."""
    groups = []
    for k in range(1, g + 1):
        grp = np.zeros((2**k, 2, channels))
        grp[:, 0, :] = 1.0
        groups.append(grp)
    return ModulationParams(tuple(groups))


class ToyGenerator:
    """Frozen seeded pyramid: latent -> base feature -> g upsampling stages."""

    def __init__(self, g: int, seed: int = 0, base_size: int = 4,
                 channels: int = 8, latent_dim: int = 16, out_channels: int = 3):
        if g < 1:
            raise ValueError(f"g must be >= 1, got {g}")
        self.g = g
        self.base_size = base_size
        self.channels = channels
        self.latent_dim = latent_dim
        self.out_channels = out_channels
        rng = make_rng(seed, stream=1)
        n_base = base_size * base_size * channels
        self.w_base = rng.normal(0.0, 1.0 / np.sqrt(latent_dim), size=(n_base, latent_dim))
        self.b_base = rng.normal(0.0, 0.1, size=n_base)
        self.stage_w = [
            rng.normal(0.0, 1.0 / np.sqrt(9 * channels), size=(3, 3, channels, channels))
            for _ in range(g)
        ]
        self.stage_b = [rng.normal(0.0, 0.05, size=channels) for _ in range(g)]
        self.w_head = rng.normal(0.0, 1.0 / np.sqrt(channels), size=(channels, out_channels))
        self.b_head = rng.normal(0.0, 0.1, size=out_channels)

    def base_feature(self, latent: np.ndarray) -> np.ndarray:
        latent = np.asarray(latent, dtype=np.float64)
        if latent.shape != (self.latent_dim,):
            raise ValueError(
                f"latent length {latent.shape} does not match {self.latent_dim}"
            )
        feat = np.tanh(self.w_base @ latent + self.b_base)
        return feat.reshape(self.base_size, self.base_size, self.channels)

    def stage(self, k: int, feat: np.ndarray) -> np.ndarray:
        """Upsample x2 (nearest), 3x3 conv with reflect padding, leaky ReLU."""
        up = feat.repeat(2, axis=0).repeat(2, axis=1)
        pad = np.pad(up, ((1, 1), (1, 1), (0, 0)), mode="reflect")
        h, w = up.shape[:2]
        wk = self.stage_w[k - 1]
        out = np.zeros_like(up)
        for dy in range(3):
            for dx in range(3):
                out += pad[dy:dy + h, dx:dx + w] @ wk[dy, dx]
        out += self.stage_b[k - 1]
        return np.where(out >= 0, out, 0.2 * out)

    def to_image(self, feat: np.ndarray) -> np.ndarray:
        logits = feat @ self.w_head + self.b_head
        return 1.0 / (1.0 + np.exp(-logits))


@dataclass(frozen=True)
class PseudoResultSet:
    outputs: tuple       # 2^g images, one per leaf
    mean_image: np.ndarray
    uncertainty: np.ndarray  # per-pixel population variance


def _balanced_sum(arrays):
    arrays = list(arrays)
    while len(arrays) > 1:
        nxt = [arrays[i] + arrays[i + 1] for i in range(0, len(arrays) - 1, 2)]
        if len(arrays) % 2:
            nxt.append(arrays[-1])
        arrays = nxt
    return arrays[0]


def average_and_uncertainty(outputs) -> tuple:
    """Per-pixel mean and population variance over a set of images.

    Sums are reduced pairwise so that 2^k identical outputs yield a
    bit-exact mean and an exactly-zero variance map.
    """
    outputs = list(outputs)
    if not outputs:
        raise ValueError("empty output set")
    n = len(outputs)
    mean = _balanced_sum(outputs) / n
    var = _balanced_sum([(o - mean) ** 2 for o in outputs]) / n
    return mean, var


def make_result_set(outputs) -> PseudoResultSet:
    mean, var = average_and_uncertainty(outputs)
    return PseudoResultSet(tuple(outputs), mean, var)


def encode_mods(m: np.ndarray, g: int, channels: int, seed: int = 0) -> ModulationParams:
    """Fixed seeded linear head mapping a feature vector to all (scale, shift) pairs.

    Scales pass through 1 + tanh(.)/2 so they stay positive and near 1;
    m = 0 therefore yields the identity modulation (scale 1, shift 0).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 1:
        raise ValueError("modulation feature must be a vector")
    n_pairs = sum(2**k for k in range(1, g + 1))
    rng = make_rng(seed, stream=2)
    w = rng.normal(0.0, 0.1 / np.sqrt(m.size), size=(n_pairs * 2 * channels, m.size))
    raw = (w @ m).reshape(n_pairs, 2, channels)
    groups = []
    offset = 0
    for k in range(1, g + 1):
        grp = raw[offset:offset + 2**k].copy()
        grp[:, 0, :] = 1.0 + np.tanh(grp[:, 0, :]) / 2.0
        groups.append(grp)
        offset += 2**k
    return ModulationParams(tuple(groups))


def hpc_forward(gen: ToyGenerator, latent: np.ndarray,
                mods: ModulationParams) -> PseudoResultSet:
    """One shared-prefix forward pass producing 2^g leaf images.

    Branch b entering stage k uses pairs 2b and 2b+1 of group k, so the
    leaf with index i takes pair i >> (g - k) at stage k.
    """
    if mods.depth != gen.g:
        raise ValueError(f"modulation depth {mods.depth} does not match g={gen.g}")
    mods.validate(gen.channels)
    branches = [gen.base_feature(latent)]
    for k in range(1, gen.g + 1):
        group = mods.groups[k - 1]
        nxt = []
        for b, feat in enumerate(branches):
            for t in (0, 1):
                scale, shift = group[2 * b + t]
                nxt.append(gen.stage(k, scale * feat + shift))
        branches = nxt
    return make_result_set([gen.to_image(f) for f in branches])


def naive_forward(gen: ToyGenerator, latent: np.ndarray, mods: ModulationParams,
                  leaf: int) -> np.ndarray:
    """Full independent pass for one leaf; oracle for hpc_forward."""
    if mods.depth != gen.g:
        raise ValueError(f"modulation depth {mods.depth} does not match g={gen.g}")
    mods.validate(gen.channels)
    if not 0 <= leaf < 2**gen.g:
        raise ValueError(f"leaf {leaf} out of range for g={gen.g}")
    feat = gen.base_feature(latent)
    for k in range(1, gen.g + 1):
        scale, shift = mods.groups[k - 1][leaf >> (gen.g - k)]
        feat = gen.stage(k, scale * feat + shift)
    return gen.to_image(feat)
