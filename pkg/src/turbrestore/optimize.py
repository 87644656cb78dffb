"""Pixel-space restoration by plain gradient descent.

Demonstrates the sub-image contextual distance as a differentiable
objective: descending it tolerates block rearrangements of the target
that pixel-wise L2 cannot.  Backtracking halves the step size whenever
a step would increase the loss, so the recorded trace is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contextual import ContextualConfig, spcx, spcx_grad
from .imageio import validate_image

LOSS_SPCX = "spcx"
LOSS_L2 = "l2"


@dataclass(frozen=True)
class OptimizeConfig:
    loss: str = LOSS_SPCX
    steps: int = 100
    step_size: float = 1.0
    contextual: ContextualConfig = None
    log_every: int = 1

    def __post_init__(self):
        if self.loss not in (LOSS_SPCX, LOSS_L2):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.loss == LOSS_SPCX and self.contextual is None:
            raise ValueError("spcx loss needs a ContextualConfig")


def _l2(x, t):
    return float(np.mean((x - t) ** 2))


def _l2_grad(x, t):
    return 2.0 * (x - t) / x.size


def optimize_image(init: np.ndarray, target: np.ndarray, oc: OptimizeConfig):
    """Gradient descent on pixels, clamped to [0, 1] each step.

    Returns (final image, trace) where trace is a list of
    (step, loss) pairs recorded every log_every steps.
    """
    x = validate_image(init, "init").copy()
    t = validate_image(target, "target")
    if x.shape != t.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {t.shape}")

    if oc.loss == LOSS_L2:
        loss_fn = lambda img: _l2(img, t)
        grad_fn = lambda img: _l2_grad(img, t)
    else:
        loss_fn = lambda img: spcx(img, t, oc.contextual)
        grad_fn = lambda img: spcx_grad(img, t, oc.contextual)

    cur = loss_fn(x)
    if np.isnan(cur):
        raise FloatingPointError("loss is NaN at the initial point")
    trace = [(0, cur)]
    lr = oc.step_size
    for step in range(1, oc.steps + 1):
        g = grad_fn(x)
        accepted = False
        for _ in range(60):
            xn = np.clip(x - lr * g, 0.0, 1.0)
            ln = loss_fn(xn)
            if np.isnan(ln):
                raise FloatingPointError(f"loss diverged to NaN at step {step}")
            if ln <= cur:
                accepted = True
                break
            lr /= 2.0
        if accepted:
            x, cur = xn, ln
        # else: step size underflowed; keep the current iterate
        if step % oc.log_every == 0 or step == oc.steps:
            trace.append((step, cur))
    return x, trace
