"""Finite-difference check of the analytic mask-loss gradient on random instances."""

from __future__ import annotations

import numpy as np

from .imagecore import BoxAnnotation, ImageGrid
from .loss import (MaskState, finite_difference_gradient, mask_loss, mask_loss_gradient,
                   relative_error)
from .optimizer import OptimizerConfig, build_affinity

FD_STEP = 1e-5
TOLERANCE = 1e-4
GRAD_FLOOR = 1e-8


def random_instance(seed: int, size: int = 12):
    """Blocky random image, random box and random logits.

    The image is a few flat colours laid out in 3x3 blocks so that plenty of
    edges are confident and the pairwise term is exercised.
    """
    if size < 4:
        raise ValueError("size must be >= 4")
    rng = np.random.default_rng(seed)
    palette = rng.uniform(0.0, 1.0, size=(3, 3))
    blocks = rng.integers(0, 3, size=(-(-size // 3), -(-size // 3)))
    labels = np.kron(blocks, np.ones((3, 3), dtype=int))[:size, :size]
    image = ImageGrid(palette[labels])
    x0, y0 = rng.integers(0, size // 2, size=2)
    x1 = int(rng.integers(x0 + 2, size + 1))
    y1 = int(rng.integers(y0 + 2, size + 1))
    box = BoxAnnotation(int(x0), int(y0), x1, y1)
    logits = rng.normal(0.0, 2.0, size=(size, size))
    return image, box, MaskState(logits)


def check_instance(image, box, mask, config=None, corrupt: float = 0.0) -> float:
    """Max relative error between analytic and central-difference gradients."""
    config = config or OptimizerConfig()
    edges = build_affinity(image, box, config)
    analytic = mask_loss_gradient(mask, box, edges)
    if corrupt:
        analytic = analytic * (1.0 + corrupt)
    numeric = finite_difference_gradient(
        lambda z: mask_loss(MaskState(z), box, edges).l_mask, mask.logits, FD_STEP)
    return relative_error(analytic, numeric, GRAD_FLOOR)


def run_gradcheck(seed: int = 0, size: int = 12, trials: int = 20, corrupt: float = 0.0) -> list[float]:
    return [check_instance(*random_instance(seed + t, size), corrupt=corrupt) for t in range(trials)]
