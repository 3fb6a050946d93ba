"""Recover one instance mask from its box by momentum descent on the mask loss."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import affinity
from .affinity import EdgeSet
from .features import compute_lbp, lab_features, lbp_feature, srgb_to_lab
from .imagecore import BoxAnnotation, GroundTruthMask, ImageGrid, grayscale
from .loss import LossReport, MaskState, mask_loss, mask_loss_gradient

OUTSIDE_LOGIT = -6.0

FEATURE_MODES = ("lab", "lbp", "fused")


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    step_size: float = 1.0
    max_iters: int = 500
    momentum: float = 0.9
    stop_delta: float = 1e-6
    theta1: float = affinity.DEFAULT_THETA[0]
    theta2: float = affinity.DEFAULT_THETA[1]
    tau: float = affinity.DEFAULT_TAU
    k: int = affinity.DEFAULT_K
    dilation: int = affinity.DEFAULT_DILATION
    seed: int = 0
    # divisor applied to raw CIELAB before similarity; None -> per-channel normalisation
    lab_scale: float | None = 1.0
    # std of an optional seeded perturbation of the free logits at start. The
    # pairwise gradient is exactly zero at p = 0.5, so pixels no projection
    # argmax reaches stay there without it. Off by default: it costs accuracy.
    init_jitter: float = 0.0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.theta1 < 0 or self.theta2 < 0 or abs(self.theta1 + self.theta2 - 1.0) > 1e-9:
            raise ValueError("theta1 and theta2 must be non-negative and sum to 1")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        if self.init_jitter < 0:
            raise ValueError("init_jitter must be non-negative")
        affinity.neighbor_offsets(self.k, self.dilation)

    @classmethod
    def for_feature(cls, feature: str, **kwargs) -> "OptimizerConfig":
        """Config whose confidence test uses Lab only, LBP only, or the fused similarity."""
        if feature == "lab":
            kwargs.update(theta1=1.0, theta2=0.0)
        elif feature == "lbp":
            kwargs.update(theta1=0.0, theta2=1.0)
        elif feature != "fused":
            raise ValueError(f"feature must be one of {FEATURE_MODES}, got {feature!r}")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    mask: MaskState
    loss_trace: list[LossReport] = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False


def init_logits(box: BoxAnnotation, width: int, height: int) -> MaskState:
    """Logit 0 inside the box, OUTSIDE_LOGIT outside it."""
    inside = box.indicator(width, height)
    return MaskState(np.where(inside, 0.0, OUTSIDE_LOGIT))


def free_pixels(box: BoxAnnotation, width: int, height: int) -> np.ndarray:
    """Pixels the optimizer may update; everything outside the box is frozen."""
    return box.indicator(width, height)


def seeded_start(box: BoxAnnotation, width: int, height: int, config: OptimizerConfig) -> MaskState:
    """init_logits plus the config's seeded jitter on the free pixels."""
    start = init_logits(box, width, height)
    if config.init_jitter == 0:
        return start
    rng = np.random.default_rng(config.seed)
    noise = rng.normal(0.0, config.init_jitter, size=start.logits.shape)
    return MaskState(np.where(free_pixels(box, width, height), start.logits + noise, start.logits))


def pixel_features(image: ImageGrid, lab_scale: float | None = 1.0):
    """Lab and LBP feature images for an RGB or gray input."""
    rgb = image if image.channels == 3 else ImageGrid(np.repeat(image.data, 3, axis=2))
    gray = grayscale(rgb) if image.channels == 3 else image
    return lab_features(srgb_to_lab(rgb), lab_scale), lbp_feature(compute_lbp(gray))


def build_affinity(image: ImageGrid, box: BoxAnnotation, config: OptimizerConfig) -> EdgeSet:
    lab, lbp = pixel_features(image, config.lab_scale)
    edges = affinity.build_edges(image.width, image.height, config.k, config.dilation)
    return affinity.annotate_edges(edges, lab, lbp, config.theta1, config.theta2, config.tau, box)


def descend(state: MaskState, box: BoxAnnotation, edges: EdgeSet, config: OptimizerConfig) -> RecoveryResult:
    """Momentum descent from ``state`` over a fixed, annotated edge set."""
    free = free_pixels(box, state.width, state.height)
    logits = np.array(state.logits)
    velocity = np.zeros_like(logits)
    report = mask_loss(state, box, edges)
    _check_finite(report, 0)
    trace = [report]
    converged = False
    iters = 0
    for iters in range(1, config.max_iters + 1):
        grad = mask_loss_gradient(state, box, edges)
        velocity = config.momentum * velocity + np.where(free, grad, 0.0)
        logits = logits - config.step_size * velocity
        state = MaskState(logits)
        report = mask_loss(state, box, edges)
        _check_finite(report, iters)
        delta = abs(report.l_mask - trace[-1].l_mask)
        trace.append(report)
        if delta < config.stop_delta:
            converged = True
            break
    return RecoveryResult(state, trace, iters, converged)


def _check_finite(report: LossReport, iteration: int):
    if not all(math.isfinite(v) for v in (report.l_proj, report.l_pair, report.l_mask)):
        raise NonFiniteLossError(f"non-finite loss at iteration {iteration}: {report}")


def recover_mask(image: ImageGrid, box: BoxAnnotation, config: OptimizerConfig | None = None) -> RecoveryResult:
    config = config or OptimizerConfig()
    box.check_inside(image.width, image.height)
    edges = build_affinity(image, box, config)
    return descend(seeded_start(box, image.width, image.height, config), box, edges, config)


def threshold_mask(mask: MaskState, t: float = 0.5) -> GroundTruthMask:
    if not 0.0 < t < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    return GroundTruthMask(mask.probs >= t)


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "l_proj", "l_pair", "l_mask"])
        for i, r in enumerate(trace):
            writer.writerow([i, repr(r.l_proj), repr(r.l_pair), repr(r.l_mask)])
