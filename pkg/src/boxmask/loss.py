"""Box-supervised mask loss: projection dice term plus pairwise affinity term.

Gradients are closed form.  Projections are hard per-row/per-column maxima,
so the projection term's subgradient lands only on each row/column argmax
(first index on ties, which is what ``np.argmax`` returns).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .affinity import EdgeSet
from .imagecore import BoxAnnotation

DICE_EPS = 1e-6
LOG_FLOOR = 1e-12


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    # split by sign so neither branch overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True, eq=False)
class MaskState:
    """Per-pixel logits of shape (height, width); probabilities derived on demand."""

    logits: np.ndarray

    def __post_init__(self):
        arr = np.array(self.logits, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("logits must be 2-D")
        arr.setflags(write=False)
        object.__setattr__(self, "logits", arr)
        probs = sigmoid(arr)
        probs.setflags(write=False)
        object.__setattr__(self, "_probs", probs)

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def height(self) -> int:
        return self.logits.shape[0]

    @property
    def width(self) -> int:
        return self.logits.shape[1]

    @classmethod
    def from_probs(cls, probs) -> "MaskState":
        p = np.asarray(probs, dtype=np.float64)
        if np.any(p <= 0) or np.any(p >= 1):
            raise ValueError("probabilities must lie strictly inside (0, 1)")
        return cls(np.log(p) - np.log1p(-p))


@dataclass(frozen=True, eq=False)
class ProjectionTargets:
    l_x: np.ndarray
    l_y: np.ndarray

    @classmethod
    def from_box(cls, box: BoxAnnotation, width: int, height: int) -> "ProjectionTargets":
        box.check_inside(width, height)
        cols = np.arange(width)
        rows = np.arange(height)
        return cls(((cols >= box.x_min) & (cols < box.x_max)).astype(np.float64),
                   ((rows >= box.y_min) & (rows < box.y_max)).astype(np.float64))


@dataclass(frozen=True)
class LossReport:
    l_proj: float
    l_pair: float
    l_mask: float
    n_edges: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _axis_index(axis: str) -> int:
    # column projection (x) reduces over rows
    if axis == "x":
        return 0
    if axis == "y":
        return 1
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def project(mask: MaskState, axis: str) -> np.ndarray:
    return mask.probs.max(axis=_axis_index(axis))


def project_argmax(mask: MaskState, axis: str) -> np.ndarray:
    return mask.probs.argmax(axis=_axis_index(axis))


def dice_loss(p, q, eps: float = DICE_EPS) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(1.0 - 2.0 * np.dot(p, q) / (np.dot(p, p) + np.dot(q, q) + eps))


def dice_loss_grad(p, q, eps: float = DICE_EPS) -> np.ndarray:
    """d dice_loss / d p."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    inter = np.dot(p, q)
    denom = np.dot(p, p) + np.dot(q, q) + eps
    return -2.0 * q / denom + 4.0 * inter * p / denom ** 2


def projection_loss(mask: MaskState, box: BoxAnnotation) -> float:
    t = ProjectionTargets.from_box(box, mask.width, mask.height)
    return dice_loss(project(mask, "x"), t.l_x) + dice_loss(project(mask, "y"), t.l_y)


def pair_prob(m_a, m_b):
    """Probability that both endpoints share a label."""
    return m_a * m_b + (1.0 - m_a) * (1.0 - m_b)


def _check_edges(mask: MaskState, edges: EdgeSet):
    if (edges.width, edges.height) != (mask.width, mask.height):
        raise ValueError(f"edges are {edges.width}x{edges.height}, mask is {mask.width}x{mask.height}")


def pairwise_loss(mask: MaskState, edges: EdgeSet) -> tuple[float, int]:
    _check_edges(mask, edges)
    active = edges.active
    n = int(active.sum())
    if n == 0:
        return 0.0, 0
    m = mask.probs.ravel()
    p = pair_prob(m[edges.a[active]], m[edges.b[active]])
    return float(-np.log(np.maximum(p, LOG_FLOOR)).sum() / n), n


def mask_loss(mask: MaskState, box: BoxAnnotation, edges: EdgeSet) -> LossReport:
    l_proj = projection_loss(mask, box)
    l_pair, n = pairwise_loss(mask, edges)
    return LossReport(l_proj, l_pair, l_proj + l_pair, n)


def projection_grad_probs(mask: MaskState, box: BoxAnnotation) -> np.ndarray:
    """d L_proj / d probs; nonzero only at the row/column argmax pixels."""
    t = ProjectionTargets.from_box(box, mask.width, mask.height)
    grad = np.zeros_like(mask.probs)
    cols = np.arange(mask.width)
    rows = np.arange(mask.height)
    gx = dice_loss_grad(project(mask, "x"), t.l_x)
    np.add.at(grad, (project_argmax(mask, "x"), cols), gx)
    gy = dice_loss_grad(project(mask, "y"), t.l_y)
    np.add.at(grad, (rows, project_argmax(mask, "y")), gy)
    return grad


def pairwise_grad_probs(mask: MaskState, edges: EdgeSet) -> np.ndarray:
    """d L_pair / d probs, accumulated over edges in a fixed order."""
    _check_edges(mask, edges)
    size = mask.width * mask.height
    active = edges.active
    n = int(active.sum())
    if n == 0:
        return np.zeros_like(mask.probs)
    m = mask.probs.ravel()
    a = edges.a[active]
    b = edges.b[active]
    ma, mb = m[a], m[b]
    p = pair_prob(ma, mb)
    # clamped edges are flat in p
    coef = np.where(p > LOG_FLOOR, -1.0 / (n * np.maximum(p, LOG_FLOOR)), 0.0)
    grad = (np.bincount(a, coef * (2.0 * mb - 1.0), minlength=size)
            + np.bincount(b, coef * (2.0 * ma - 1.0), minlength=size))
    return grad.reshape(mask.height, mask.width)


def mask_loss_gradient(mask: MaskState, box: BoxAnnotation, edges: EdgeSet) -> np.ndarray:
    """d L_mask / d logits as a (height, width) array."""
    g = projection_grad_probs(mask, box) + pairwise_grad_probs(mask, edges)
    m = mask.probs
    return g * m * (1.0 - m)


def finite_difference_gradient(fn, logits: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function of the logit grid."""
    base = np.array(logits, dtype=np.float64)
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        orig = base[idx]
        base[idx] = orig + h
        up = fn(base)
        base[idx] = orig - h
        down = fn(base)
        base[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max |a - n| / max(|a|, |n|) over entries where either exceeds ``floor``."""
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    keep = scale > floor
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(analytic - numeric)[keep] / scale[keep]))
