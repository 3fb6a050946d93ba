"""Pixel-pair graph over a dilated K x K neighbourhood, with per-edge similarities."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .features import FeatureImage
from .imagecore import BoxAnnotation, ImageGrid

DEFAULT_K = 3
DEFAULT_DILATION = 2
DEFAULT_TAU = 0.2
DEFAULT_THETA = (0.9, 0.1)

HEATMAP_MODES = ("lab", "lbp", "fused")


@dataclass(frozen=True)
class Edge:
    """One undirected edge; endpoints are (x, y) pixel coordinates."""

    endpoint_a: tuple[int, int]
    endpoint_b: tuple[int, int]
    s_lab: float
    s_lbp: float
    s_fused: float
    confident: bool
    in_box: bool


@dataclass(frozen=True)
class EdgeSet:
    """Undirected edges stored as parallel arrays over flat pixel indices.

    ``a`` and ``b`` hold row-major indices ``y * width + x`` with ``a < b``.
    The similarity/flag arrays are ``None`` until :func:`annotate_edges` runs.
    """

    width: int
    height: int
    neighborhood_k: int
    dilation: int
    a: np.ndarray
    b: np.ndarray
    tau: float | None = None
    s_lab: np.ndarray | None = None
    s_lbp: np.ndarray | None = None
    s_fused: np.ndarray | None = None
    confident: np.ndarray | None = None
    in_box: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.a)

    @property
    def annotated(self) -> bool:
        return self.s_fused is not None

    @property
    def active(self) -> np.ndarray:
        """Edges that enter the pairwise loss: confident and touching the box."""
        self._require_annotation()
        return self.confident & self.in_box

    def _require_annotation(self):
        if not self.annotated:
            raise ValueError("edge set has not been annotated")

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        ay, ax = np.divmod(self.a, self.width)
        by, bx = np.divmod(self.b, self.width)
        return ax, ay, bx, by

    def degree(self) -> np.ndarray:
        n = self.width * self.height
        return (np.bincount(self.a, minlength=n) + np.bincount(self.b, minlength=n)).reshape(
            self.height, self.width)

    def edge(self, i: int) -> Edge:
        self._require_annotation()
        ax, ay, bx, by = (int(v[i]) for v in self.coords())
        return Edge((ax, ay), (bx, by), float(self.s_lab[i]), float(self.s_lbp[i]),
                    float(self.s_fused[i]), bool(self.confident[i]), bool(self.in_box[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self.edge(i)

    def with_tau(self, tau: float) -> "EdgeSet":
        """Re-threshold an annotated set without recomputing similarities."""
        self._require_annotation()
        _check_tau(tau)
        return replace(self, tau=tau, confident=self.s_fused >= tau)


def _check_tau(tau):
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")


def neighbor_offsets(k: int, dilation: int) -> list[tuple[int, int]]:
    """Offsets (dx, dy) of the K*K-1 dilated neighbours, excluding the centre."""
    if isinstance(k, bool) or int(k) != k or k < 3 or k % 2 == 0:
        raise ValueError(f"neighbourhood size must be an odd integer >= 3, got {k}")
    if isinstance(dilation, bool) or int(dilation) != dilation or dilation < 1:
        raise ValueError(f"dilation must be a positive integer, got {dilation}")
    r = (k - 1) // 2
    steps = range(-r * dilation, r * dilation + 1, dilation)
    return [(dx, dy) for dy in steps for dx in steps if (dx, dy) != (0, 0)]


def build_edges(width: int, height: int, k: int = DEFAULT_K, dilation: int = DEFAULT_DILATION) -> EdgeSet:
    if width < 1 or height < 1:
        raise ValueError("image must have positive size")
    offsets = neighbor_offsets(k, dilation)
    ys, xs = np.mgrid[0:height, 0:width]
    xs = xs.ravel()
    ys = ys.ravel()
    a_parts, b_parts = [], []
    # Keep only the "forward" half of each symmetric offset pair so every
    # unordered pair is produced exactly once, with a < b.
    for dx, dy in offsets:
        if dy < 0 or (dy == 0 and dx < 0):
            continue
        nx, ny = xs + dx, ys + dy
        ok = (nx >= 0) & (nx < width) & (ny < height)
        a_parts.append(ys[ok] * width + xs[ok])
        b_parts.append(ny[ok] * width + nx[ok])
    a = np.concatenate(a_parts)
    b = np.concatenate(b_parts)
    order = np.lexsort((b, a))
    return EdgeSet(width, height, k, dilation, a[order], b[order])


def similarity(c_a, c_b) -> float:
    c_a = np.atleast_1d(np.asarray(c_a, dtype=np.float64))
    c_b = np.atleast_1d(np.asarray(c_b, dtype=np.float64))
    if c_a.shape != c_b.shape:
        raise ValueError(f"feature dimension mismatch: {c_a.shape} vs {c_b.shape}")
    return float(np.exp(-np.linalg.norm(c_a - c_b) / 2.0))


def edge_similarity(features: FeatureImage, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorised exp(-||c_a - c_b|| / 2) over edge endpoint arrays."""
    flat = features.flat()
    return np.exp(-np.linalg.norm(flat[a] - flat[b], axis=1) / 2.0)


def _check_weights(theta1, theta2):
    if theta1 < 0 or theta2 < 0 or abs(theta1 + theta2 - 1.0) > 1e-9:
        raise ValueError(f"fusion weights must be non-negative and sum to 1, got ({theta1}, {theta2})")


def fuse(s_lab, s_lbp, theta1: float = DEFAULT_THETA[0], theta2: float = DEFAULT_THETA[1]):
    _check_weights(theta1, theta2)
    return theta1 * s_lab + theta2 * s_lbp


def annotate_edges(edges: EdgeSet, lab_features: FeatureImage, lbp_features: FeatureImage,
                   theta1: float = DEFAULT_THETA[0], theta2: float = DEFAULT_THETA[1],
                   tau: float = DEFAULT_TAU, box: BoxAnnotation | None = None) -> EdgeSet:
    """Attach Lab, LBP and fused similarities plus confidence and box flags.

    Without a box every edge counts as in-box.
    """
    _check_weights(theta1, theta2)
    _check_tau(tau)
    for name, feat in (("lab", lab_features), ("lbp", lbp_features)):
        if (feat.width, feat.height) != (edges.width, edges.height):
            raise ValueError(f"{name} features are {feat.width}x{feat.height}, "
                             f"edges are {edges.width}x{edges.height}")
    s_lab = edge_similarity(lab_features, edges.a, edges.b)
    s_lbp = edge_similarity(lbp_features, edges.a, edges.b)
    s_fused = fuse(s_lab, s_lbp, theta1, theta2)
    if box is None:
        in_box = np.ones(len(edges), dtype=bool)
    else:
        box.check_inside(edges.width, edges.height)
        ax, ay, bx, by = edges.coords()
        in_box = box.contains(ax, ay) | box.contains(bx, by)
    return replace(edges, tau=tau, s_lab=s_lab, s_lbp=s_lbp, s_fused=s_fused,
                   confident=s_fused >= tau, in_box=in_box)


def similarity_heatmap(edges: EdgeSet, mode: str = "fused") -> ImageGrid:
    """Mean similarity of each pixel's incident edges.

    Pixels without any incident edge (possible with large dilation on small
    images) are set to 1.
    """
    if mode not in HEATMAP_MODES:
        raise ValueError(f"mode must be one of {HEATMAP_MODES}, got {mode!r}")
    if len(edges) == 0:
        raise ValueError("empty edge set")
    edges._require_annotation()
    values = getattr(edges, f"s_{mode}")
    n = edges.width * edges.height
    total = np.bincount(edges.a, values, minlength=n) + np.bincount(edges.b, values, minlength=n)
    count = np.bincount(edges.a, minlength=n) + np.bincount(edges.b, minlength=n)
    mean = np.ones(n)
    np.divide(total, count, out=mean, where=count > 0)
    return ImageGrid(np.clip(mean, 0.0, 1.0).reshape(edges.height, edges.width))


CSV_COLUMNS = ("a_x", "a_y", "b_x", "b_y", "s_lab", "s_lbp", "s_fused", "confident", "in_box")


def write_edges_csv(edges: EdgeSet, path) -> None:
    edges._require_annotation()
    ax, ay, bx, by = edges.coords()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i in range(len(edges)):
            writer.writerow([ax[i], ay[i], bx[i], by[i],
                             repr(float(edges.s_lab[i])), repr(float(edges.s_lbp[i])),
                             repr(float(edges.s_fused[i])),
                             int(edges.confident[i]), int(edges.in_box[i])])
