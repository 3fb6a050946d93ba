"""Per-pixel feature extraction: CIELAB colour and riu2 local binary patterns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import ImageGrid

# D65 reference white, Y normalised to 1
D65_WHITE = np.array([0.95047, 1.0, 1.08883])

# linear sRGB -> XYZ (D65)
SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])

_DELTA = 6.0 / 29.0

LAB_SCALE = np.array([100.0, 110.0, 110.0])

# LBP neighbour offsets (dy, dx), walked clockwise from the top-left so that
# consecutive entries are circular neighbours.
LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))
LBP_NON_UNIFORM = 9


@dataclass(frozen=True)
class LabImage:
    """CIELAB values stored as a (height, width, 3) array of (L*, a*, b*)."""

    data: np.ndarray

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LbpImage:
    """riu2 codes in 0..9, stored as an integer (height, width) array."""

    codes: np.ndarray

    @property
    def height(self) -> int:
        return self.codes.shape[0]

    @property
    def width(self) -> int:
        return self.codes.shape[1]

    def histogram(self, interior: bool = True) -> np.ndarray:
        codes = self.codes[1:-1, 1:-1] if interior else self.codes
        return np.bincount(codes.ravel(), minlength=LBP_NON_UNIFORM + 1)


@dataclass(frozen=True)
class FeatureImage:
    """Per-pixel feature vectors, stored as a (height, width, d) float array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"feature image must be (H, W, d), got {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    def flat(self) -> np.ndarray:
        """(height*width, d) view in row-major pixel order."""
        return self.data.reshape(-1, self.dim)


def _srgb_linearize(v: np.ndarray) -> np.ndarray:
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA ** 3, np.cbrt(t), t / (3.0 * _DELTA ** 2) + 4.0 / 29.0)


def srgb_to_lab(grid: ImageGrid) -> LabImage:
    if grid.channels != 3:
        raise ValueError(f"srgb_to_lab needs a 3-channel image, got {grid.channels}")
    linear = _srgb_linearize(grid.data)
    xyz = linear @ SRGB_TO_XYZ.T
    fx, fy, fz = np.moveaxis(_lab_f(xyz / D65_WHITE), -1, 0)
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)
    return LabImage(lab)


def normalize_lab(lab: LabImage) -> FeatureImage:
    return FeatureImage(lab.data / LAB_SCALE)


def lab_features(lab: LabImage, scale: float | None = None) -> FeatureImage:
    """Lab colour features for similarity.

    ``scale=None`` gives the per-channel normalisation of :func:`normalize_lab`;
    a number divides all three raw channels by that one value (``1.0`` keeps
    raw CIELAB units).
    """
    if scale is None:
        return normalize_lab(lab)
    if scale <= 0:
        raise ValueError("lab scale must be positive")
    return FeatureImage(lab.data / float(scale))


def _riu2_table() -> np.ndarray:
    table = np.empty(256, dtype=np.int64)
    for pattern in range(256):
        bits = [(pattern >> i) & 1 for i in range(8)]
        transitions = sum(bits[i] != bits[(i + 1) % 8] for i in range(8))
        table[pattern] = sum(bits) if transitions <= 2 else LBP_NON_UNIFORM
    return table


RIU2_TABLE = _riu2_table()


def compute_lbp(gray: ImageGrid) -> LbpImage:
    """Rotation-invariant uniform LBP (P=8, R=1) with replicate-padded borders.

    A neighbour contributes a 1 bit when it is >= the centre value.
    """
    if gray.channels != 1:
        raise ValueError(f"compute_lbp needs a 1-channel image, got {gray.channels}")
    if gray.width < 3 or gray.height < 3:
        raise ValueError("LBP needs an image of at least 3x3 pixels")
    g = gray.plane(0)
    h, w = g.shape
    padded = np.pad(g, 1, mode="edge")
    pattern = np.zeros((h, w), dtype=np.int64)
    for bit, (dy, dx) in enumerate(LBP_OFFSETS):
        neighbour = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        pattern |= (neighbour >= g).astype(np.int64) << bit
    return LbpImage(RIU2_TABLE[pattern])


def lbp_feature(lbp: LbpImage) -> FeatureImage:
    return FeatureImage(lbp.codes.astype(np.float64) / LBP_NON_UNIFORM)
