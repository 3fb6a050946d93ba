"""Deterministic synthetic scenes with ground-truth masks, plus IoU/Dice metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .imagecore import BoxAnnotation, GroundTruthMask, ImageGrid

MAX_PLACEMENT_TRIES = 200


class PlacementError(RuntimeError):
    pass


def _color(v) -> tuple[float, float, float]:
    c = tuple(float(x) for x in v)
    if len(c) == 1:
        c = c * 3
    if len(c) != 3 or any(not 0.0 <= x <= 1.0 for x in c):
        raise ValueError(f"colour must be 1 or 3 values in [0, 1], got {v!r}")
    return c


@dataclass(frozen=True)
class Fill:
    """Flat colour, stripes (period, orientation) or checkerboard (cell) in two colours."""

    kind: str = "flat"
    color: tuple = (0.5, 0.5, 0.5)
    color2: tuple = (0.5, 0.5, 0.5)
    period: int = 4
    orientation: str = "vertical"
    cell: int = 2

    def __post_init__(self):
        if self.kind not in ("flat", "stripe", "checker"):
            raise ValueError(f"unknown fill kind {self.kind!r}")
        if self.orientation not in ("vertical", "horizontal"):
            raise ValueError(f"unknown stripe orientation {self.orientation!r}")
        if self.period < 2 or self.cell < 1:
            raise ValueError("stripe period must be >= 2 and checker cell >= 1")
        object.__setattr__(self, "color", _color(self.color))
        object.__setattr__(self, "color2", _color(self.color2))

    def render(self, height: int, width: int) -> np.ndarray:
        """Paint the fill over a whole (height, width, 3) canvas."""
        ys, xs = np.mgrid[0:height, 0:width]
        if self.kind == "flat":
            second = np.zeros((height, width), dtype=bool)
        elif self.kind == "stripe":
            coord = xs if self.orientation == "vertical" else ys
            second = (coord % self.period) >= self.period // 2
        else:
            second = ((xs // self.cell) + (ys // self.cell)) % 2 == 1
        return np.where(second[:, :, None], np.array(self.color2), np.array(self.color))

    @property
    def mean_color(self) -> np.ndarray:
        if self.kind == "flat":
            return np.array(self.color)
        return (np.array(self.color) + np.array(self.color2)) / 2.0

    @classmethod
    def from_dict(cls, d) -> "Fill":
        if isinstance(d, (list, tuple)):
            return cls("flat", d)
        return cls(**d)


@dataclass(frozen=True)
class ShapeSpec:
    """A disk (``size`` = radius) or rectangle (``size`` = (w, h)).

    ``center`` pins the position; otherwise the generator draws it from the seed.
    """

    geometry: str
    size: tuple | float
    fill: Fill = field(default_factory=Fill)
    center: tuple | None = None

    def __post_init__(self):
        if self.geometry not in ("disk", "rectangle"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.geometry == "disk":
            if not float(self.size) > 0:
                raise ValueError("disk radius must be positive")
        else:
            w, h = self.size
            if int(w) < 1 or int(h) < 1:
                raise ValueError("rectangle sides must be >= 1")
            object.__setattr__(self, "size", (int(w), int(h)))
        if not isinstance(self.fill, Fill):
            object.__setattr__(self, "fill", Fill.from_dict(self.fill))

    def extent(self) -> tuple[float, float]:
        """Half-width and half-height used for placement bounds."""
        if self.geometry == "disk":
            return float(self.size), float(self.size)
        return self.size[0] / 2.0, self.size[1] / 2.0

    def raster(self, height: int, width: int, cx: float, cy: float) -> np.ndarray:
        # pixel centres at integer coordinates
        ys, xs = np.mgrid[0:height, 0:width]
        if self.geometry == "disk":
            return (xs - cx) ** 2 + (ys - cy) ** 2 <= float(self.size) ** 2
        w, h = self.size
        x0 = int(round(cx - w / 2.0))
        y0 = int(round(cy - h / 2.0))
        return (xs >= x0) & (xs < x0 + w) & (ys >= y0) & (ys < y0 + h)


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    shapes: tuple = ()
    background: Fill = field(default_factory=Fill)
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("scene must have positive size")
        shapes = tuple(s if isinstance(s, ShapeSpec) else ShapeSpec(**s) for s in self.shapes)
        object.__setattr__(self, "shapes", shapes)
        if not isinstance(self.background, Fill):
            object.__setattr__(self, "background", Fill.from_dict(self.background))

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["shapes"] = tuple(
            ShapeSpec(s["geometry"], s["size"], Fill.from_dict(s.get("fill", {})),
                      tuple(s["center"]) if s.get("center") is not None else None)
            for s in d.get("shapes", ()))
        if "background" in d:
            d["background"] = Fill.from_dict(d["background"])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SceneSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class EvalReport:
    iou: float
    dice: float


def generate_scene(spec: SceneSpec) -> tuple[ImageGrid, list[tuple[GroundTruthMask, BoxAnnotation]]]:
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    canvas = spec.background.render(h, w)
    occupied = np.zeros((h, w), dtype=bool)
    instances = []
    for shape in spec.shapes:
        mask = None
        tries = 1 if shape.center is not None else MAX_PLACEMENT_TRIES
        for _ in range(tries):
            if shape.center is not None:
                cx, cy = shape.center
            else:
                ex, ey = shape.extent()
                lo_x, hi_x = ex, w - 1 - ex
                lo_y, hi_y = ey, h - 1 - ey
                if lo_x > hi_x or lo_y > hi_y:
                    break
                cx = float(rng.uniform(lo_x, hi_x))
                cy = float(rng.uniform(lo_y, hi_y))
            candidate = shape.raster(h, w, cx, cy)
            if not candidate.any() or _touches_border(candidate, shape, cx, cy, w, h):
                continue
            if (candidate & occupied).any():
                continue
            mask = candidate
            break
        if mask is None:
            raise PlacementError(f"could not place {shape.geometry} without overlap")
        occupied |= mask
        canvas = np.where(mask[:, :, None], shape.fill.render(h, w), canvas)
        gt = GroundTruthMask(mask)
        instances.append((gt, gt.tight_box()))
    return ImageGrid(canvas), instances


def _touches_border(mask, shape, cx, cy, w, h) -> bool:
    # a shape clipped by the frame would not lie fully inside the image
    ex, ey = shape.extent()
    return cx - ex < 0 or cy - ey < 0 or cx + ex > w - 1 or cy + ey > h - 1


def iou(pred, gt) -> float:
    p = _as_bool(pred)
    g = _as_bool(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def dice_coefficient(pred, gt) -> float:
    p = _as_bool(pred)
    g = _as_bool(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    total = p.sum() + g.sum()
    if total == 0:
        return 1.0
    return float(2.0 * np.logical_and(p, g).sum() / total)


def evaluate(pred, gt) -> EvalReport:
    return EvalReport(iou(pred, gt), dice_coefficient(pred, gt))


def _as_bool(m) -> np.ndarray:
    if isinstance(m, GroundTruthMask):
        return m.data
    arr = np.asarray(m)
    return arr.astype(bool) if arr.dtype != bool else arr


def gray_for_lightness(lightness: float) -> float:
    """sRGB gray level whose CIELAB L* equals ``lightness`` (inverse of the D65 L* curve)."""
    if not 0.0 <= lightness <= 100.0:
        raise ValueError("lightness must be in [0, 100]")
    fy = (lightness + 16.0) / 116.0
    delta = 6.0 / 29.0
    y = fy ** 3 if fy > delta else 3.0 * delta ** 2 * (fy - 4.0 / 29.0)
    v = 12.92 * y if y <= 0.0031308 else 1.055 * y ** (1.0 / 2.4) - 0.055
    return float(min(max(v, 0.0), 1.0))


def high_contrast_scene(seed: int, size: int = 64) -> SceneSpec:
    """One flat-colour disk or rectangle on a contrasting flat background."""
    rng = np.random.default_rng(seed)
    light = tuple(rng.uniform(0.6, 1.0, 3))
    dark = tuple(rng.uniform(0.0, 0.35, 3))
    fg, bg = (light, dark) if rng.random() < 0.5 else (dark, light)
    if rng.random() < 0.5:
        shape = ShapeSpec("disk", float(rng.uniform(0.16, 0.31) * size), Fill("flat", fg))
    else:
        w, h = rng.integers(size // 4, (5 * size) // 8, size=2)
        shape = ShapeSpec("rectangle", (int(w), int(h)), Fill("flat", fg))
    return SceneSpec(size, size, (shape,), Fill("flat", bg), seed)


def texture_challenge_scene(seed: int, size: int = 64) -> SceneSpec:
    """Stripe-textured disk on a flat background of the same mean lightness.

    The stripe colours sit symmetrically about the background in L*, so the
    object only differs from the background by texture.  Stripe contrast,
    period and orientation are drawn from the seed.
    """
    rng = np.random.default_rng(seed)
    mid = float(rng.uniform(35.0, 65.0))
    contrast = float(rng.uniform(4.0, 16.0))
    c1 = gray_for_lightness(mid + contrast / 2.0)
    c2 = gray_for_lightness(mid - contrast / 2.0)
    bg = gray_for_lightness(mid)
    fill = Fill("stripe", (c1,) * 3, (c2,) * 3, period=int(rng.choice([2, 4, 6])),
                orientation=str(rng.choice(["vertical", "horizontal"])))
    shape = ShapeSpec("disk", float(rng.uniform(0.19, 0.31) * size), fill)
    return SceneSpec(size, size, (shape,), Fill("flat", (bg,) * 3), seed)
