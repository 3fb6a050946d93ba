"""Raster containers, box annotations and image file I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# BT.709 luma weights
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])


class ImageFormatError(ValueError):
    """Raised for unreadable, unsupported or malformed raster files."""


@dataclass(frozen=True)
class ImageGrid:
    """Row-major raster of unit-interval samples, stored as (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) array, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("zero-dimension image")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image samples must lie in [0, 1]")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def plane(self, c: int = 0) -> np.ndarray:
        return self.data[:, :, c]

    def __eq__(self, other):
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True)
class BoxAnnotation:
    """Half-open integer pixel box: columns [x_min, x_max), rows [y_min, y_max)."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ValueError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if not (0 <= self.x_min < self.x_max and 0 <= self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def check_inside(self, width: int, height: int) -> None:
        if self.x_max > width or self.y_max > height:
            raise ValueError(f"box {self} exceeds image {width}x{height}")

    def contains(self, x, y):
        """Membership test; works elementwise on arrays."""
        return (x >= self.x_min) & (x < self.x_max) & (y >= self.y_min) & (y < self.y_max)

    def indicator(self, width: int, height: int) -> np.ndarray:
        """Boolean (height, width) array that is True inside the box."""
        self.check_inside(width, height)
        out = np.zeros((height, width), dtype=bool)
        out[self.y_min:self.y_max, self.x_min:self.x_max] = True
        return out

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "y_min": self.y_min, "x_max": self.x_max, "y_max": self.y_max}

    @classmethod
    def from_dict(cls, d: dict) -> "BoxAnnotation":
        try:
            return cls(d["x_min"], d["y_min"], d["x_max"], d["y_max"])
        except KeyError as exc:
            raise ValueError(f"box object missing key {exc}") from None


@dataclass(frozen=True)
class GroundTruthMask:
    """Binary per-pixel labels, stored as a boolean (height, width) array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError("mask must be 2-D")
        if arr.dtype != bool:
            if not np.all((arr == 0) | (arr == 1)):
                raise ValueError("mask values must be 0 or 1")
            arr = arr.astype(bool)
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def tight_box(self) -> BoxAnnotation:
        ys, xs = np.nonzero(self.data)
        if len(xs) == 0:
            raise ValueError("empty mask has no bounding box")
        return BoxAnnotation(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)

    def __eq__(self, other):
        if not isinstance(other, GroundTruthMask):
            return NotImplemented
        return bool(np.array_equal(self.data, other.data))

    __hash__ = None


def grayscale(grid: ImageGrid) -> ImageGrid:
    if grid.channels != 3:
        raise ValueError(f"grayscale needs a 3-channel image, got {grid.channels}")
    y = grid.data @ LUMA_WEIGHTS
    # float rounding can push (1,1,1) a hair above 1
    return ImageGrid(np.clip(y, 0.0, 1.0))


# ---------------------------------------------------------------------------
# file I/O


def _read_netpbm(raw: bytes) -> np.ndarray:
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported netpbm magic {magic!r}")
    fields: list[int] = []
    pos = 2
    n = len(raw)
    while len(fields) < 3:
        while pos < n and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos:pos + 1] == b"#":
            while pos < n and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and raw[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated netpbm header")
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace byte before the raster
    width, height, maxval = fields
    if width == 0 or height == 0:
        raise ImageFormatError("zero-dimension image")
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit netpbm supported (maxval {maxval})")
    channels = 3 if magic == b"P6" else 1
    count = width * height * channels
    body = raw[pos:pos + count]
    if len(body) != count:
        raise ImageFormatError("truncated netpbm raster")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)


def load_image(path) -> ImageGrid:
    """Read an 8-bit PNG, PPM (P6) or PGM (P5) file into an ImageGrid."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if raw[:2] in (b"P5", b"P6"):
        arr = _read_netpbm(raw)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            with Image.open(path) as im:
                im.load()
                if im.mode.startswith("I") or im.mode == "F":
                    raise ImageFormatError(f"unsupported PNG mode {im.mode}")
                im = im.convert("L" if im.mode in ("1", "L", "LA") else "RGB")
                arr = np.asarray(im, dtype=np.uint8)
        except ImageFormatError:
            raise
        except Exception as exc:  # Pillow raises a zoo of types on corrupt data
            raise ImageFormatError(f"cannot decode {path}: {exc}") from exc
        if arr.ndim == 2:
            arr = arr[:, :, None]
    else:
        raise ImageFormatError(f"unsupported image format: {path}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ImageFormatError("zero-dimension image")
    return ImageGrid(arr.astype(np.float64) / 255.0)


def to_bytes(grid: ImageGrid) -> np.ndarray:
    return np.rint(grid.data * 255.0).astype(np.uint8)


def save_image(grid: ImageGrid, path) -> None:
    """Write an ImageGrid; format chosen by suffix (.png, .ppm, .pgm).

    Netpbm type follows the channel count, so a 1-channel grid is always
    written as P5 and a 3-channel grid as P6 regardless of the suffix.
    """
    path = Path(path)
    samples = to_bytes(grid)
    suffix = path.suffix.lower()
    try:
        if suffix == ".png":
            im = Image.fromarray(samples[:, :, 0] if grid.channels == 1 else samples,
                                 mode="L" if grid.channels == 1 else "RGB")
            # fixed compression keeps output bytes reproducible
            im.save(path, format="PNG", compress_level=6)
        elif suffix in (".ppm", ".pgm", ".pnm"):
            magic = b"P6" if grid.channels == 3 else b"P5"
            header = b"%s\n%d %d\n255\n" % (magic, grid.width, grid.height)
            with open(path, "wb") as fh:
                fh.write(header)
                fh.write(samples.tobytes())
        else:
            raise ImageFormatError(f"unsupported output format {suffix!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def mask_to_grid(mask) -> ImageGrid:
    data = mask.data if isinstance(mask, GroundTruthMask) else np.asarray(mask)
    return ImageGrid(data.astype(np.float64))


def load_mask(path) -> GroundTruthMask:
    """Load a binary mask image; any sample >= 0.5 counts as foreground."""
    grid = load_image(path)
    return GroundTruthMask(grid.data.mean(axis=2) >= 0.5)


def load_boxes(path) -> list[BoxAnnotation]:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read boxes file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"boxes file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise ValueError("boxes file must hold a JSON list")
    return [BoxAnnotation.from_dict(d) for d in payload]


def save_boxes(boxes, path) -> None:
    with open(path, "w") as fh:
        json.dump([b.to_dict() for b in boxes], fh, indent=2)
        fh.write("\n")
