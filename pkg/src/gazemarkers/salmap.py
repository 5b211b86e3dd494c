"""Saliency map loading and algebra: smoothing, normalization, differentials.

Maps are dense float grids indexed [row, col] = [y, x], matching the
stimulus image they annotate.  Grayscale files come in as ``raw`` maps in
[0, 255]; analysis normalizes them, optionally subtracts a prompt pair
into a signed differential, and samples values at fixation centroids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MapFormatError
from .ingest import AttributeEntry as AttributeSpec  # shared manifest schema

__all__ = [
    "MapKind",
    "SaliencyMap",
    "AttributeSpec",
    "load_map",
    "write_pgm",
    "gaussian_smooth",
    "normalize_255",
    "differential_map",
    "center_prior_map",
    "sample_saliency",
]


class MapKind(Enum):
    RAW = "raw"
    NORMALIZED = "normalized"  # [0, 255]
    DIFFERENTIAL = "differential"  # signed, [-255, 255]


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray  # float64, shape (height, width)
    kind: MapKind
    attribute_name: str = ""
    provenance: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise MapFormatError("saliency map must be a non-empty 2-D grid")
        object.__setattr__(self, "values", v)
        if self.kind is MapKind.NORMALIZED and (v.min() < 0 or v.max() > 255):
            raise MapFormatError("normalized map values must lie in [0, 255]")
        if self.kind is MapKind.DIFFERENTIAL and (v.min() < -255 or v.max() > 255):
            raise MapFormatError("differential map values must lie in [-255, 255]")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height


# --------------------------------------------------------------------------
# file I/O


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed between them
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise MapFormatError(f"{path}: not a binary (P5) PGM file")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise MapFormatError(f"{path}: malformed PGM header") from None
    if maxval != 255:
        raise MapFormatError(f"{path}: only 8-bit PGM supported (maxval 255, got {maxval})")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise MapFormatError(f"{path}: truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).astype(np.float64)


def _read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                raise MapFormatError(f"{path}: expected 8-bit grayscale PNG, got mode {img.mode}")
            return np.asarray(img, dtype=np.float64)
    except (OSError, SyntaxError) as exc:
        raise MapFormatError(f"{path}: unreadable image ({exc})") from exc


def load_map(
    path: Path | str,
    expected_size: tuple[int, int] | None = None,
    attribute_name: str = "",
) -> SaliencyMap:
    """Read an 8-bit grayscale PGM (binary P5) or PNG map; kind=raw."""
    path = Path(path)
    if not path.exists():
        raise MapFormatError(f"{path}: no such file")
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        values = _read_pgm(path)
    elif suffix == ".png":
        values = _read_png(path)
    else:
        raise MapFormatError(f"{path}: unsupported map format {suffix!r} (use .pgm or .png)")
    if expected_size is not None and (values.shape[1], values.shape[0]) != tuple(expected_size):
        raise MapFormatError(
            f"{path}: map is {values.shape[1]}x{values.shape[0]} "
            f"but stimulus is {expected_size[0]}x{expected_size[1]}"
        )
    return SaliencyMap(values, MapKind.RAW, attribute_name=attribute_name, provenance=str(path))


def quantize_255(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def write_pgm(path: Path | str, values: np.ndarray) -> None:
    """Write a binary P5 PGM; float inputs are rounded and clipped to [0, 255]."""
    arr = values if values.dtype == np.uint8 else quantize_255(np.asarray(values))
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


# --------------------------------------------------------------------------
# map algebra


def _gaussian_kernel(sigma_px: float) -> np.ndarray:
    radius = max(1, math.ceil(3.0 * sigma_px))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma_px) ** 2)
    return k / k.sum()


def _convolve_reflect_1d(values: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = (len(kernel) - 1) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(values, pad, mode="symmetric")
    out = np.zeros_like(values)
    for offset, weight in enumerate(kernel):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(offset, offset + values.shape[axis])
        out += weight * padded[tuple(sl)]
    return out


def smooth_array(values: np.ndarray, sigma_px: float) -> np.ndarray:
    """Separable Gaussian blur of a raw 2-D array; sigma 0 copies the input."""
    if sigma_px < 0:
        raise ValueError("sigma_px must be >= 0")
    if sigma_px == 0:
        return values.copy()
    kernel = _gaussian_kernel(sigma_px)
    out = _convolve_reflect_1d(values, kernel, axis=1)
    return _convolve_reflect_1d(out, kernel, axis=0)


def gaussian_smooth(smap: SaliencyMap, sigma_px: float) -> SaliencyMap:
    """Separable Gaussian blur, kernel truncated at 3 sigma, reflect padding.

    sigma 0 is the identity.  Reflection preserves constants and total
    mass, and the output never leaves the input value range.
    """
    return replace(smap, values=smooth_array(smap.values, sigma_px))


def normalize_255(smap: SaliencyMap) -> SaliencyMap:
    """Affine rescale to min 0, max 255; constant maps collapse to all zeros."""
    v = smap.values
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        out = np.zeros_like(v)
    else:
        # divide before scaling: (v-lo)/(hi-lo) is exactly 1.0 at the max,
        # so the output never overshoots [0, 255] by rounding
        out = (v - lo) / (hi - lo) * 255.0
    return replace(smap, values=out, kind=MapKind.NORMALIZED)


def differential_map(pos: SaliencyMap, neg: SaliencyMap) -> SaliencyMap:
    """Signed prompt-pair map: pos - neg, pointwise; order matters.

    Not renormalized afterwards, so the sign keeps meaning (positive =
    toward the positive prompt's attribute).
    """
    if pos.kind is not MapKind.NORMALIZED or neg.kind is not MapKind.NORMALIZED:
        raise MapFormatError("differential_map expects two normalized maps")
    if pos.values.shape != neg.values.shape:
        raise MapFormatError(
            f"differential_map dimension mismatch: {pos.values.shape} vs {neg.values.shape}"
        )
    return SaliencyMap(
        pos.values - neg.values,
        MapKind.DIFFERENTIAL,
        attribute_name=pos.attribute_name,
        provenance=f"({pos.provenance}) - ({neg.provenance})",
    )


def center_prior_map(width: int, height: int, sigma_px: float | None = None) -> SaliencyMap:
    """Isotropic Gaussian prior centered mid-image, normalized to [0, 255].

    Default sigma is 0.25 * min(width, height).
    """
    if width <= 0 or height <= 0:
        raise ValueError("map dimensions must be positive")
    if sigma_px is None:
        sigma_px = 0.25 * min(width, height)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    xs = np.arange(width, dtype=np.float64) - cx
    ys = np.arange(height, dtype=np.float64) - cy
    g = np.exp(-0.5 * ((ys[:, None] ** 2 + xs[None, :] ** 2) / sigma_px**2))
    return normalize_255(
        SaliencyMap(g, MapKind.RAW, attribute_name="center_prior", provenance="synthetic")
    )


def sample_saliency(smap: SaliencyMap, x: float | np.ndarray, y: float | np.ndarray):
    """Bilinear interpolation at continuous image coordinates.

    Points must lie within [0, width-1] x [0, height-1]; the fixation
    filters are what keep callers in range.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w, h = smap.width, smap.height
    if np.any(x < 0) or np.any(x > w - 1) or np.any(y < 0) or np.any(y > h - 1):
        raise ValueError(f"sample point outside map bounds [0,{w - 1}]x[0,{h - 1}]")
    x0 = np.clip(np.floor(x).astype(int), 0, w - 2) if w > 1 else np.zeros_like(x, dtype=int)
    y0 = np.clip(np.floor(y).astype(int), 0, h - 2) if h > 1 else np.zeros_like(y, dtype=int)
    fx = x - x0
    fy = y - y0
    v = smap.values
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = v[y0, x0] * (1 - fx) + v[y0, x1] * fx
    bot = v[y1, x0] * (1 - fx) + v[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    return float(out) if out.ndim == 0 else out
