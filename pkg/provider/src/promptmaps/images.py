"""Stimulus decoding and atomic map writing."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

# container formats accepted for stimuli; ids come from the file stem
STIMULUS_PATTERNS = ("*.pgm", "*.png", "*.jpg", "*.jpeg", "*.bmp")


def read_gray(path) -> np.ndarray:
    """Decode a stimulus to 8-bit grayscale (ITU-R 601-2 luma for color)."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L"), dtype=np.uint8)
    except (OSError, SyntaxError, ValueError) as exc:
        raise OSError(f"cannot read stimulus {path}: {exc}") from None


def _write_atomic(path: Path, payload: bytes) -> None:
    # temp file + rename in the destination directory: readers never see a
    # partial file, and concurrent workers cannot interleave
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_pgm_atomic(path, values: np.ndarray) -> None:
    """Binary P5 writer for 8-bit maps."""
    path = Path(path)
    if values.ndim != 2 or values.dtype != np.uint8:
        raise ValueError("expected a 2-D uint8 array")
    h, w = values.shape
    _write_atomic(path, f"P5\n{w} {h}\n255\n".encode("ascii") + values.tobytes())


def write_text_atomic(path, text: str) -> None:
    _write_atomic(Path(path), text.encode("utf-8"))
