"""Map-producing backends.

The mock backend is hermetic and platform-stable: a SHA-256 digest of the
prompt text picks one of three procedural generators and fixes its
parameters, so the same (image, prompt) pair yields identical bytes on
any machine — no network, no weights.  Real segmentation models would
register under their own names; none ship with this package.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

# how raw generator fields become grayscale, recorded in the sidecar
SCALING_NOTE = "min-max rescale to [0, 255], round-half-even quantization"


class BackendUnavailableError(RuntimeError):
    """The requested backend cannot run in this environment."""


def _digest(prompt: str) -> bytes:
    return hashlib.sha256(prompt.encode("utf-8")).digest()


def _unit(pair: bytes) -> float:
    """Two digest bytes -> [0, 1)."""
    return int.from_bytes(pair, "big") / 65536.0


def _to_gray(field: np.ndarray) -> np.ndarray:
    lo, hi = float(field.min()), float(field.max())
    if hi == lo:
        return np.zeros(field.shape, dtype=np.uint8)
    scaled = (field - lo) / (hi - lo) * 255.0
    return np.rint(scaled).astype(np.uint8)


def _ramp(shape: tuple[int, int], theta: float) -> np.ndarray:
    h, w = shape
    xs = np.linspace(0.0, 1.0, w)
    ys = np.linspace(0.0, 1.0, h)
    return math.cos(theta) * xs[None, :] + math.sin(theta) * ys[:, None]


def _luminance_gradient(image: np.ndarray, digest: bytes) -> np.ndarray:
    """Linear ramp across the image; direction keyed by the prompt."""
    return _ramp(image.shape, 2.0 * math.pi * _unit(digest[4:6]))


def _center_blob(image: np.ndarray, digest: bytes) -> np.ndarray:
    """Gaussian blob; center offset and width keyed by the prompt."""
    h, w = image.shape
    cx = (w - 1) * (0.5 + 0.3 * (_unit(digest[4:6]) - 0.5))
    cy = (h - 1) * (0.5 + 0.3 * (_unit(digest[6:8]) - 0.5))
    sigma = (0.15 + 0.2 * _unit(digest[8:10])) * min(w, h)
    xs = np.arange(w, dtype=np.float64) - cx
    ys = np.arange(h, dtype=np.float64) - cy
    return np.exp(-0.5 * (xs[None, :] ** 2 + ys[:, None] ** 2) / sigma**2)


def _edge_magnitude(image: np.ndarray, digest: bytes) -> np.ndarray:
    """Sobel magnitude with prompt-keyed anisotropy, gamma, and tilt.

    The keying keeps two prompts that both land on this generator from
    producing the same map for one image; the faint tilt term preserves
    that even on edge-free (constant) stimuli.
    """
    v = image.astype(np.float64)
    p = np.pad(v, 1, mode="edge")
    gx = (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:]) - (
        p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2]
    )
    gy = (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:]) - (
        p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:]
    )
    wx = 0.5 + _unit(digest[4:6])
    wy = 0.5 + _unit(digest[6:8])
    mag = np.sqrt(wx * gx**2 + wy * gy**2)
    peak = mag.max()
    if peak > 0:
        gamma = 0.5 + 1.5 * _unit(digest[8:10])
        mag = (mag / peak) ** gamma
    return mag + 0.03 * _ramp(image.shape, 2.0 * math.pi * _unit(digest[10:12]))


_GENERATORS = (
    ("luminance-gradient", _luminance_gradient),
    ("center-blob", _center_blob),
    ("edge-magnitude", _edge_magnitude),
)


class MockBackend:
    name = "mock"

    def describe(self, prompt: str) -> str:
        return _GENERATORS[_digest(prompt)[0] % len(_GENERATORS)][0]

    def run(self, image: np.ndarray, prompt: str) -> tuple[np.ndarray, dict]:
        """Deterministic uint8 map for (image, prompt), plus provenance."""
        if image.ndim != 2:
            raise ValueError("expected a 2-D grayscale image")
        digest = _digest(prompt)
        gen_name, generator = _GENERATORS[digest[0] % len(_GENERATORS)]
        field = generator(image, digest)
        return _to_gray(field), {"generator": gen_name, "scaling": SCALING_NOTE}


_BACKENDS = {"mock": MockBackend}


def get_backend(name: str):
    try:
        cls = _BACKENDS[name]
    except KeyError:
        raise BackendUnavailableError(
            f"backend '{name}' is unavailable: it needs external model weights; "
            f"hermetic backends: {sorted(_BACKENDS)}"
        ) from None
    return cls()
