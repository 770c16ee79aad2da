"""Image arrays, PNG/JPEG I/O, resizing and perturbation projection.

Images are ``float64`` arrays of shape ``(H, W, 3)`` with values in [0, 1].
An 8-bit value ``v`` maps to ``v / 255``.
"""

from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from . import _kernels
from .errors import DimensionError, ImageFormatError

SUPPORTED_FORMATS = ("PNG", "JPEG")


def as_image(pixels) -> np.ndarray:
    """Validate and convert to a float64 ``(H, W, 3)`` array in [0, 1]."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image pixels must be finite and lie in [0, 1]")
    return arr


def to_uint8(image: np.ndarray) -> np.ndarray:
    # round half up, then saturate
    return np.clip(np.floor(np.asarray(image, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def from_uint8(data: np.ndarray) -> np.ndarray:
    return np.asarray(data, dtype=np.float64) / 255.0


def load_image(path) -> np.ndarray:
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            fmt = im.format
            if fmt not in SUPPORTED_FORMATS:
                raise ImageFormatError(f"{path}: unsupported format {fmt!r}")
            rgb = im.convert("RGB")
            data = np.asarray(rgb, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a PNG or JPEG image") from exc
    return from_uint8(data)


def save_image(image: np.ndarray, path) -> None:
    """Write a PNG; pixel ``p`` is stored as ``round(p * 255)`` clamped to [0, 255]."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    PILImage.fromarray(to_uint8(arr)).save(Path(path), format="PNG")


def resize(image: np.ndarray, h: int, w: int) -> np.ndarray:
    if h < 1 or w < 1:
        raise ValueError("target dimensions must be positive")
    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] == (h, w):
        return image.copy()
    return np.clip(_kernels.resize_bilinear(image, h, w), 0.0, 1.0)


def project_linf(delta: np.ndarray, r: float) -> np.ndarray:
    """Rescale ``delta`` so its largest entry has magnitude at most ``r``.

    This is the rescaling projection ``delta * r / max|delta|`` rather than
    per-coordinate clipping, so the direction of ``delta`` is preserved.
    """
    if r < 0:
        raise ValueError("perturbation bound must be nonnegative")
    delta = np.asarray(delta, dtype=np.float64)
    norm = float(np.max(np.abs(delta))) if delta.size else 0.0
    if norm > r:
        return delta * (r / norm)
    return delta


def apply(image: np.ndarray, delta: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if image.shape != delta.shape:
        raise DimensionError(f"perturbation shape {delta.shape} does not match image {image.shape}")
    return np.clip(image + delta, 0.0, 1.0)
