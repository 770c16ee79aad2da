"""Bitwise accuracy between watermarks and distances between images."""

import numpy as np

from . import _kernels
from .errors import DimensionError

# SSIM constants (Wang et al. defaults), dynamic range 1.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def as_watermark(bits) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise DimensionError(f"watermark must be one-dimensional, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("watermark entries must be 0 or 1")
    return arr.astype(np.uint8)


def parse_bits(text: str) -> np.ndarray:
    """``"0110101"`` -> array([0, 1, 1, 0, 1, 0, 1])."""
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise ValueError(f"not a bitstring: {text!r}")
    return np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")


def format_bits(bits) -> str:
    return "".join("1" if b else "0" for b in as_watermark(bits))


def random_watermark(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def bitwise_accuracy(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"watermark lengths differ: {a.shape} vs {b.shape}")
    return float(np.count_nonzero(a == b)) / a.size


def linf_norm(delta) -> float:
    delta = np.asarray(delta, dtype=np.float64)
    return float(np.max(np.abs(delta))) if delta.size else 0.0


def l2_norm(delta) -> float:
    return float(np.linalg.norm(np.asarray(delta, dtype=np.float64).ravel()))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def ssim(a, b) -> float:
    """Mean SSIM over all fully-contained Gaussian windows, averaged over channels.

    Images narrower than the 11-pixel window fall back to the largest odd
    window that fits.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    size = min(SSIM_WINDOW, a.shape[0], a.shape[1])
    if size % 2 == 0:
        size -= 1
    g = gaussian_window(size)
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    per_channel = []
    for ch in range(a.shape[2]):
        x = a[:, :, ch]
        y = b[:, :, ch]
        mx = _kernels.filter_valid(x, g)
        my = _kernels.filter_valid(y, g)
        sxx = _kernels.filter_valid(x * x, g) - mx * mx
        syy = _kernels.filter_valid(y * y, g) - my * my
        sxy = _kernels.filter_valid(x * y, g) - mx * my
        num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        per_channel.append(float(np.mean(num / den)))
    return float(np.mean(per_channel))
