"""Pixel-domain baseline post-processors: noise, blur and brightness/contrast."""

import numpy as np

from .. import _kernels

BLUR_SIZE = 5
CONTRAST_OFFSET = 0.2


def gaussian_noise(image, sigma: float, seed=0):
    """Add i.i.d. N(0, sigma^2) noise to every pixel and channel, then clamp."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    image = np.asarray(image, dtype=np.float64)
    if sigma == 0:
        return image.copy()
    noise = np.random.default_rng(seed).standard_normal(image.shape)
    return np.clip(image + sigma * noise, 0.0, 1.0)


def gaussian_kernel(sigma: float, size: int = BLUR_SIZE) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def gaussian_blur(image, sigma: float):
    """5x5 Gaussian blur with mirror padding; ``sigma = 0`` is the identity."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    image = np.asarray(image, dtype=np.float64)
    if sigma == 0:
        return image.copy()
    return np.clip(_kernels.correlate_reflect(image, gaussian_kernel(sigma)), 0.0, 1.0)


def brightness_contrast(image, a: float):
    """Map every pixel ``x`` to ``a * x + 0.2``, clamped to [0, 1]."""
    if a < 0:
        raise ValueError("contrast factor must be nonnegative")
    return np.clip(a * np.asarray(image, dtype=np.float64) + CONTRAST_OFFSET, 0.0, 1.0)
