"""Linear spread-spectrum codec with learned patterns.

Embedding adds ``alpha * sum_i (2 w_i - 1) P_i`` to the image and clamps;
decoding correlates the image with every pattern and passes the result
through a per-bit affine map and a sigmoid.
"""

import numpy as np

from ..errors import DimensionError
from .base import Codec, sigmoid

DEFAULT_ALPHA = 0.02
DEFAULT_SHAPE = (128, 128, 3)


class SpreadSpectrumCodec(Codec):
    kind = "spread-spectrum"
    pgd_alpha = 0.05

    def __init__(self, patterns, gains=None, biases=None, alpha: float = DEFAULT_ALPHA, seed=None, train_config=None):
        patterns = np.asarray(patterns, dtype=np.float64)
        if patterns.ndim < 2:
            raise DimensionError("patterns must have shape (n, *image_shape)")
        n = patterns.shape[0]
        self.n = int(n)
        self.patterns = patterns
        self.gains = np.zeros(n) if gains is None else np.asarray(gains, dtype=np.float64).reshape(n)
        self.biases = np.zeros(n) if biases is None else np.asarray(biases, dtype=np.float64).reshape(n)
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        self.alpha = float(alpha)
        self.seed = seed
        self.train_config = train_config
        self._flat = patterns.reshape(n, -1)

    @classmethod
    def random(cls, n: int = 30, shape=DEFAULT_SHAPE, seed: int = 0, alpha: float = DEFAULT_ALPHA):
        """Zero-mean Gaussian patterns with per-pixel RMS ``1/sqrt(n)``; untrained decoder (zero gains)."""
        rng = np.random.default_rng(seed)
        p = rng.standard_normal((n, *shape)) / np.sqrt(n)
        p -= p.reshape(n, -1).mean(axis=1).reshape((n,) + (1,) * len(shape))
        return cls(p, alpha=alpha, seed=seed)

    @property
    def image_shape(self):
        return self.patterns.shape[1:]

    def _check_image(self, image):
        image = np.asarray(image, dtype=np.float64)
        if image.shape != self.image_shape:
            raise DimensionError(f"codec expects images of shape {self.image_shape}, got {image.shape}")
        return image

    def signal(self, w) -> np.ndarray:
        """The additive watermark ``alpha * sum_i (2 w_i - 1) P_i`` before clamping."""
        w = self._check_bits(w)
        s = 2.0 * w.astype(np.float64) - 1.0
        return (self.alpha * (s @ self._flat)).reshape(self.image_shape)

    def embed(self, image, w):
        image = self._check_image(image)
        return np.clip(image + self.signal(w), 0.0, 1.0)

    def logits(self, image):
        image = self._check_image(image)
        return self.gains * (self._flat @ image.ravel()) + self.biases

    def _forward(self, image):
        soft = sigmoid(self.logits(image))
        flat, gains, shape = self._flat, self.gains, self.image_shape

        def vjp(dsoft):
            dz = np.asarray(dsoft, dtype=np.float64) * soft * (1.0 - soft) * gains
            return (dz @ flat).reshape(shape)

        return soft, vjp

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "alpha": self.alpha,
            "shape": list(self.image_shape),
            "patterns": self.patterns,
            "gains": self.gains,
            "biases": self.biases,
            "seed": self.seed,
            "train_config": self.train_config,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SpreadSpectrumCodec":
        shape = tuple(int(s) for s in doc["shape"])
        patterns = np.asarray(doc["patterns"], dtype=np.float64).reshape((int(doc["n"]),) + shape)
        return cls(
            patterns,
            gains=doc["gains"],
            biases=doc["biases"],
            alpha=float(doc["alpha"]),
            seed=doc.get("seed"),
            train_config=doc.get("train_config"),
        )
