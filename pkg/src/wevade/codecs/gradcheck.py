"""Central finite-difference checks of ``Codec.grad_loss``."""

from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheck:
    rel_errors: np.ndarray  # one per kept probe
    skipped: int  # probes dropped near a QIM kink or the pixel range boundary

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_errors.max()) if self.rel_errors.size else 0.0


def relative_error(a: float, b: float, floor: float = 1e-12) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradient(
    codec, image, target, loss: str, probes: int, rng, h: float = 1e-4, kink_margin: float = 0.01, max_draws=None
):
    """Compare analytic and central-difference derivatives at random pixels.

    For codecs exposing ``kink_distance`` a probe is skipped when any slot
    the pixel feeds lies within ``kink_margin`` (lattice units) of a kink,
    where the piecewise-linear score has no derivative.  At most
    ``max_draws`` pixels (default ``100 * probes``) are drawn.
    """
    image = np.asarray(image, dtype=np.float64)
    _, grad = codec.grad_loss(image, target, loss)
    kinks = codec.kink_distance(image) if hasattr(codec, "kink_distance") else None
    errors = []
    skipped = 0
    max_draws = 100 * probes if max_draws is None else max_draws
    while len(errors) < probes:
        if len(errors) + skipped >= max_draws:
            raise ValueError(f"only {len(errors)} of {probes} probes usable after {max_draws} draws")
        y, x, c = (int(rng.integers(s)) for s in image.shape)
        if not (h < image[y, x, c] < 1.0 - h):
            skipped += 1
            continue
        if kinks is not None:
            slots = codec.pixel_slots(image, y, x)
            if slots.size and kinks[slots].min() < kink_margin:
                skipped += 1
                continue
        plus = image.copy()
        plus[y, x, c] += h
        minus = image.copy()
        minus[y, x, c] -= h
        fd = (codec.grad_loss(plus, target, loss)[0] - codec.grad_loss(minus, target, loss)[0]) / (2 * h)
        errors.append(relative_error(fd, grad[y, x, c]))
    return GradCheck(np.array(errors), skipped)
