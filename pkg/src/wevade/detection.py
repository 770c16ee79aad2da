"""Single- and double-tail watermark detectors and their exact binomial theory.

Every probability here is computed from exact integer binomial sums; the
bitwise accuracy of an unrelated image against a uniformly random
ground-truth watermark has ``n * BA ~ B(n, 1/2)``.

Thresholds are compared with strict inequalities.  An image is flagged by the
single-tail detector iff ``m > n * tau`` where ``m`` is the number of
matching bits, so the false positive rate at ``tau`` is ``P(m > n * tau)``.
For ``tau`` off the ``k / n`` grid this is the usual
``sum_{k >= ceil(n * tau)} C(n, k) / 2^n``.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, InfeasibleError
from .metrics import bitwise_accuracy

MODES = ("single", "double")
_SNAP = 1e-9


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def _snap(x: float) -> float:
    # absorb float noise such as 0.9 * 30 = 26.999999999999996
    r = round(x)
    return float(r) if abs(x - r) < _SNAP else x


def _floor(x: float) -> int:
    return int(math.floor(_snap(x)))


@lru_cache(maxsize=64)
def _cumulative_counts(n: int) -> tuple:
    """Prefix sums of C(n, k) as Python integers."""
    total = 0
    out = []
    for k in range(n + 1):
        total += math.comb(n, k)
        out.append(total)
    return tuple(out)


def binom_cdf(t: int, n: int) -> float:
    """``P(m <= t)`` for ``m ~ B(n, 1/2)``, exact up to the final rounding."""
    if n < 1:
        raise ValueError("n must be at least 1")
    t = int(t)
    if t < 0:
        return 0.0
    if t >= n:
        return 1.0
    return _cumulative_counts(n)[t] / (1 << n)


def binom_sf_count(k: int, n: int) -> int:
    """Number of length-n bitstrings with at least ``k`` ones (integer)."""
    if k <= 0:
        return 1 << n
    if k > n:
        return 0
    return (1 << n) - _cumulative_counts(n)[k - 1]


def _check_tau(tau: float) -> None:
    if not (0.5 < tau <= 1.0):
        raise DomainError(f"tau must lie in (0.5, 1], got {tau}")


def fpr_single(tau: float, n: int) -> float:
    _check_tau(tau)
    first = _floor(n * tau) + 1
    return binom_sf_count(first, n) / (1 << n)


def fpr_double(tau: float, n: int) -> float:
    _check_tau(tau)
    first = _floor(n * tau) + 1
    if first <= n - first:
        raise DomainError("tails overlap: tau too close to 0.5")
    return 2 * binom_sf_count(first, n) / (1 << n)


def fpr(tau: float, n: int, mode: str) -> float:
    return fpr_single(tau, n) if _check_mode(mode) == "single" else fpr_double(tau, n)


def calibrate_tau(n: int, eta: float, mode: str = "double") -> float:
    """Smallest grid threshold ``k / n`` whose false positive rate is below ``eta``.

    ``tau = 1`` is excluded: with strict inequalities that detector can never
    flag anything, so its zero false positive rate is vacuous.
    """
    if not (0.0 < eta < 1.0):
        raise ValueError("eta must lie in (0, 1)")
    _check_mode(mode)
    for k in range(math.ceil(n / 2) + 1, n):
        tau = k / n
        try:
            if fpr(tau, n, mode) < eta:
                return tau
        except DomainError:
            continue
    raise InfeasibleError(f"no threshold on the k/{n} grid reaches FPR < {eta}")


# ---------------------------------------------------------------------------
# detectors
# ---------------------------------------------------------------------------


def flags(matches: int, n: int, tau: float, mode: str) -> bool:
    """Detector decision from the number of matching bits."""
    hi = _snap(n * tau)
    if matches > hi:
        return True
    return mode == "double" and matches < n - hi


def verdict_from_ba(ba: float, n: int, tau: float, mode: str) -> bool:
    """Recompute a stored verdict from its bitwise accuracy."""
    return flags(int(round(ba * n)), n, tau, _check_mode(mode))


@dataclass(frozen=True)
class Verdict:
    ai_generated: bool
    ba: float

    @property
    def label(self) -> str:
        return "AI-generated" if self.ai_generated else "non-AI-generated"


@dataclass
class Detector:
    groundtruth: np.ndarray
    tau: float
    mode: str
    codec: object

    def __post_init__(self):
        _check_tau(self.tau)
        _check_mode(self.mode)
        self.groundtruth = np.asarray(self.groundtruth, dtype=np.uint8)

    @property
    def n(self) -> int:
        return int(self.groundtruth.size)

    def decide_bits(self, bits) -> Verdict:
        ba = bitwise_accuracy(bits, self.groundtruth)
        m = int(np.count_nonzero(np.asarray(bits) == self.groundtruth))
        return Verdict(flags(m, self.n, self.tau, self.mode), ba)

    def detect(self, image) -> Verdict:
        return self.decide_bits(self.codec.decode(image))


def detect(d: Detector, image) -> Verdict:
    return d.detect(image)


# ---------------------------------------------------------------------------
# evasion-rate bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundInputs:
    n: int
    tau: float
    epsilon: float = 0.01
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not (0.0 <= self.epsilon < 0.5):
            raise DomainError("epsilon must lie in [0, 0.5)")
        _check_tau(self.tau)
        if not (0.0 <= self.beta <= 1.0 and 0.0 <= self.gamma <= 1.0):
            raise DomainError("beta and gamma must lie in [0, 1]")


def bound_wevade2_single(b: BoundInputs) -> float:
    return binom_cdf(_floor((b.tau - b.epsilon) * b.n), b.n)


def bound_wevade2_double(b: BoundInputs) -> float:
    return max(0.0, 2.0 * binom_cdf(_floor((b.tau - b.epsilon) * b.n), b.n) - 1.0)


def bound_surrogate(b: BoundInputs, mode: str) -> float:
    p = binom_cdf(_floor((b.tau + b.beta - b.epsilon - 1.0) * b.n), b.n)
    if _check_mode(mode) == "single":
        return max(0.0, b.gamma * p)
    return max(0.0, 2.0 * b.gamma * p - 1.0)


def bound_wevade2(b: BoundInputs, mode: str) -> float:
    if _check_mode(mode) == "single":
        return bound_wevade2_single(b)
    return bound_wevade2_double(b)


def estimate_beta_gamma(surrogate, target, images, beta: float) -> float:
    """Fraction of ``images`` on which the two decoders agree to at least ``beta``."""
    if surrogate.n != target.n:
        raise ValueError("surrogate and target must decode the same number of bits")
    images = list(images)
    if not images:
        raise ValueError("need at least one image")
    hits = 0
    for img in images:
        if bitwise_accuracy(surrogate.decode(img), target.decode(img)) >= beta - 1e-12:
            hits += 1
    return hits / len(images)


def agreement_profile(surrogate, target, images) -> np.ndarray:
    """Per-image bitwise accuracy between two decoders."""
    return np.array([bitwise_accuracy(surrogate.decode(i), target.decode(i)) for i in images])
