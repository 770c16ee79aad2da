"""White-box evasion: projected gradient descent inside a binary search on the bound.

``find_perturbation`` runs PGD on ``l(D(clip(I_w + delta)), w_t)`` with the
rescaling L-infinity projection and stops as soon as the variant's
constraint holds.  ``wevade_w`` halves the bound ``r`` on ``[0, r_init]``
until the interval is narrower than ``r_tol`` and keeps the perturbation
found at the smallest feasible ``r``.

Variant I targets the complement of the currently decoded watermark and
needs every bit flipped; variant II targets a random watermark and needs
bitwise accuracy at least ``1 - epsilon`` to it.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .codecs.base import decode_bits
from .imaging import apply, project_linf
from .losses import LOSSES, loss_and_grad
from .metrics import l2_norm, linf_norm, random_watermark, ssim

VARIANTS = ("I", "II")


@dataclass(frozen=True)
class WhiteBoxConfig:
    max_iter: int = 5000
    alpha: float | None = None  # None: the codec's own default step
    epsilon: float = 0.01
    loss: str = "l2"
    r_init: float = 2.0
    r_tol: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not (0.0 < self.r_tol < self.r_init):
            raise ValueError("need 0 < r_tol < r_init")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError("epsilon must lie in [0, 1)")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def step_for(self, codec) -> float:
        if self.alpha is not None:
            return self.alpha
        return float(getattr(codec, "pgd_alpha", 0.05))


@dataclass
class AttackResult:
    image: np.ndarray
    delta: np.ndarray
    linf: float
    l2: float
    ssim: float
    soft: np.ndarray | None
    decoded: np.ndarray | None
    constraint_satisfied: bool
    iterations: int = 0
    r_final: float = math.nan
    queries: int = 0
    target: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @classmethod
    def build(cls, original, adversarial, codec=None, **kw):
        delta = adversarial - original
        soft = decoded = None
        if codec is not None:
            soft = codec.decode_soft(adversarial)
            decoded = (soft > 0.5).astype(np.uint8)
        return cls(
            image=adversarial,
            delta=delta,
            linf=linf_norm(delta),
            l2=l2_norm(delta),
            ssim=ssim(original, adversarial),
            soft=soft,
            decoded=decoded,
            **kw,
        )


def required_matches(n: int, epsilon: float) -> int:
    """Smallest match count whose bitwise accuracy is at least ``1 - epsilon``."""
    return int(math.ceil((1.0 - epsilon) * n - 1e-9))


def constraint_holds(bits, target, variant: str, epsilon: float) -> bool:
    matches = int(np.count_nonzero(np.asarray(bits) == np.asarray(target)))
    if variant == "I":
        return matches == len(target)
    return matches >= required_matches(len(target), epsilon)


def find_perturbation(codec, image_w, target, r: float, cfg: WhiteBoxConfig, variant: str = "II", hook=None):
    """PGD with early stopping.  Returns ``(delta, satisfied, iterations)``.

    ``delta`` is the raw (unclamped) PGD variable; the image the decoder
    sees is ``clip(image_w + delta)``.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    image_w = np.asarray(image_w, dtype=np.float64)
    alpha = cfg.step_for(codec)
    delta = np.zeros_like(image_w)
    for it in range(cfg.max_iter + 1):
        x = image_w + delta
        inside = (x > 0.0) & (x < 1.0)
        x = np.clip(x, 0.0, 1.0)
        soft, vjp = codec._forward(x)
        if constraint_holds(decode_bits(soft), target, variant, cfg.epsilon):
            return delta, True, it
        if it == cfg.max_iter:
            break
        _, dsoft = loss_and_grad(soft, target, cfg.loss)
        grad = vjp(dsoft)
        # the clamp passes gradient only where it is inactive
        delta = project_linf(delta - alpha * grad * inside, r)
        if hook is not None:
            hook(it, delta)
    return delta, False, cfg.max_iter


def target_for(codec, image_w, variant: str, seed) -> np.ndarray:
    if variant == "I":
        return 1 - codec.decode(image_w)
    return random_watermark(codec.n, np.random.default_rng(seed))


def wevade_w(codec, image_w, variant: str = "II", cfg: WhiteBoxConfig = WhiteBoxConfig(), target=None) -> AttackResult:
    """Binary search for the smallest bound at which PGD meets the constraint."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    image_w = np.asarray(image_w, dtype=np.float64)
    if target is None:
        target = target_for(codec, image_w, variant, cfg.seed)
    target = np.asarray(target, dtype=np.uint8)
    r_a, r_b = 0.0, cfg.r_init
    best = None  # smallest-r feasible delta
    fallback = (np.zeros_like(image_w), -1)  # most matching bits among failures
    total_iter = 0
    while r_b - r_a > cfg.r_tol:
        r = 0.5 * (r_a + r_b)
        delta, ok, iters = find_perturbation(codec, image_w, target, r, cfg, variant)
        total_iter += iters
        if ok:
            r_b = r
            best = delta
        else:
            r_a = r
            m = int(np.count_nonzero(codec.decode(apply(image_w, delta)) == target))
            if m > fallback[1]:
                fallback = (delta, m)
    satisfied = best is not None
    delta = best if satisfied else fallback[0]
    adv = apply(image_w, delta)
    return AttackResult.build(
        image_w,
        adv,
        codec,
        constraint_satisfied=satisfied,
        iterations=total_iter,
        r_final=r_b if satisfied else math.nan,
        target=target,
        info={"variant": variant, "loss": cfg.loss, "epsilon": cfg.epsilon},
    )


def with_overrides(cfg: WhiteBoxConfig, **kw) -> WhiteBoxConfig:
    return replace(cfg, **kw)
