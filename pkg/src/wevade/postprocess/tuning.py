"""Tune a baseline post-processor to a target evasion rate.

Each kind has one parameter and a direction of increasing aggressiveness.
``tune_to_evasion`` searches for the least aggressive parameter whose
empirical evasion rate lands within ``tol`` of the target, by bisection
on the monotone map from aggressiveness to evasion rate.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import InfeasibleError, MonotonicityError
from ..metrics import linf_norm
from .filters import brightness_contrast, gaussian_blur, gaussian_noise
from .jpeg import jpeg

KINDS = ("jpeg", "gaussian-noise", "gaussian-blur", "brightness-contrast")

# (least aggressive, most aggressive) parameter values per kind
BOUNDS = {
    "jpeg": (99, 1),
    "gaussian-noise": (0.0, 1.0),
    "gaussian-blur": (0.0, 10.0),
    "brightness-contrast": (1.0, 10.0),
}


@dataclass(frozen=True)
class PostProcessSpec:
    kind: str
    param: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown post-processor {self.kind!r}; expected one of {KINDS}")
        if self.kind == "jpeg" and (int(self.param) != self.param or not 1 <= self.param <= 99):
            raise ValueError("JPEG quality must be an integer in [1, 99]")
        if self.param < 0:
            raise ValueError("parameter must be nonnegative")

    def apply(self, image, index: int = 0):
        """Post-process ``image``; ``index`` decorrelates noise across images."""
        if self.kind == "jpeg":
            return jpeg(image, int(self.param))
        if self.kind == "gaussian-noise":
            return gaussian_noise(image, self.param, seed=[self.seed, index])
        if self.kind == "gaussian-blur":
            return gaussian_blur(image, self.param)
        return brightness_contrast(image, self.param)


def postprocess(image, kind: str, param: float, seed: int = 0, index: int = 0):
    return PostProcessSpec(kind, param, seed).apply(image, index)


@dataclass(frozen=True)
class TuneResult:
    spec: PostProcessSpec
    rate: float
    mean_linf: float
    evaluations: int


def evaluate(spec: PostProcessSpec, detector, images):
    """Evasion rate and mean L-infinity perturbation of ``spec`` on ``images``."""
    evaded = 0
    norms = []
    for i, img in enumerate(images):
        out = spec.apply(img, i)
        norms.append(linf_norm(out - img))
        if not detector.detect(out).ai_generated:
            evaded += 1
    return evaded / len(images), float(np.mean(norms))


def tune_to_evasion(kind: str, detector, images, target_rate: float, tol: float = 0.01, seed: int = 0, param_tol: float = 1e-4, max_evals: int = 60) -> TuneResult:
    if not (0.0 <= target_rate <= 1.0):
        raise ValueError("target_rate must lie in [0, 1]")
    if kind not in KINDS:
        raise ValueError(f"unknown post-processor {kind!r}")
    images = list(images)
    if not images:
        raise ValueError("need at least one image")
    lo, hi = BOUNDS[kind]
    cache = {}

    def at(t):
        """Evaluate at aggressiveness ``t`` in [0, 1]; returns (rate, linf, spec)."""
        if kind == "jpeg":
            p = int(round(lo + (hi - lo) * t))
        else:
            p = lo + (hi - lo) * t
        if p not in cache:
            spec = PostProcessSpec(kind, p, seed)
            cache[p] = (*evaluate(spec, detector, images), spec)
        return cache[p]

    def check_monotone():
        pts = sorted(cache.items(), key=lambda kv: kv[0], reverse=(kind == "jpeg"))
        rates = [v[0] for _, v in pts]
        for a, b in zip(rates, rates[1:]):
            if b < a:
                raise MonotonicityError(
                    f"{kind}: evasion rate drops from {a:.3f} to {b:.3f} as the parameter grows more aggressive "
                    f"(evaluated {[(p, v[0]) for p, v in pts]})"
                )

    def result(t):
        rate, linf, spec = at(t)
        return TuneResult(spec, rate, linf, len(cache))

    if target_rate == 0.0:
        return result(0.0)
    r0 = at(0.0)[0]
    if r0 >= target_rate - tol:
        if r0 <= target_rate + tol:
            return result(0.0)
        raise InfeasibleError(f"{kind}: least aggressive setting already evades at {r0:.3f}", best=result(0.0))
    r1 = at(1.0)[0]
    if r1 < target_rate - tol:
        raise InfeasibleError(f"{kind}: most aggressive setting reaches only {r1:.3f}", best=result(1.0))

    # invariant: rate(a) < target - tol <= rate(b)
    a, b = 0.0, 1.0
    step = 1.0 / abs(hi - lo) if kind == "jpeg" else param_tol / abs(hi - lo)
    while b - a > step and len(cache) < max_evals:
        m = 0.5 * (a + b)
        if kind == "jpeg":
            # keep the midpoint on a grid value strictly between a and b
            pa, pb, pm = at(a)[2].param, at(b)[2].param, at(m)[2].param
            if pm in (pa, pb):
                break
        if at(m)[0] >= target_rate - tol:
            b = m
        else:
            a = m
        check_monotone()
    check_monotone()
    best = result(b)
    if abs(best.rate - target_rate) <= tol:
        return best
    raise InfeasibleError(
        f"{kind}: no setting within {tol} of target {target_rate:.3f}; closest from above {best.rate:.3f}", best=best
    )


def scan_grid(kind: str, points: int = 100) -> list:
    """Parameter grid from least to most aggressive; every quality for JPEG."""
    if kind not in KINDS:
        raise ValueError(f"unknown post-processor {kind!r}")
    lo, hi = BOUNDS[kind]
    if kind == "jpeg":
        return list(range(int(lo), int(hi) - 1, -1))
    return [float(p) for p in np.linspace(lo, hi, points)]


def scan_to_evasion(kind: str, detector, images, target_rate: float, tol: float = 0.01, seed: int = 0, points: int = 100) -> TuneResult:
    """Exhaustive alternative to :func:`tune_to_evasion` that needs no monotonicity.

    Evaluates every grid setting and returns the one with the smallest mean
    L-infinity perturbation among those whose evasion rate is within ``tol``
    of ``target_rate``.  Raises :class:`InfeasibleError` carrying the
    setting closest in rate when none matches.
    """
    if not (0.0 <= target_rate <= 1.0):
        raise ValueError("target_rate must lie in [0, 1]")
    images = list(images)
    if not images:
        raise ValueError("need at least one image")
    grid = scan_grid(kind, points)
    evaluated = []
    for p in grid:
        spec = PostProcessSpec(kind, p, seed)
        rate, linf = evaluate(spec, detector, images)
        evaluated.append(TuneResult(spec, rate, linf, len(grid)))
    matched = [r for r in evaluated if abs(r.rate - target_rate) <= tol]
    if matched:
        return min(matched, key=lambda r: r.mean_linf)
    closest = min(evaluated, key=lambda r: (abs(r.rate - target_rate), r.mean_linf))
    raise InfeasibleError(
        f"{kind}: no grid setting within {tol} of target {target_rate:.3f}; closest {closest.rate:.3f}", best=closest
    )
