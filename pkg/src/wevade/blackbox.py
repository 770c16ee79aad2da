"""Black-box evasion against a hard-label detector.

WEvade-B-S runs the white-box attack on a surrogate codec the attacker
owns.  WEvade-B-Q only queries the target detector: it starts from the
mildest JPEG compression that already evades (falling back to a random
noise blend), then walks back toward the watermarked image with
HopSkipJump iterations, keeping the closest evading point seen and
stopping after ``es`` iterations without improvement or once the query
budget is spent.

A HopSkipJump iteration here is: bisect the segment from the current
point to ``I_w`` down to the decision boundary; estimate the boundary
normal from random probes around that point; step along the sign of the
estimate with a geometrically shrinking step until the point evades
again; bisect once more so the returned iterate sits on the boundary.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExhausted, InitializationError
from .metrics import l2_norm, linf_norm
from .postprocess.jpeg import jpeg
from .whitebox import AttackResult, WhiteBoxConfig, wevade_w

JPEG_QUALITIES = (99, 90, 70, 50, 30, 10, 1)
PHASES = ("init", "bisect", "probe", "step")


class DetectorOracle:
    """Hard-label access to a detector: ``query`` returns True for "AI-generated"."""

    def __init__(self, detector, limit: int | None = None):
        self.detector = detector
        self.limit = limit
        self.query_count = 0
        self.log = []  # (query index, ai_generated, phase)

    def query(self, image, phase: str = "step") -> bool:
        if self.limit is not None and self.query_count >= self.limit:
            raise BudgetExhausted(f"query limit {self.limit} reached", best=None, queries=self.query_count)
        verdict = self.detector.detect(image).ai_generated
        self.log.append((self.query_count, bool(verdict), phase))
        self.query_count += 1
        return verdict

    def evades(self, image, phase: str = "step") -> bool:
        return not self.query(image, phase)


@dataclass(frozen=True)
class BlackBoxConfig:
    max_q: int = 2000
    es: int = 5
    probes0: int = 20
    max_probes: int = 200
    bisect_tol: float = 1e-3
    probe_scale: float = 2.0
    shrink: float = 0.5
    max_halvings: int = 25
    norm: str = "linf"
    seed: int = 0

    def __post_init__(self):
        if self.max_q < 1 or self.es < 1:
            raise ValueError("max_q and es must be at least 1")
        if not (0.0 < self.bisect_tol < 1.0):
            raise ValueError("bisect_tol must lie in (0, 1)")
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink must lie in (0, 1)")
        if self.norm not in ("linf", "l2"):
            raise ValueError("norm must be 'linf' or 'l2'")

    def distance(self, delta) -> float:
        return linf_norm(delta) if self.norm == "linf" else l2_norm(delta)


def _blend(image_w, other, lam):
    return (1.0 - lam) * image_w + lam * other


def random_init(oracle, image_w, rng, grid: int = 16, redraws: int = 16):
    """Blend ``image_w`` with uniform noise, raising the noise weight until the oracle accepts."""
    weights = np.arange(1, grid + 1) / grid
    for _ in range(redraws):
        noise = rng.random(image_w.shape)
        for lam in weights:
            cand = _blend(image_w, noise, lam)
            if oracle.evades(cand, "init"):
                return cand
    raise InitializationError(f"no evading random blend after {grid * redraws} attempts")


def jpeg_init(oracle, image_w, rng=None):
    """First JPEG quality in the fixed list whose output evades; else a random blend.

    Returns ``(candidate, queries)``.
    """
    start = oracle.query_count
    for q in JPEG_QUALITIES:
        cand = jpeg(image_w, q)
        if oracle.evades(cand, "init"):
            return cand, oracle.query_count - start
    rng = rng if rng is not None else np.random.default_rng(0)
    cand = random_init(oracle, image_w, rng)
    return cand, oracle.query_count - start


def bisect(oracle, adv, image_w, tol: float):
    """Closest evading point on the segment ``image_w -> adv`` (blend weight within ``tol``)."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if oracle.evades(_blend(image_w, adv, mid), "bisect"):
            hi = mid
        else:
            lo = mid
    return _blend(image_w, adv, hi)


def estimate_direction(oracle, point, radius: float, count: int, rng):
    """Monte Carlo estimate of the boundary normal pointing toward evasion."""
    d = point.size
    probes = rng.standard_normal((count, d))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    signs = np.empty(count)
    for k in range(count):
        x = np.clip(point + radius * probes[k].reshape(point.shape), 0.0, 1.0)
        signs[k] = 1.0 if oracle.evades(x, "probe") else -1.0
    mean = signs.mean()
    if abs(mean) < 1.0:
        signs = signs - mean  # baseline subtraction reduces variance
    grad = (signs @ probes).reshape(point.shape)
    norm = np.linalg.norm(grad)
    return grad / norm if norm > 0 else grad


def hopskipjump_step(oracle, current, image_w, cfg: BlackBoxConfig, iteration: int, rng, on_boundary: bool = False):
    """One HopSkipJump iteration from an evading ``current``.

    Returns ``(next, queries)``; ``next`` evades and sits on the boundary
    segment toward ``image_w``.  If the oracle's hard limit is hit the
    ``BudgetExhausted`` error carries the last evading point.
    """
    start = oracle.query_count
    best = current
    try:
        boundary = current if on_boundary else bisect(oracle, current, image_w, cfg.bisect_tol)
        best = boundary
        gap = cfg.bisect_tol * l2_norm(current - image_w)
        radius = max(cfg.probe_scale * gap, 1e-12)
        count = min(cfg.max_probes, int(math.ceil(cfg.probes0 * math.sqrt(iteration))))
        grad = estimate_direction(oracle, boundary, radius, count, rng)
        direction = np.sign(grad) if cfg.norm == "linf" else grad
        dist = linf_norm(boundary - image_w) if cfg.norm == "linf" else l2_norm(boundary - image_w)
        step = dist / math.sqrt(iteration)
        stepped = None
        for _ in range(cfg.max_halvings):
            cand = np.clip(boundary + step * direction, 0.0, 1.0)
            if oracle.evades(cand, "step"):
                stepped = cand
                break
            step *= cfg.shrink
        if stepped is None:
            return boundary, oracle.query_count - start
        best = stepped
        nxt = bisect(oracle, stepped, image_w, cfg.bisect_tol)
    except BudgetExhausted as exc:
        raise BudgetExhausted(str(exc), best=best, queries=oracle.query_count - start) from None
    return nxt, oracle.query_count - start


def _finish(oracle, image_w, adv, queries, iterations, info):
    codec = getattr(oracle.detector, "codec", None)
    return AttackResult.build(
        image_w,
        adv,
        codec,
        constraint_satisfied=not oracle.detector.detect(adv).ai_generated,
        iterations=iterations,
        queries=queries,
        info=info,
    )


def wevade_b_q(oracle, image_w, cfg: BlackBoxConfig = BlackBoxConfig(), trace=None) -> AttackResult:
    """Query-only evasion.  ``trace`` (a list) receives ``(queries, best distance)`` after every iteration."""
    image_w = np.asarray(image_w, dtype=np.float64)
    start = oracle.query_count
    rng = np.random.default_rng(cfg.seed)
    if oracle.evades(image_w, "init"):
        return _finish(oracle, image_w, image_w.copy(), oracle.query_count - start, 0, {"init": "none"})
    current, _ = jpeg_init(oracle, image_w, rng)
    best = current
    best_dist = cfg.distance(best - image_w)
    stall = 0
    iteration = 0
    truncated = False
    while oracle.query_count - start < cfg.max_q:
        iteration += 1
        try:
            current, _ = hopskipjump_step(oracle, current, image_w, cfg, iteration, rng, on_boundary=iteration > 1)
        except BudgetExhausted as exc:
            current = exc.best
            truncated = True
        dist = cfg.distance(current - image_w)
        if dist < best_dist:
            best, best_dist, stall = current, dist, 0
        else:
            stall += 1
        if trace is not None:
            trace.append((oracle.query_count - start, best_dist))
        if truncated or stall >= cfg.es:
            break
    return _finish(
        oracle,
        image_w,
        best,
        oracle.query_count - start,
        iteration,
        {"early_stopped": stall >= cfg.es, "truncated": truncated},
    )


def hopskipjump(oracle, image_w, cfg: BlackBoxConfig = BlackBoxConfig()) -> AttackResult:
    """Plain HopSkipJump: random-blend start, no early stopping, runs to the budget."""
    image_w = np.asarray(image_w, dtype=np.float64)
    start = oracle.query_count
    rng = np.random.default_rng(cfg.seed)
    if oracle.evades(image_w, "init"):
        return _finish(oracle, image_w, image_w.copy(), oracle.query_count - start, 0, {})
    current = random_init(oracle, image_w, rng)
    iteration = 0
    while oracle.query_count - start < cfg.max_q:
        iteration += 1
        try:
            current, _ = hopskipjump_step(oracle, current, image_w, cfg, iteration, rng, on_boundary=iteration > 1)
        except BudgetExhausted as exc:
            current = exc.best
            break
    return _finish(oracle, image_w, current, oracle.query_count - start, iteration, {})


def wevade_b_s(surrogate, image_w, cfg: WhiteBoxConfig = WhiteBoxConfig()) -> AttackResult:
    """White-box variant II against the attacker's own surrogate codec."""
    return wevade_w(surrogate, image_w, "II", cfg)
