"""Distances between decoder soft bits and a target bitstring, with exact gradients."""

import numpy as np

from .errors import DimensionError

LOSSES = ("l2", "l1", "neg-cosine", "cross-entropy")
CE_CLAMP = 1e-12


def loss_and_grad(soft, target, kind: str = "l2"):
    """Return ``(loss, d loss / d soft)`` for one of the four supported losses.

    ``soft`` holds the decoder's pre-threshold outputs in (0, 1) and
    ``target`` the desired bits.
    """
    f = np.asarray(soft, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if f.shape != t.shape:
        raise DimensionError(f"soft bits {f.shape} vs target {t.shape}")
    if kind == "l2":
        d = f - t
        return float(np.sum(d * d)), 2.0 * d
    if kind == "l1":
        d = f - t
        return float(np.sum(np.abs(d))), np.sign(d)
    if kind == "neg-cosine":
        nf = float(np.linalg.norm(f))
        nt = float(np.linalg.norm(t))
        if nf == 0.0 or nt == 0.0:
            # cosine undefined; treat as orthogonal with no descent direction
            return 1.0, np.zeros_like(f)
        dot = float(f @ t)
        cos = dot / (nf * nt)
        dcos = t / (nf * nt) - dot * f / (nf**3 * nt)
        return 1.0 - cos, -dcos
    if kind == "cross-entropy":
        fc = np.clip(f, CE_CLAMP, 1.0 - CE_CLAMP)
        loss = -np.sum(t * np.log(fc) + (1.0 - t) * np.log(1.0 - fc))
        return float(loss), -t / fc + (1.0 - t) / (1.0 - fc)
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSSES}")
