"""Standard and adversarial training of the spread-spectrum codec.

Each step draws a mini-batch, gives every image a fresh random watermark,
embeds it, optionally post-processes the watermarked image, decodes and
minimises

    mean binary cross-entropy(decoded, w) + lam * mean (I_w - I)^2

over the patterns, gains and biases with Adam.  The image term is what
keeps the embedding weak; the strength the codec ends up with is the
balance between the two terms.

With ``adversarial=True`` each watermarked image is replaced by a randomly
post-processed copy before decoding.  The post-processor is treated as the
identity in the backward pass (straight-through estimator), so gradients
reach the encoder even through JPEG.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import TrainingFailure
from ..metrics import bitwise_accuracy
from .base import sigmoid
from .spread import DEFAULT_ALPHA, SpreadSpectrumCodec

ADVERSARIAL_METHODS = ("none", "jpeg", "gaussian-noise", "gaussian-blur", "brightness-contrast", "wevade-w-ii")


@dataclass(frozen=True)
class TrainConfig:
    n: int = 30
    epochs: int = 1
    batch_size: int = 32
    lr: float = 2e-3
    # per-bit log-amplitude of the patterns gets its own, larger step so the
    # embedding strength can move within a few epochs
    strength_lr: float = 2e-2
    seed: int = 0
    adversarial: bool = False
    lam: float = 200.0
    alpha: float = DEFAULT_ALPHA
    # a small cap keeps the decoder from buying confidence with gain alone,
    # so the loss acts on pattern amplitude
    gain_max: float = 0.1
    # post-processing ranges sampled during adversarial training
    jpeg_q: tuple = (10, 99)
    noise_sigma: tuple = (0.0, 0.1)
    blur_sigma: tuple = (0.0, 1.0)
    contrast_a: tuple = (1.0, 5.0)
    attack_epsilon: float = 0.01
    # a cheaper white-box attack than the evaluation default keeps training tractable
    attack_max_iter: int = 50
    attack_r_tol: float = 0.004
    attack_r_init: float = 0.25
    holdout_ba: float = 0.99

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.n < 1:
            raise ValueError("epochs must be >= 0, batch_size and n >= 1")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class TrainReport:
    steps: int = 0
    losses: list = field(default_factory=list)
    holdout_ba: float = math.nan


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lrs = list(lr) if isinstance(lr, (list, tuple)) else [lr] * len(params)
        self.b1, self.b2, self.eps = b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v, lr in zip(params, grads, self.m, self.v, self.lrs):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def sample_postprocess(rng, cfg: TrainConfig):
    """Draw one (method, parameter) pair for adversarial training."""
    method = ADVERSARIAL_METHODS[rng.integers(len(ADVERSARIAL_METHODS))]
    if method == "jpeg":
        return method, int(rng.integers(cfg.jpeg_q[0], cfg.jpeg_q[1] + 1))
    if method == "gaussian-noise":
        return method, float(rng.uniform(*cfg.noise_sigma))
    if method == "gaussian-blur":
        return method, float(rng.uniform(*cfg.blur_sigma))
    if method == "brightness-contrast":
        return method, float(rng.uniform(*cfg.contrast_a))
    if method == "wevade-w-ii":
        return method, cfg.attack_epsilon
    return method, 0.0


def apply_postprocess(codec, image, method, param, cfg: TrainConfig, seed):
    from ..postprocess import brightness_contrast, gaussian_blur, gaussian_noise, jpeg

    if method == "none":
        return image
    if method == "jpeg":
        return jpeg(image, int(param))
    if method == "gaussian-noise":
        return gaussian_noise(image, param, seed=seed)
    if method == "gaussian-blur":
        return gaussian_blur(image, param)
    if method == "brightness-contrast":
        return brightness_contrast(image, param)
    from ..whitebox import WhiteBoxConfig, wevade_w

    wcfg = WhiteBoxConfig(
        max_iter=cfg.attack_max_iter,
        epsilon=param,
        r_init=cfg.attack_r_init,
        r_tol=cfg.attack_r_tol,
        seed=seed,
    )
    return wevade_w(codec, image, "II", wcfg).image


def holdout_accuracy(codec, images, seed: int = 0) -> float:
    rng = np.random.default_rng([seed, 0xBA])
    scores = []
    for img in images:
        w = rng.integers(0, 2, size=codec.n, dtype=np.uint8)
        scores.append(bitwise_accuracy(codec.decode(codec.embed(img, w)), w))
    return float(np.mean(scores)) if scores else math.nan


def train(dataset, cfg: TrainConfig = TrainConfig(), holdout=None, init=None, hook=None, check: bool = True):
    """Train a spread-spectrum codec on ``dataset`` (indexable image collection).

    ``hook(step, info)`` is called once per mini-batch with the clean,
    watermarked and decoder-input images and the gradient that reached the
    watermarked images.  With ``check`` and a ``holdout`` set, a standard
    run whose held-out round-trip accuracy stays below ``cfg.holdout_ba``
    raises ``TrainingFailure`` carrying the codec.
    """
    if len(dataset) < 1:
        raise ValueError("empty training set")
    first = np.asarray(dataset[0], dtype=np.float64)
    shape = first.shape
    codec = init if init is not None else SpreadSpectrumCodec.random(cfg.n, shape, seed=cfg.seed, alpha=cfg.alpha)
    if codec.n != cfg.n or codec.image_shape != shape:
        raise ValueError("initial codec does not match the configuration")
    # work on copies so a passed-in codec stays untouched
    # patterns are parametrised as exp(log_amp) * U
    U = codec.patterns.reshape(cfg.n, -1).copy()
    log_amp = np.zeros(cfg.n)
    P = U.copy()
    g = codec.gains.copy()
    b = codec.biases.copy()
    alpha = codec.alpha
    d = P.shape[1]
    opt = _Adam([U, log_amp, g, b], [cfg.lr, cfg.strength_lr, cfg.lr, cfg.lr])
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7A11]))
    report = TrainReport()
    live = SpreadSpectrumCodec(P.reshape((cfg.n,) + shape), g, b, alpha=alpha)

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            bsz = len(idx)
            clean = np.stack([np.asarray(dataset[int(i)], dtype=np.float64).reshape(-1) for i in idx])
            W = rng.integers(0, 2, size=(bsz, cfg.n)).astype(np.float64)
            S = 2.0 * W - 1.0
            X = clean + alpha * (S @ P)
            mask = (X > 0.0) & (X < 1.0)
            Iw = np.clip(X, 0.0, 1.0)
            if cfg.adversarial:
                live.patterns, live._flat = P.reshape((cfg.n,) + shape), P
                live.gains, live.biases = g, b
                Y = np.empty_like(Iw)
                for k in range(bsz):
                    method, param = sample_postprocess(rng, cfg)
                    pseed = [cfg.seed, report.steps, k]
                    Y[k] = apply_postprocess(live, Iw[k].reshape(shape), method, param, cfg, pseed).reshape(-1)
            else:
                Y = Iw
            A = Y @ P.T
            z = g * A + b
            F = sigmoid(z)
            Fc = np.clip(F, 1e-12, 1 - 1e-12)
            bce = -np.mean(W * np.log(Fc) + (1 - W) * np.log(1 - Fc))
            resid = Iw - clean
            img_loss = cfg.lam * np.mean(resid * resid)
            dz = (F - W) / (bsz * cfg.n)
            dg = np.sum(dz * A, axis=0)
            db = np.sum(dz, axis=0)
            dA = dz * g
            dP = dA.T @ Y
            # straight-through: d loss / d Iw equals d loss / d Y
            dIw = dA @ P + (2.0 * cfg.lam / (bsz * d)) * resid
            dP += alpha * (S.T @ (dIw * mask))
            if hook is not None:
                hook(
                    report.steps,
                    {
                        "clean": clean.reshape((bsz,) + shape),
                        "watermarked": Iw.reshape((bsz,) + shape),
                        "decoder_input": Y.reshape((bsz,) + shape),
                        "grad_watermarked": dIw.reshape((bsz,) + shape),
                        "grad_decoder_input": (dA @ P).reshape((bsz,) + shape),
                    },
                )
            amp = np.exp(log_amp)[:, None]
            opt.step([U, log_amp, g, b], [amp * dP, np.sum(dP * P, axis=1), dg, db])
            P = np.exp(log_amp)[:, None] * U
            np.clip(g, -cfg.gain_max, cfg.gain_max, out=g)
            report.steps += 1
            report.losses.append(float(bce + img_loss))

    out = SpreadSpectrumCodec(
        P.reshape((cfg.n,) + shape).copy(), g.copy(), b.copy(), alpha=alpha, seed=cfg.seed, train_config=cfg.to_dict()
    )
    if holdout is not None:
        report.holdout_ba = holdout_accuracy(out, holdout, cfg.seed)
        if check and not cfg.adversarial and cfg.epochs > 0 and report.holdout_ba < cfg.holdout_ba:
            raise TrainingFailure(
                f"held-out round-trip accuracy {report.holdout_ba:.4f} below {cfg.holdout_ba}",
                codec=out,
                accuracy=report.holdout_ba,
            )
    out.report = report
    return out
