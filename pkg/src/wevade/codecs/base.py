"""The codec contract shared by every watermark embedder/decoder."""

import json
from pathlib import Path

import numpy as np

from ..errors import DimensionError
from ..losses import loss_and_grad
from ..metrics import as_watermark

MODEL_FORMAT = "wevade-codec"
MODEL_VERSION = 1


def decode_bits(soft) -> np.ndarray:
    """Threshold soft bits: bit i is 1 iff ``soft[i] > 0.5``."""
    return (np.asarray(soft, dtype=np.float64) > 0.5).astype(np.uint8)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Codec:
    """Embed/decode pair with a differentiable soft-bit map.

    Subclasses implement ``embed``, ``_forward`` (soft bits plus a
    vector-Jacobian product back to pixels) and ``to_dict``.
    """

    kind = "abstract"
    n: int

    def embed(self, image, w):
        raise NotImplementedError

    def _forward(self, image):
        raise NotImplementedError

    def decode_soft(self, image) -> np.ndarray:
        return self._forward(image)[0]

    def decode(self, image) -> np.ndarray:
        return decode_bits(self.decode_soft(image))

    def grad_loss(self, image, target, loss: str = "l2"):
        """Loss of the decoded soft bits against ``target`` and its pixel gradient."""
        target = np.asarray(target)
        if target.shape != (self.n,):
            raise DimensionError(f"target has {target.size} bits, codec decodes {self.n}")
        soft, vjp = self._forward(image)
        value, dsoft = loss_and_grad(soft, target, loss)
        return value, vjp(dsoft)

    def _check_bits(self, w) -> np.ndarray:
        w = as_watermark(w)
        if w.size != self.n:
            raise DimensionError(f"watermark has {w.size} bits, codec expects {self.n}")
        return w

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        raise NotImplementedError

    def save(self, path) -> None:
        doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, **self.to_dict()}
        Path(path).write_text(dumps(doc) + "\n")


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not np.isfinite(x):
            raise ValueError("non-finite float in model document")
        s = format(x, ".17g")
        # keep floats recognisable as floats on reload
        if "e" not in s and "." not in s and "inf" not in s and "nan" not in s:
            s += ".0"
        return s
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, np.ndarray):
        return _fmt(x.tolist())
    if isinstance(x, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in x) + "]"
    if isinstance(x, dict):
        items = sorted(x.items())
        return "{" + ",".join(json.dumps(str(k)) + ":" + _fmt(v) for k, v in items) + "}"
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps(doc) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits."""
    return _fmt(doc)


def load_codec(path) -> Codec:
    doc = json.loads(Path(path).read_text())
    return codec_from_dict(doc)


def codec_from_dict(doc: dict) -> Codec:
    if doc.get("format", MODEL_FORMAT) != MODEL_FORMAT:
        raise ValueError(f"not a codec model document: {doc.get('format')!r}")
    if int(doc.get("version", MODEL_VERSION)) > MODEL_VERSION:
        raise ValueError(f"codec model version {doc['version']} is newer than supported")
    kind = doc["kind"]
    if kind == "dwt-dct-qim":
        from .qim import DwtDctQimCodec

        return DwtDctQimCodec.from_dict(doc)
    if kind == "spread-spectrum":
        from .spread import SpreadSpectrumCodec

        return SpreadSpectrumCodec.from_dict(doc)
    raise ValueError(f"unknown codec kind {kind!r}")
