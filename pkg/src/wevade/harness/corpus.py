"""Image collections: directory ingestion and a seeded synthetic photo corpus.

The synthetic corpus draws random crops of the sample photographs shipped
with scikit-image and scikit-learn, applies flips and mild colour jitter and
resizes them to the working size.  Image ``i`` of stream ``s`` is a pure
function of ``(seed, s, i)``, so training and test streams never overlap
and any image can be regenerated on its own.
"""

from functools import lru_cache
from pathlib import Path

import numpy as np

from ..errors import ImageFormatError, IngestionError
from ..imaging import load_image, resize, save_image

IMAGE_SIZE = 128
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

TRAIN_STREAM = 0
TEST_STREAM = 1

_COLOR = ("astronaut", "coffee", "chelsea", "rocket", "hubble_deep_field", "immunohistochemistry", "retina")
_GRAY = ("camera", "coins", "moon", "grass", "gravel", "brick", "clock", "cell")
_MAX_SIDE = 512


def _shrink(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    scale = _MAX_SIDE / max(h, w)
    if scale >= 1.0:
        return img
    return resize(img, max(1, round(h * scale)), max(1, round(w * scale)))


@lru_cache(maxsize=1)
def source_photos() -> tuple:
    """The base photographs as float RGB arrays (grayscale ones replicated)."""
    import skimage.data
    from sklearn.datasets import load_sample_images

    out = []
    for name in _COLOR:
        out.append(np.asarray(getattr(skimage.data, name)(), dtype=np.float64)[:, :, :3] / 255.0)
    for arr in load_sample_images().images:
        out.append(np.asarray(arr, dtype=np.float64) / 255.0)
    for name in _GRAY:
        g = np.asarray(getattr(skimage.data, name)(), dtype=np.float64) / 255.0
        out.append(np.repeat(g[:, :, None], 3, axis=2))
    photos = tuple(_shrink(p) for p in out)
    for p in photos:
        p.setflags(write=False)
    return photos


def synthetic_image(index: int, seed: int = 0, stream: int = TRAIN_STREAM, size: int = IMAGE_SIZE) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, stream, index]))
    photos = source_photos()
    src = photos[rng.integers(len(photos))]
    h, w = src.shape[:2]
    side = int(rng.integers(min(96, h, w), min(h, w) + 1))
    y = int(rng.integers(0, h - side + 1))
    x = int(rng.integers(0, w - side + 1))
    img = resize(src[y : y + side, x : x + side], size, size)
    if rng.random() < 0.5:
        img = img[:, ::-1]
    gain = rng.uniform(0.85, 1.15) * rng.uniform(0.92, 1.08, size=3)
    gamma = rng.uniform(0.8, 1.25)
    img = np.clip(img, 0.0, 1.0) ** gamma * gain
    return np.ascontiguousarray(np.clip(img, 0.0, 1.0))


class SyntheticCorpus:
    """Lazy, indexable view of one synthetic stream."""

    def __init__(self, count: int, seed: int = 0, stream: int = TRAIN_STREAM, size: int = IMAGE_SIZE):
        if count < 0:
            raise ValueError("count must be nonnegative")
        self.count = count
        self.seed = seed
        self.stream = stream
        self.size = size

    def __len__(self):
        return self.count

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(self.count))]
        if not (0 <= i < self.count):
            raise IndexError(i)
        return synthetic_image(i, self.seed, self.stream, self.size)

    def __iter__(self):
        for i in range(self.count):
            yield self[i]


def write_synthetic(directory, count: int, seed: int = 0, stream: int = TEST_STREAM, size: int = IMAGE_SIZE):
    """Materialise ``count`` synthetic images as PNG files; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        p = directory / f"img_{i:05d}.png"
        save_image(synthetic_image(i, seed, stream, size), p)
        paths.append(p)
    return paths


def list_images(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise IngestionError(f"{directory} is not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())


def ingest(directory, count: int, seed: int = 0, size: int = IMAGE_SIZE):
    """Seeded sample of ``count`` images from ``directory``, resized to ``size``.

    Returns ``(ids, images)`` where ids are file names.  Files that fail to
    decode are skipped; too few usable files raises an ingestion error.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return [], []
    paths = list_images(directory)
    order = np.random.default_rng(seed).permutation(len(paths))
    ids, images = [], []
    for k in order:
        try:
            img = load_image(paths[k])
        except (ImageFormatError, OSError):
            continue
        ids.append(paths[k].name)
        images.append(resize(img, size, size))
        if len(images) == count:
            return ids, images
    raise IngestionError(f"{directory} holds {len(images)} usable images, need {count}")
