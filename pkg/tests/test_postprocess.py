import io

import numpy as np
import pytest
from PIL import Image

from wevade.codecs.qim import DwtDctQimCodec
from wevade.detection import Detector
from wevade.errors import ImageFormatError, InfeasibleError, MonotonicityError
from wevade.imaging import from_uint8, to_uint8
from wevade.metrics import bitwise_accuracy, ssim
from wevade.postprocess import (
    PostProcessSpec,
    brightness_contrast,
    gaussian_blur,
    gaussian_noise,
    jpeg,
    tune_to_evasion,
)
from wevade.postprocess.filters import gaussian_kernel
from wevade.postprocess.jpeg import decode, encode, quality_scale, quant_tables
from wevade.postprocess.tuning import BOUNDS, scan_grid, scan_to_evasion

# ---------------------------------------------------------------- JPEG


def test_quality_scaling_rule():
    assert quality_scale(50) == 100
    assert quality_scale(10) == 500
    assert quality_scale(90) == 20
    luma, chroma = quant_tables(50)
    assert luma[0, 0] == 16 and chroma[0, 0] == 17
    luma99, _ = quant_tables(99)
    assert luma99.min() == 1
    luma1, _ = quant_tables(1)
    assert luma1.max() == 255


def test_jpeg_shape_range_and_quality(test_images):
    for img in test_images[:5]:
        out = jpeg(img, 99)
        assert out.shape == img.shape
        assert out.min() >= 0 and out.max() <= 1
        assert ssim(img, out) > 0.98
    odd = test_images[0][:37, :45]
    assert jpeg(odd, 50).shape == odd.shape


def test_jpeg_bitstream_decodes_with_pillow(test_images):
    for q in (10, 50, 95):
        img = test_images[1]
        data = encode(img, q)
        ref = from_uint8(np.asarray(Image.open(io.BytesIO(data)).convert("RGB")))
        ours = jpeg(img, q)
        # float vs integer IDCT and colour conversion differ by a couple of levels
        assert np.max(np.abs(ref - ours)) <= 3 / 255
        assert np.mean(np.abs(ref - ours)) < 0.1 / 255


def test_decoder_reads_pillow_baseline_444(test_images):
    img = to_uint8(test_images[2])
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="JPEG", quality=80, subsampling=0)
    ref = from_uint8(np.asarray(Image.open(io.BytesIO(buf.getvalue())).convert("RGB")))
    ours = decode(buf.getvalue())
    assert ours.shape == ref.shape
    assert np.max(np.abs(ours - ref)) <= 3 / 255


def test_encode_decode_round_trip_matches_coefficient_path(test_images):
    img = test_images[3]
    np.testing.assert_allclose(decode(encode(img, 70)), jpeg(img, 70), atol=1e-12)


def test_decoder_rejects_unsupported_streams(test_images):
    buf = io.BytesIO()
    Image.fromarray(to_uint8(test_images[0])).save(buf, format="JPEG", progressive=True, subsampling=0)
    with pytest.raises(ImageFormatError):
        decode(buf.getvalue())
    with pytest.raises(ImageFormatError):
        decode(b"\xff\xd8garbage")


def test_jpeg_near_idempotent(test_images):
    for img in test_images[:6]:
        once = jpeg(img, 75)
        twice = jpeg(once, 75)
        assert np.mean(np.abs(twice - once)) < 1 / 255


def test_jpeg_quality_bounds():
    with pytest.raises(ValueError):
        jpeg(np.zeros((8, 8, 3)), 0)
    with pytest.raises(ValueError):
        jpeg(np.zeros((8, 8, 3)), 100)


def test_jpeg_degrades_qim_watermark_monotonically(test_images):
    codec = DwtDctQimCodec(n=256)
    rng = np.random.default_rng(0)
    marked = []
    for img in test_images[:10]:
        w = rng.integers(0, 2, 256)
        marked.append((codec.embed(img, w), w))
    means = []
    for q in (99, 90, 70, 50, 30, 10, 1):
        means.append(np.mean([bitwise_accuracy(codec.decode(jpeg(m, q)), w) for m, w in marked]))
    # strictly monotone while the watermark survives; once it is gone the
    # accuracy wanders around 0.5 within sampling noise (sd 0.01 here)
    for a, b in zip(means, means[1:]):
        assert b <= a + (0.02 if a < 0.55 else 0.0), means
    assert abs(means[-1] - 0.5) < 0.03


# ---------------------------------------------------------------- filters


def test_noise(test_images):
    img = test_images[0]
    assert np.array_equal(gaussian_noise(img, 0.0, seed=1), img)
    assert np.array_equal(gaussian_noise(img, 0.05, seed=3), gaussian_noise(img, 0.05, seed=3))
    assert not np.array_equal(gaussian_noise(img, 0.05, seed=3), gaussian_noise(img, 0.05, seed=4))
    mid = np.full((128, 128, 3), 0.5)
    added = gaussian_noise(mid, 0.01, seed=0) - mid  # far from the clamp
    assert abs(added.mean()) < 4 * 0.01 / np.sqrt(added.size)
    assert added.std() == pytest.approx(0.01, rel=0.02)


def test_blur(test_images):
    img = test_images[0]
    assert np.array_equal(gaussian_blur(img, 0.0), img)
    const = np.full((9, 9, 3), 0.3)
    np.testing.assert_allclose(gaussian_blur(const, 1.3), 0.3, atol=1e-12)
    impulse = np.zeros((11, 11, 3))
    impulse[5, 5] = 1.0
    k = gaussian_kernel(0.8)
    assert k.shape == (5, 5) and k.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(gaussian_blur(impulse, 0.8)[3:8, 3:8, 0], k, atol=1e-12)


def test_blur_reflect_border_matches_scipy(test_images):
    from scipy.ndimage import correlate

    img = test_images[5]
    k = gaussian_kernel(1.1)
    # numpy's "reflect" padding (edge sample not repeated) is scipy's "mirror"
    ref = np.stack([correlate(img[:, :, c], k, mode="mirror") for c in range(3)], axis=2)
    np.testing.assert_allclose(gaussian_blur(img, 1.1), np.clip(ref, 0, 1), atol=1e-12)


def test_brightness_contrast():
    np.testing.assert_allclose(brightness_contrast(np.full((2, 2, 3), 0.3), 1.0), 0.5)
    assert np.all(brightness_contrast(np.full((2, 2, 3), 0.5), 2.0) == 1.0)
    np.testing.assert_allclose(brightness_contrast(np.zeros((2, 2, 3)), 3.0), 0.2)


@pytest.mark.parametrize("kind,param", [("jpeg", 40), ("gaussian-noise", 0.3), ("gaussian-blur", 2.0), ("brightness-contrast", 4.0)])
def test_range_and_shape_preserved(test_images, kind, param):
    out = PostProcessSpec(kind, param, seed=0).apply(test_images[0], 3)
    assert out.shape == test_images[0].shape
    assert out.min() >= 0 and out.max() <= 1


def test_spec_validation():
    with pytest.raises(ValueError):
        PostProcessSpec("jpeg", 50.5)
    with pytest.raises(ValueError):
        PostProcessSpec("rotate", 1)
    with pytest.raises(ValueError):
        PostProcessSpec("gaussian-noise", -0.1)


# ---------------------------------------------------------------- tuning


@pytest.fixture(scope="module")
def qim_setup(test_images):
    codec = DwtDctQimCodec(n=30)
    w = np.random.default_rng(21).integers(0, 2, 30)
    det = Detector(w, 25 / 30, "double", codec)
    return det, [codec.embed(img, w) for img in test_images]


def test_tune_zero_target_returns_least_aggressive(qim_setup):
    det, marked = qim_setup
    for kind in BOUNDS:
        res = tune_to_evasion(kind, det, marked, 0.0)
        assert res.spec.param == BOUNDS[kind][0]


def test_tune_hits_target(qim_setup):
    det, marked = qim_setup
    res = tune_to_evasion("gaussian-noise", det, marked, 0.5, tol=0.05)
    assert abs(res.rate - 0.5) <= 0.05
    assert res.mean_linf > 0


class _Always:
    def detect(self, image):
        from wevade.detection import Verdict

        return Verdict(True, 1.0)


def test_tune_infeasible_carries_best(test_images):
    with pytest.raises(InfeasibleError) as info:
        tune_to_evasion("gaussian-blur", _Always(), test_images[:2], 0.5)
    assert info.value.best.rate == 0.0
    assert info.value.best.spec.param == BOUNDS["gaussian-blur"][1]


class _Band:
    """Evades only for mean brightness in [0.45, 0.8]: not monotone in contrast."""

    def detect(self, image):
        from wevade.detection import Verdict

        return Verdict(not (0.45 <= float(image.mean()) <= 0.8), 0.0)


def test_tune_reports_non_monotone_rate():
    # levels 0.25 + 0.45 t and 0.3 + 0.9 t: both evade at t = 0.5, only one at t = 1
    images = [np.full((8, 8, 3), 0.05), np.full((8, 8, 3), 0.1)]
    with pytest.raises(MonotonicityError):
        tune_to_evasion("brightness-contrast", _Band(), images, 0.5, tol=0.0)


def test_scan_handles_non_monotone_rate():
    images = [np.full((8, 8, 3), 0.05), np.full((8, 8, 3), 0.1)]
    res = scan_to_evasion("brightness-contrast", _Band(), images, 0.5, tol=0.0)
    assert res.rate == 0.5
    # the cheapest matching setting lies in the first band, a in [2.5, 5)
    assert 2.5 <= res.spec.param < 5.0


def test_scan_grid_and_infeasible(test_images):
    assert scan_grid("jpeg") == list(range(99, 0, -1))
    assert scan_grid("gaussian-noise", 5) == [0.0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(InfeasibleError) as info:
        scan_to_evasion("gaussian-blur", _Always(), test_images[:1], 0.5, points=4)
    assert info.value.best.rate == 0.0
