import numpy as np
import pytest

from wevade.blackbox import (
    JPEG_QUALITIES,
    BlackBoxConfig,
    DetectorOracle,
    hopskipjump,
    hopskipjump_step,
    jpeg_init,
    random_init,
    wevade_b_q,
    wevade_b_s,
)
from wevade.codecs.qim import DwtDctQimCodec
from wevade.detection import Detector, Verdict
from wevade.errors import BudgetExhausted, InitializationError
from wevade.postprocess import jpeg
from wevade.whitebox import WhiteBoxConfig, wevade_w


class Halfspace:
    """Flags x when a . x > c."""

    def __init__(self, a, c):
        self.a, self.c = a, c

    def detect(self, image):
        return Verdict(bool(np.sum(self.a * image) > self.c), 0.0)


class Constant:
    def __init__(self, flag):
        self.flag = flag

    def detect(self, image):
        return Verdict(self.flag, 0.0)


class RejectJpeg:
    """Flags everything except images far from the watermarked one."""

    def __init__(self, image_w):
        self.image_w = image_w

    def detect(self, image):
        return Verdict(bool(np.mean(np.abs(image - self.image_w)) < 0.2), 0.0)


@pytest.fixture
def halfspace():
    a = np.array([1.0, -0.5, 2.0, 0.7]).reshape(2, 2, 1)
    image_w = np.array([0.6, 0.3, 0.7, 0.5]).reshape(2, 2, 1)
    margin = 0.3
    c = float(np.sum(a * image_w)) - margin
    # closest evading point in L-infinity
    proj = image_w - margin / np.abs(a).sum() * np.sign(a)
    return Halfspace(a, c), image_w, proj


@pytest.fixture(scope="module")
def qim_target(test_images):
    codec = DwtDctQimCodec(n=256)
    w = np.random.default_rng(77).integers(0, 2, 256)
    det = Detector(w, 159 / 256, "double", codec)
    return det, [codec.embed(img, w) for img in test_images[:4]]


def test_halfspace_converges_to_projection(halfspace):
    det, image_w, proj = halfspace
    oracle = DetectorOracle(det)
    rng = np.random.default_rng(0)
    current = random_init(oracle, image_w, rng)
    cfg = BlackBoxConfig()
    for it in range(1, 31):
        before = oracle.query_count
        current, used = hopskipjump_step(oracle, current, image_w, cfg, it, rng, on_boundary=it > 1)
        assert used == oracle.query_count - before
        assert not det.detect(current).ai_generated
    assert np.max(np.abs(current - proj)) <= 0.01


def test_jpeg_init_immediate_success(test_images):
    oracle = DetectorOracle(Constant(False))
    cand, queries = jpeg_init(oracle, test_images[0])
    assert queries == 1
    np.testing.assert_array_equal(cand, jpeg(test_images[0], 99))


def test_jpeg_init_falls_back_to_random_blend(test_images):
    image_w = test_images[0]
    oracle = DetectorOracle(RejectJpeg(image_w))
    cand, queries = jpeg_init(oracle, image_w, np.random.default_rng(1))
    phases = [p for _, _, p in oracle.log]
    assert all(p == "init" for p in phases)
    assert queries > len(JPEG_QUALITIES)
    # the seven JPEG candidates come first and are all rejected
    assert [v for _, v, _ in oracle.log[: len(JPEG_QUALITIES)]] == [True] * len(JPEG_QUALITIES)
    assert not RejectJpeg(image_w).detect(cand).ai_generated


def test_random_init_gives_up(test_images):
    oracle = DetectorOracle(Constant(True))
    with pytest.raises(InitializationError):
        jpeg_init(oracle, test_images[0])
    assert oracle.query_count == len(JPEG_QUALITIES) + 256


def test_nothing_to_do_when_already_evading(test_images):
    oracle = DetectorOracle(Constant(False))
    res = wevade_b_q(oracle, test_images[0])
    assert res.queries == 1 and res.linf == 0.0
    np.testing.assert_array_equal(res.image, test_images[0])


def test_wevade_b_q_evades_and_logs(qim_target):
    det, marked = qim_target
    cfg = BlackBoxConfig(max_q=400)
    oracle = DetectorOracle(det)
    res = wevade_b_q(oracle, marked[0], cfg)
    assert res.constraint_satisfied
    assert not det.detect(res.image).ai_generated
    assert res.queries == oracle.query_count == len(oracle.log)
    assert [i for i, _, _ in oracle.log] == list(range(oracle.query_count))
    assert {p for _, _, p in oracle.log} <= {"init", "bisect", "probe", "step"}
    # the budget is checked between iterations, so one iteration may run over
    assert res.queries <= cfg.max_q + 220 + 2 * 11 + 25


def test_budget_traces_are_monotone(qim_target):
    det, marked = qim_target
    trace = []
    wevade_b_q(DetectorOracle(det), marked[1], BlackBoxConfig(max_q=600, es=50), trace=trace)
    dists = [d for _, d in trace]
    assert all(b <= a for a, b in zip(dists, dists[1:]))
    assert trace[-1][1] < trace[0][1] or len(trace) == 1


def test_deterministic_given_seed(qim_target):
    det, marked = qim_target
    cfg = BlackBoxConfig(max_q=200, seed=5)
    o1, o2 = DetectorOracle(det), DetectorOracle(det)
    a = wevade_b_q(o1, marked[2], cfg)
    b = wevade_b_q(o2, marked[2], cfg)
    assert a.image.tobytes() == b.image.tobytes()
    assert o1.log == o2.log


def test_hard_limit_returns_best_point(qim_target):
    det, marked = qim_target
    oracle = DetectorOracle(det, limit=150)
    res = wevade_b_q(oracle, marked[3], BlackBoxConfig(max_q=10_000))
    assert res.info["truncated"]
    assert oracle.query_count == 150
    assert not det.detect(res.image).ai_generated


def test_oracle_limit_raises():
    oracle = DetectorOracle(Constant(True), limit=2)
    oracle.query(np.zeros((1, 1, 3)))
    oracle.query(np.zeros((1, 1, 3)))
    with pytest.raises(BudgetExhausted):
        oracle.query(np.zeros((1, 1, 3)))


def test_plain_hopskipjump_runs_to_budget(halfspace):
    det, image_w, _ = halfspace
    oracle = DetectorOracle(det)
    res = hopskipjump(oracle, image_w, BlackBoxConfig(max_q=300))
    assert res.queries >= 300
    assert not det.detect(res.image).ai_generated


def test_l2_switch():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(2, 2, 3))
    image_w = rng.uniform(0.3, 0.7, size=(2, 2, 3))
    det = Halfspace(a, float(np.sum(a * image_w)) - 0.3)
    res = wevade_b_q(DetectorOracle(det), image_w, BlackBoxConfig(max_q=300, norm="l2"))
    assert not det.detect(res.image).ai_generated
    with pytest.raises(ValueError):
        BlackBoxConfig(norm="l1")


def test_surrogate_equal_to_target_matches_whitebox(qim_target):
    det, marked = qim_target
    cfg = WhiteBoxConfig(max_iter=200, seed=3)
    a = wevade_b_s(det.codec, marked[0], cfg)
    b = wevade_w(det.codec, marked[0], "II", cfg)
    assert a.image.tobytes() == b.image.tobytes()
