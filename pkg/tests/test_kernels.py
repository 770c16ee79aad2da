import os
import subprocess
import sys

import numpy as np
import pytest

from wevade import _kernels as K
from wevade.postprocess.jpeg import decode, encode

needs_numba = pytest.mark.skipif(K.numba is None, reason="numba not installed")


@needs_numba
def test_resize_backends_agree(rng):
    img = rng.random((37, 53, 3))
    for h, w in [(128, 128), (10, 7), (37, 53)]:
        np.testing.assert_allclose(K.resize_bilinear_numba(img, h, w), K.resize_bilinear_numpy(img, h, w), atol=1e-12)


@needs_numba
def test_correlate_backends_agree(rng):
    img = rng.random((19, 23, 3))
    k = rng.random((5, 5))
    np.testing.assert_allclose(K.correlate_reflect_numba(img, k), K.correlate_reflect_numpy(img, k), atol=1e-12)


@needs_numba
def test_filter_valid_backends_agree(rng):
    plane = rng.random((30, 41))
    g = rng.random(11)
    np.testing.assert_allclose(K.filter_valid_numba(plane, g), K.filter_valid_numpy(plane, g), atol=1e-12)


def test_huffman_python_and_compiled_agree(test_images):
    data = encode(test_images[0], 60)
    saved = K.USE_NUMBA
    try:
        K.USE_NUMBA = False
        slow = encode(test_images[0], 60)
        slow_img = decode(data)
    finally:
        K.USE_NUMBA = saved
    assert slow == data
    np.testing.assert_array_equal(slow_img, decode(data))


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_backend_selected_by_environment(backend):
    env = dict(os.environ, WEVADE_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", "from wevade import _kernels as K; print(K.BACKEND, K.USE_NUMBA)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    ).stdout.split()
    assert out[0] == backend
    assert out[1] == str(backend == "numba" and K.numba is not None)


def test_unknown_backend_rejected():
    env = dict(os.environ, WEVADE_BACKEND="cuda")
    proc = subprocess.run([sys.executable, "-c", "import wevade._kernels"], env=env, capture_output=True, text=True)
    assert proc.returncode != 0 and "WEVADE_BACKEND" in proc.stderr
