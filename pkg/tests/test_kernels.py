import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nfcal import kernels

pytestmark = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not available")


def rand_c(rng, n):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


def test_near_field_agree():
    rng = np.random.default_rng(0)
    px, py = rng.normal(size=300) * 0.02, rng.normal(size=300) * 0.02
    ex, ey = rng.normal(size=64) * 0.01, rng.normal(size=64) * 0.01
    w = rand_c(rng, 64)
    a = kernels.near_field_numba(px, py, ex, ey, w, 1530.0, 0.04)
    b = kernels.near_field_numpy(px, py, ex, ey, w, 1530.0, 0.04)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(b).max())


def test_far_field_agree():
    rng = np.random.default_rng(1)
    kx, ky = rng.normal(size=500) * 800, rng.normal(size=500) * 800
    ex, ey = rng.normal(size=64) * 0.01, rng.normal(size=64) * 0.01
    w = rand_c(rng, 64)
    a = kernels.far_field_numba(kx, ky, ex, ey, w)
    b = kernels.far_field_numpy(kx, ky, ex, ey, w)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(b).max())


def test_window_sums_agree():
    rng = np.random.default_rng(2)
    amp = rng.random((40, 33))
    mask = rng.random((7, 5)) > 0.3
    assert np.allclose(kernels.window_sums_numba(amp, mask), kernels.window_sums_numpy(amp, mask),
                       rtol=1e-12)


@given(st.lists(st.floats(0, 359.9, allow_nan=False), min_size=1, max_size=30), st.floats(1, 179))
def test_prune_agree(phases, threshold):
    p = np.array(phases)
    assert np.array_equal(kernels.prune_numba(p, threshold), kernels.prune_numpy(p, threshold))


def test_env_flag_forces_numpy():
    env = dict(os.environ, NFCAL_DISABLE_NUMBA="1")
    code = "from nfcal import kernels; print(kernels.HAVE_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "False"
