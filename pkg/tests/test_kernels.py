"""Backend equivalence: the numba kernels against the numpy reference."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lieapp import _kernels as K

needs_numba = pytest.mark.skipif(K.BACKEND != "numba", reason="numba backend not active")


@needs_numba
@given(st.integers(0, 10_000), st.sampled_from([1e-3, 0.05, 1.0, 8.0]))
def test_expm_backends_agree(seed, scale):
    rng = np.random.default_rng(seed)
    A = rng.normal(scale=scale, size=(20, 6, 6))
    W = A - A.transpose(0, 2, 1)
    a = K.expm_batch_numba(W, 1e-14)
    b = K.expm_batch_numpy(W, 1e-14)
    np.testing.assert_allclose(a, b, atol=1e-13 * max(1.0, np.abs(b).max()))


@needs_numba
def test_tree_products_agree():
    rng = np.random.default_rng(1)
    n = 30
    parents = np.array([0] + list(range(n - 2)))
    children = np.arange(1, n)
    mats = rng.normal(scale=0.3, size=(n - 1, 6, 6))
    F0 = np.broadcast_to(np.eye(6), (n, 6, 6)).copy()
    for right in (True, False):
        ref = K.tree_frames_numpy(parents, children, mats, right, F0)
        np.testing.assert_allclose(K.tree_frames_numba(parents, children, mats, right, F0), ref,
                                   atol=1e-13 * np.abs(ref).max())
    V0 = np.zeros((n, 6))
    V0[0] = rng.normal(size=6)
    ref = K.tree_vectors_numpy(parents, children, mats, V0)
    np.testing.assert_allclose(K.tree_vectors_numba(parents, children, mats, V0), ref,
                               atol=1e-13 * np.abs(ref).max())


def test_env_var_selects_numpy():
    env = dict(os.environ, LIEAPP_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from lieapp import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == "numpy"
