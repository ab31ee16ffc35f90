import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lieapp import pseudo_euclidean as pe
from lieapp.config import DegeneratePairError, GridShapeError, ParameterError
from lieapp.forms import EdgeForm, GridShape

vec = arrays(np.float64, 6, elements=st.floats(-3, 3))
e = pe.basis


def random_null(rng):
    a = rng.normal(size=4)
    b = rng.normal(size=2)
    return np.concatenate([a, b * np.linalg.norm(a) / np.linalg.norm(b)])


def test_metric_and_symmetry_breaking_vectors():
    assert pe.norm2(pe.P_SPHERE) == -1.0
    assert pe.norm2(pe.Q_INF) == 0.0
    assert pe.inner(pe.Q_ORIGIN, pe.Q_INF) == -1.0
    assert pe.norm2(pe.Q_ORIGIN) == 0.0


def test_wedge_examples():
    np.testing.assert_array_equal(pe.apply(pe.wedge(e(1), e(5)), e(5)), e(1))
    np.testing.assert_array_equal(pe.apply(pe.wedge(e(1), e(2)), e(1)), e(2))
    assert not np.any(pe.wedge(e(3), e(3)))


@given(vec, vec, vec)
def test_wedge_antisymmetric_and_skew(a, b, c):
    W = pe.wedge(a, b)
    np.testing.assert_allclose(pe.apply(W, c) + pe.apply(pe.wedge(b, a), c), 0, atol=1e-12)
    assert np.max(np.abs(pe.skew_residual(W))) < 1e-11


def test_classify():
    assert pe.classify(e(1)) == "spacelike"
    assert pe.classify(e(5)) == "timelike"
    assert pe.classify(pe.Q_INF) == "null"


def test_exp_skew_zero_and_nilpotent():
    np.testing.assert_array_equal(pe.exp_skew(np.zeros((6, 6))), np.eye(6))
    f = pe.Q_ORIGIN + 0.5 * pe.Q_INF + e(1)  # lift of (1, 0, 0)
    t = e(3) + pe.P_SPHERE  # tangent plane z = 0 at that point
    W = pe.wedge(f, t)
    assert np.max(np.abs(W @ W)) == 0.0
    np.testing.assert_array_equal(pe.exp_skew(W), np.eye(6) + W)


def test_exp_skew_rotation_block():
    th = 0.7
    R = pe.exp_skew(th * pe.wedge(e(1), e(2)))
    # wedge(e1, e2) sends e1 to e2, so the block is a rotation by +th
    block = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    np.testing.assert_allclose(R[:2, :2], block, atol=1e-14)
    np.testing.assert_allclose(R[2:, 2:], np.eye(4), atol=1e-14)


@given(arrays(np.float64, (6, 6), elements=st.floats(-1, 1)), st.floats(0.0, 10.0))
def test_exp_skew_orthogonal_and_matches_scipy(A, size):
    M = A - A.T  # Euclidean skew; metric skew is M G
    W = M @ pe.G
    nrm = np.linalg.norm(W, 2)
    if nrm > 0:
        W = W * (size / nrm)
    T = pe.exp_skew(W)
    assert np.max(pe.orthogonality_residual(T)) < 1e-12 * max(1.0, np.max(np.abs(T)) ** 2)
    ref = scipy.linalg.expm(W)
    np.testing.assert_allclose(T, ref, atol=1e-12 * max(1.0, np.max(np.abs(ref))))


def test_gamma_transform_examples():
    rng = np.random.default_rng(3)
    v, w = random_null(rng), random_null(rng)
    np.testing.assert_allclose(pe.gamma_transform(v, w, 1.0), np.eye(6), atol=1e-15)
    A = pe.gamma_transform(v, w, 2.5)
    np.testing.assert_allclose(A @ pe.gamma_transform(v, w, 1 / 2.5), np.eye(6), atol=1e-12)
    np.testing.assert_allclose(A @ v, 2.5 * v, atol=1e-12)
    np.testing.assert_allclose(A @ w, w / 2.5, atol=1e-12)


def test_gamma_transform_errors():
    with pytest.raises(ParameterError):
        pe.gamma_transform(pe.Q_INF, pe.Q_ORIGIN, 0.0)
    with pytest.raises(DegeneratePairError):
        pe.gamma_transform(pe.Q_INF, pe.Q_INF, 2.0)


@given(st.integers(0, 10_000), st.floats(0.1, 5.0), vec)
def test_gamma_transform_orthogonal_fixes_complement(seed, t, u):
    rng = np.random.default_rng(seed)
    v, w = random_null(rng), random_null(rng)
    if abs(pe.inner(v, w)) < 1e-3:
        return
    A = pe.gamma_transform(v, w, t)
    assert np.max(np.abs(pe.orthogonality_residual(A))) < 1e-11 * max(t, 1 / t) ** 2
    # project u onto <v, w>^perp
    P = pe.projector(np.stack([v, w], -1))
    u = u - P @ u
    np.testing.assert_allclose(A @ u, u, atol=1e-9 * (1 + np.abs(u).max()) * max(t, 1 / t))


@given(st.integers(0, 10_000), vec, vec)
def test_inner_invariant_under_frames(seed, a, b):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(6, 6))
    T = pe.exp_skew((M - M.T) @ pe.G * 0.5)
    assert abs(pe.inner(T @ a, T @ b) - pe.inner(a, b)) < 1e-9 * (1 + np.abs(T).max() ** 2 * 36)


def test_curly_wedge():
    s = GridShape(6, 5, 0.1, 0.2)
    const = EdgeForm.exact(s, np.broadcast_to(e(1), (6, 5, 6)))
    assert not np.any(pe.curly_wedge(const, const))
    w1 = EdgeForm.from_nodes(s, np.broadcast_to(e(1), (6, 5, 6)), np.zeros((6, 5, 6)))
    w2 = EdgeForm.from_nodes(s, np.zeros((6, 5, 6)), np.broadcast_to(e(2), (6, 5, 6)))
    cw = pe.curly_wedge(w1, w2)
    np.testing.assert_allclose(cw, np.broadcast_to(pe.wedge(e(1), e(2)), cw.shape), atol=1e-15)
    np.testing.assert_allclose(cw - pe.curly_wedge(w2, w1), 0, atol=1e-15)
    with pytest.raises(GridShapeError):
        pe.curly_wedge(w1, EdgeForm.zeros(GridShape(5, 5, 0.1, 0.2), (6,)))


def test_signature_of():
    assert pe.signature_of(pe.G) == (4, 2)
