"""Hot loops: batched matrix exponential and spanning-tree products.

Each kernel has a numba version and a plain numpy version with identical
semantics. Setting LIEAPP_DISABLE_NUMBA=1 (or having numba unavailable)
selects the numpy path; ``BACKEND`` tells which one is live.
"""
from __future__ import annotations

import math
import os

import numpy as np

TAYLOR_ORDER = 18
SCALE_TARGET = 0.5

_disabled = os.environ.get("LIEAPP_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    from numba import njit
except ImportError:  # pragma: no cover - depends on environment
    njit = None


# ---------------------------------------------------------------- numpy path

def expm_batch_numpy(W: np.ndarray, tol: float) -> np.ndarray:
    k, d, _ = W.shape
    out = np.empty_like(W)
    eye = np.eye(d)
    W2 = W @ W
    nil = np.max(np.abs(W2), axis=(1, 2)) < tol
    out[nil] = eye + W[nil]
    rest = ~nil
    if not np.any(rest):
        return out
    A = W[rest]
    nrm = np.max(np.sum(np.abs(A), axis=1), axis=1)
    s = np.maximum(0, np.ceil(np.log2(np.maximum(nrm, 1e-300) / SCALE_TARGET))).astype(int)
    A = A / (2.0 ** s)[:, None, None]
    # Horner form of the truncated series
    E = eye + A / TAYLOR_ORDER
    for j in range(TAYLOR_ORDER - 1, 0, -1):
        E = eye + (A @ E) / j
    for smax in range(int(s.max()) if s.size else 0):
        sel = s > smax
        E[sel] = E[sel] @ E[sel]
    out[rest] = E
    return out


def tree_frames_numpy(parents, children, mats, right, F0):
    """F[child] = F[parent] @ M (right=True) or M @ F[parent]."""
    F = F0.copy()
    for p, c, M in zip(parents, children, mats):
        F[c] = F[p] @ M if right else M @ F[p]
    return F


def tree_vectors_numpy(parents, children, mats, V0):
    V = V0.copy()
    for p, c, M in zip(parents, children, mats):
        V[c] = M @ V[p]
    return V


# ---------------------------------------------------------------- numba path

if njit is not None:

    @njit(cache=True)
    def _matmul_into(A, B, C):
        d = A.shape[0]
        for i in range(d):
            for j in range(d):
                acc = 0.0
                for k in range(d):
                    acc += A[i, k] * B[k, j]
                C[i, j] = acc

    @njit(cache=True)
    def _expm_one(A, out, tol, order, target, B, E, T):
        d = A.shape[0]
        _matmul_into(A, A, T)
        m2 = 0.0
        for i in range(d):
            for j in range(d):
                if abs(T[i, j]) > m2:
                    m2 = abs(T[i, j])
        if m2 < tol:
            for i in range(d):
                for j in range(d):
                    out[i, j] = A[i, j] + (1.0 if i == j else 0.0)
            return
        nrm = 0.0
        for j in range(d):
            c = 0.0
            for i in range(d):
                c += abs(A[i, j])
            if c > nrm:
                nrm = c
        s = 0
        if nrm > target:
            s = int(math.ceil(math.log2(nrm / target)))
        scale = 2.0 ** s
        # shortest truncation whose remainder bound sits below rounding
        b = nrm / scale
        term = b
        n_terms = 1
        while n_terms < order and term > 1e-17:
            n_terms += 1
            term *= b / n_terms
        order = n_terms
        for i in range(d):
            for j in range(d):
                B[i, j] = A[i, j] / scale
                E[i, j] = B[i, j] / order + (1.0 if i == j else 0.0)
        # Horner: E <- I + B E / j
        for k in range(order - 1, 0, -1):
            _matmul_into(B, E, T)
            for i in range(d):
                for j in range(d):
                    E[i, j] = T[i, j] / k + (1.0 if i == j else 0.0)
        for _ in range(s):
            _matmul_into(E, E, T)
            E[:, :] = T
        out[:, :] = E

    @njit(cache=True)
    def expm_batch_numba(W, tol):
        out = np.empty_like(W)
        d = W.shape[1]
        B = np.empty((d, d))
        E = np.empty((d, d))
        T = np.empty((d, d))
        for k in range(W.shape[0]):
            _expm_one(W[k], out[k], tol, TAYLOR_ORDER, SCALE_TARGET, B, E, T)
        return out

    @njit(cache=True)
    def tree_frames_numba(parents, children, mats, right, F0):
        F = F0.copy()
        for e in range(parents.shape[0]):
            if right:
                _matmul_into(F[parents[e]], mats[e], F[children[e]])
            else:
                _matmul_into(mats[e], F[parents[e]], F[children[e]])
        return F

    @njit(cache=True)
    def tree_vectors_numba(parents, children, mats, V0):
        V = V0.copy()
        d = mats.shape[1]
        for e in range(parents.shape[0]):
            M, src, dst = mats[e], V[parents[e]], V[children[e]]
            for i in range(d):
                acc = 0.0
                for k in range(d):
                    acc += M[i, k] * src[k]
                dst[i] = acc
        return V

    BACKEND = "numba"
else:
    BACKEND = "numpy"


def expm_batch(W: np.ndarray, tol: float) -> np.ndarray:
    W = np.ascontiguousarray(W, dtype=np.float64)
    if BACKEND == "numba":
        return expm_batch_numba(W, float(tol))
    return expm_batch_numpy(W, tol)


def tree_frames(parents, children, mats, right, F0):
    args = (
        np.ascontiguousarray(parents, dtype=np.int64),
        np.ascontiguousarray(children, dtype=np.int64),
        np.ascontiguousarray(mats, dtype=np.float64),
    )
    if BACKEND == "numba":
        return tree_frames_numba(*args, bool(right), np.ascontiguousarray(F0, dtype=np.float64))
    return tree_frames_numpy(*args, right, F0)


def tree_vectors(parents, children, mats, V0):
    args = (
        np.ascontiguousarray(parents, dtype=np.int64),
        np.ascontiguousarray(children, dtype=np.int64),
        np.ascontiguousarray(mats, dtype=np.float64),
        np.ascontiguousarray(V0, dtype=np.float64),
    )
    if BACKEND == "numba":
        return tree_vectors_numba(*args)
    return tree_vectors_numpy(*args)
