"""Linear algebra of R^{4,2}: inner products, wedges, exponentials.

Vectors are arrays with a trailing axis of length 6, skew maps are arrays
with trailing shape (6, 6) acting on column vectors. All functions
broadcast over leading axes.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .config import DEFAULT_TOL, DegeneratePairError, GridShapeError, ParameterError

SIGNATURE = np.array([1.0, 1.0, 1.0, 1.0, -1.0, -1.0])
G = np.diag(SIGNATURE)
DIM = 6


def basis(k: int) -> np.ndarray:
    """Standard basis vector e_k, 1-indexed to match e1..e6."""
    e = np.zeros(DIM)
    e[k - 1] = 1.0
    return e


# Fixed symmetry-breaking vectors for the flat space form.
P_SPHERE = basis(5)
Q_INF = basis(4) - basis(6)
Q_ORIGIN = -0.5 * (basis(4) + basis(6))


def inner(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.sum(a * b * SIGNATURE, axis=-1)


def norm2(a) -> np.ndarray:
    return inner(a, a)


def classify(a, tol: float = DEFAULT_TOL.algebraic) -> str:
    """'null', 'spacelike' or 'timelike', relative to the Euclidean size."""
    a = np.asarray(a, dtype=float)
    s = float(norm2(a))
    scale = max(float(np.dot(a, a)), 1e-300)
    if abs(s) <= tol * scale:
        return "null"
    return "spacelike" if s > 0 else "timelike"


def lower(a) -> np.ndarray:
    """Apply the metric: G a."""
    return np.asarray(a, dtype=float) * SIGNATURE


def wedge(a, b) -> np.ndarray:
    """Skew map c -> (a,c) b - (b,c) a."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return b[..., :, None] * lower(a)[..., None, :] - a[..., :, None] * lower(b)[..., None, :]


def apply(M, x) -> np.ndarray:
    return np.einsum("...ij,...j->...i", M, x)


def compose(A, B) -> np.ndarray:
    return np.matmul(A, B)


def adjoint(M) -> np.ndarray:
    """Metric adjoint G M^T G; equals the inverse for orthogonal maps."""
    M = np.asarray(M, dtype=float)
    return SIGNATURE[:, None] * np.swapaxes(M, -1, -2) * SIGNATURE[None, :]


def inverse_orthogonal(T) -> np.ndarray:
    return adjoint(T)


def conjugate(T, M) -> np.ndarray:
    """Ad_T M = T M T^{-1} for orthogonal T."""
    return np.matmul(np.matmul(T, M), adjoint(T))


def skew_residual(M) -> np.ndarray:
    """max |M^T G + G M| per map."""
    M = np.asarray(M, dtype=float)
    R = np.swapaxes(M, -1, -2) * SIGNATURE[None, :] + SIGNATURE[:, None] * M
    return np.max(np.abs(R), axis=(-2, -1))


def orthogonality_residual(T) -> np.ndarray:
    """max |T^T G T - G| per map."""
    T = np.asarray(T, dtype=float)
    R = np.swapaxes(T, -1, -2) @ (SIGNATURE[:, None] * T) - G
    return np.max(np.abs(R), axis=(-2, -1))


def skew_coefficient(M, a, b) -> np.ndarray:
    """Least-squares c with M ~ c * wedge(a, b) in the Frobenius sense."""
    W = wedge(a, b)
    num = np.sum(M * W, axis=(-2, -1))
    den = np.sum(W * W, axis=(-2, -1))
    return num / np.where(den == 0, 1.0, den)


def exp_skew(W, tol: float = DEFAULT_TOL.nilpotent) -> np.ndarray:
    """Exponential of skew maps by scaling and squaring.

    A degree-18 Taylor polynomial is evaluated after scaling below norm 1/2.
    Maps with ||W^2|| < tol are treated as nilpotent and return I + W
    exactly.
    """
    W = np.asarray(W, dtype=float)
    shape = W.shape
    flat = np.ascontiguousarray(W.reshape(-1, DIM, DIM))
    out = _kernels.expm_batch(flat, tol)
    return out.reshape(shape)


def gamma_transform(v, w, t: float) -> np.ndarray:
    """Orthogonal map scaling v by t, w by 1/t, fixing <v, w>^perp."""
    if t == 0:
        raise ParameterError("gamma_transform needs t != 0")
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    vw = inner(v, w)
    scale = np.sqrt(np.sum(v * v, -1) * np.sum(w * w, -1))
    if np.any(np.abs(vw) <= DEFAULT_TOL.conditioning * np.maximum(scale, 1e-300)):
        raise DegeneratePairError("(v, w) = 0: no gamma transform")
    vw = np.asarray(vw)[..., None, None]
    eye = np.broadcast_to(np.eye(DIM), v.shape[:-1] + (DIM, DIM))
    return (
        eye
        + (t - 1.0) * v[..., :, None] * lower(w)[..., None, :] / vw
        + (1.0 / t - 1.0) * w[..., :, None] * lower(v)[..., None, :] / vw
    )


def curly_wedge(form1, form2) -> np.ndarray:
    """Plaquette field w1(X)^w2(Y) - w1(Y)^w2(X) of two vector-valued forms."""
    if form1.shape != form2.shape:
        raise GridShapeError("forms live on different grids")
    X1, Y1 = form1.plaquette_values()
    X2, Y2 = form2.plaquette_values()
    return wedge(X1, Y2) - wedge(Y1, X2)


def projector(basis_vectors) -> np.ndarray:
    """Metric-orthogonal projector onto the span of the given columns.

    ``basis_vectors`` has shape (..., 6, k); the span must be
    non-degenerate.
    """
    B = np.asarray(basis_vectors, dtype=float)
    gram = np.swapaxes(B, -1, -2) @ (SIGNATURE[:, None] * B)
    return B @ np.linalg.solve(gram, np.swapaxes(B, -1, -2) * SIGNATURE[None, :])


def signature_of(gram, rel_tol: float = 1e-10) -> tuple:
    """(positive, negative) eigenvalue counts of a symmetric matrix."""
    ev = np.linalg.eigvalsh(np.asarray(gram, dtype=float))
    scale = max(float(np.max(np.abs(ev))), 1e-300)
    return int(np.sum(ev > rel_tol * scale)), int(np.sum(ev < -rel_tol * scale))
