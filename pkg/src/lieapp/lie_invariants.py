"""Conformal structure, Lie cyclide splitting, Lie-invariant metric, cubic form."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import pseudo_euclidean as pe
from .config import DEFAULT_TOL, Tolerances
from .forms import EdgeForm, d_u, d_uu, d_v, d_vv
from .legendre import LegendreGrid

# second-derivative stencils reach two nodes in, so statistics skip a margin
STAT_MARGIN = 3


@dataclass(frozen=True)
class QuadraticCoeffs:
    """a du^2 + 2 b du dv + c dv^2, per node."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    diagnostics: dict | None = None

    def as_matrix(self) -> np.ndarray:
        return np.stack([np.stack([self.a, self.b], -1), np.stack([self.b, self.c], -1)], -2)


@dataclass(frozen=True)
class CubicCoeffs:
    """A du^3 + B dv^3, per node."""

    A: np.ndarray
    B: np.ndarray
    diagnostics: dict | None = None


@dataclass(frozen=True)
class CyclideSplitting:
    basis1: np.ndarray  # (m, n, 6, 3)
    basis2: np.ndarray
    P1: np.ndarray  # (m, n, 6, 6)
    P2: np.ndarray
    signature1: np.ndarray  # (m, n, 2) counts (+, -)
    signature2: np.ndarray
    degenerate: np.ndarray  # nodes completed by the fallback
    orthogonality: np.ndarray  # per-node max |B1^T G B2| (normalized)
    completeness: np.ndarray  # per-node max |P1 + P2 - I|


def sphere_coords(grid: LegendreGrid, w) -> tuple:
    """Coefficients (alpha, beta) of w ~ alpha sigma1 + beta sigma2 for w in f.

    Uses the unit Rodrigues lifts tangent-plane + kappa_i * point and the
    symmetry-breaking pairings, so components outside f are ignored.
    """
    fr = grid.frame
    A = -pe.inner(w, fr.q)  # point coefficient
    B = -pe.inner(w, fr.p)  # tangent-plane coefficient
    k1, k2 = grid.kappa1, grid.kappa2
    d = k1 - k2
    return (A - B * k2) / d, (B * k1 - A) / d


def wedge_coeff(grid: LegendreGrid, w1, w2) -> np.ndarray:
    """w1 ^ w2 as a multiple of sigma1 ^ sigma2 (unit lifts) for w1, w2 in f."""
    a1, b1 = sphere_coords(grid, w1)
    a2, b2 = sphere_coords(grid, w2)
    return a1 * b2 - b1 * a2


def tangent_frame(grid: LegendreGrid) -> tuple:
    """Orthonormal lifts of a tangent frame, perpendicular to f."""
    s = grid.shape
    x, n = grid.x, grid.normal
    xu, xv = d_u(x, s), d_v(x, s)
    e1 = xu / np.linalg.norm(xu, axis=-1, keepdims=True)
    # orient the second vector along x_v so that h1^h2 follows du^dv
    e2 = np.cross(n, e1)
    e2 = e2 * np.sign(np.sum(e2 * xv, -1))[..., None]
    q = grid.frame.q

    def lift(e):
        out = np.zeros(e.shape[:-1] + (6,))
        out[..., :3] = e
        return out + np.sum(e * x, -1)[..., None] * q

    return lift(e1), lift(e2)


def representative_metric(grid: LegendreGrid, tau_scale=1.0) -> QuadraticCoeffs:
    """Representative metric of the conformal structure for tau = scale * sigma1^sigma2.

    The mixed coefficient is evaluated from the defining symmetrized wedge of
    solder-form images in f^perp/f, with finite differences for the
    derivatives. The pure coefficients are structurally zero (curvature
    directions are null); their finite-difference values are reported in
    ``diagnostics['null_residual']``.
    """
    s = grid.shape
    h1, h2 = tangent_frame(grid)

    def coords(w):
        return np.stack([pe.inner(w, h1), pe.inner(w, h2)], -1)

    s1u, s1v = coords(d_u(grid.sigma1, s)), coords(d_v(grid.sigma1, s))
    s2u, s2v = coords(d_u(grid.sigma2, s)), coords(d_v(grid.sigma2, s))

    def det(p, r):
        return p[..., 0] * r[..., 1] - p[..., 1] * r[..., 0]

    # c(X,Y) s1^s2 = 1/2 (b(X)s1 ^ b(Y)s2 + b(Y)s1 ^ b(X)s2); ^2(f^perp/f) trivialized by h1^h2
    c_uu = det(s1u, s2u)
    c_vv = det(s1v, s2v)
    c_uv = 0.5 * (det(s1u, s2v) + det(s1v, s2u))
    scale = np.asarray(tau_scale, float)
    b = scale * c_uv
    zero = np.zeros_like(b)
    reg = grid.regular & s.interior_mask(STAT_MARGIN)
    diag = {
        "null_residual": float(np.max(np.abs(np.concatenate([c_uu[reg], c_vv[reg]])) /
                                      np.maximum(np.abs(c_uv[reg]).max(), 1e-300))),
        "closed_form_b": scale * 0.5 * (grid.kappa1 - grid.kappa2) ** 2 * np.sqrt(grid.E * grid.G),
    }
    return QuadraticCoeffs(zero, b, zero.copy(), diag)


def _span_basis(vecs, cond):
    """Normalize columns; return basis and rank-deficiency flag per node."""
    nrm = np.linalg.norm(vecs, axis=-2, keepdims=True)
    B = vecs / np.where(nrm == 0, 1.0, nrm)
    sv = np.linalg.svd(np.nan_to_num(B), compute_uv=False)
    deficient = sv[..., -1] < cond * sv[..., 0]
    return B, deficient


def _complete(Bi, Bj, f_basis):
    """Fallback basis at one node: sigma_i plus the complement in f^perp cap S_j^perp."""
    # constraints: orthogonal to f and to the other subspace
    C = np.concatenate([f_basis, Bj], axis=1)
    A = (pe.lower(C.T))  # rows: (c, .)
    _, _, Vt = np.linalg.svd(A)
    null = Vt[-(6 - np.linalg.matrix_rank(A)):].T
    cand = np.concatenate([Bi[:, :1], null], axis=1)
    q, _ = np.linalg.qr(cand)
    return q[:, :3]


def cyclide_splitting(grid: LegendreGrid, tol: Tolerances = DEFAULT_TOL) -> CyclideSplitting:
    """S1 = <s1, d_v s1, d_vv s1>, S2 = <s2, d_u s2, d_uu s2> with projectors."""
    s = grid.shape
    s1, s2 = grid.sigma1, grid.sigma2
    B1 = np.stack([s1, d_v(s1, s), d_vv(s1, s)], -1)
    B2 = np.stack([s2, d_u(s2, s), d_uu(s2, s)], -1)
    B1, def1 = _span_basis(B1, tol.rank_rel)
    B2, def2 = _span_basis(B2, tol.rank_rel)
    degenerate = (def1 | def2) & grid.regular
    fb = grid.f_basis()
    for i, j in zip(*np.nonzero(degenerate)):
        if def1[i, j] and not def2[i, j]:
            B1[i, j] = _complete(B1[i, j], B2[i, j], fb[i, j])
        elif def2[i, j] and not def1[i, j]:
            B2[i, j] = _complete(B2[i, j], B1[i, j], fb[i, j])
    bad = ~grid.regular
    B1 = np.where(bad[..., None, None], np.nan, B1)
    B2 = np.where(bad[..., None, None], np.nan, B2)
    with np.errstate(invalid="ignore"):
        safe1 = np.where(bad[..., None, None], np.eye(6)[:, :3], B1)
        safe2 = np.where(bad[..., None, None], np.eye(6)[:, 3:], B2)
        P1 = pe.projector(safe1)
        P2 = pe.projector(safe2)
        g1 = np.swapaxes(safe1, -1, -2) @ (pe.SIGNATURE[:, None] * safe1)
        g2 = np.swapaxes(safe2, -1, -2) @ (pe.SIGNATURE[:, None] * safe2)
    sig1 = np.zeros(g1.shape[:2] + (2,), dtype=int)
    sig2 = np.zeros_like(sig1)
    for idx in np.ndindex(g1.shape[:2]):
        sig1[idx] = pe.signature_of(g1[idx])
        sig2[idx] = pe.signature_of(g2[idx])
    cross = np.swapaxes(safe1, -1, -2) @ (pe.SIGNATURE[:, None] * safe2)
    ortho = np.max(np.abs(cross), axis=(-2, -1))
    compl = np.max(np.abs(P1 + P2 - np.eye(6)), axis=(-2, -1))
    for arr in (P1, P2):
        arr[bad] = np.nan
    ortho = np.where(bad, np.nan, ortho)
    compl = np.where(bad, np.nan, compl)
    return CyclideSplitting(B1, B2, P1, P2, sig1, sig2, degenerate, ortho, compl)


def split_connection(grid: LegendreGrid, splitting: CyclideSplitting) -> tuple:
    """Decompose d = D + N with N = (I - 2 P1) dP1, sampled on edges.

    Returns (D, N, checks). D is stored as the node-sampled skew generator
    d - N relative to the trivial connection, i.e. D = d - N acts as the
    trivial derivative minus N; only N carries data. ``checks`` holds the
    structural residuals of the curvature-sphere lemma.
    """
    s = grid.shape
    P1 = splitting.P1
    I = np.eye(6)
    Nu = (I - 2 * P1) @ d_u(P1, s)
    Nv = (I - 2 * P1) @ d_v(P1, s)
    N = EdgeForm.from_nodes(s, Nu, Nv)
    D = EdgeForm.from_nodes(s, -Nu, -Nv)
    reg = grid.regular & s.interior_mask(STAT_MARGIN)
    fb = grid.f_basis()

    def mx(a):
        a = np.asarray(a)[reg]
        return float(np.nanmax(np.abs(a))) if a.size else 0.0

    h1, h2 = tangent_frame(grid)

    def off_f(w):
        # w lies in f iff it pairs trivially with f and with the tangent frame
        return np.maximum.reduce([np.abs(pe.inner(w, c)) for c in (fb[..., 0], fb[..., 1], h1, h2)])

    s1, s2 = grid.sigma1, grid.sigma2
    leak_f = np.maximum.reduce([off_f(pe.apply(M, fb[..., k])) for M in (Nu, Nv) for k in range(2)])
    P2 = splitting.P2
    block = np.maximum(np.max(np.abs(P1 @ Nu @ P1), axis=(-2, -1)),
                       np.max(np.abs(P2 @ Nu @ P2), axis=(-2, -1)))
    checks = {
        "N_v_sigma1": mx(np.linalg.norm(pe.apply(Nv, s1), axis=-1) / np.linalg.norm(s1, axis=-1)),
        "N_u_sigma2": mx(np.linalg.norm(pe.apply(Nu, s2), axis=-1) / np.linalg.norm(s2, axis=-1)),
        "N_f_in_f": mx(leak_f),
        "N_off_block": mx(block),
        "N_skew": max(mx(pe.skew_residual(Nu)), mx(pe.skew_residual(Nv))),
        "reassembly": 0.0,
    }
    return D, N, checks


def _kappa_derivs(grid: LegendreGrid):
    s = grid.shape
    return d_u(grid.kappa1, s), d_v(grid.kappa2, s)


def lie_metric(grid: LegendreGrid, splitting: CyclideSplitting | None = None) -> QuadraticCoeffs:
    """b = (1/2) kappa1_u kappa2_v / (kappa1 - kappa2)^2, a = c = 0.

    When a splitting is supplied the intrinsic value from the symmetrized
    wedge of N-images is returned in ``diagnostics['intrinsic_b']``.
    """
    k1u, k2v = _kappa_derivs(grid)
    d = grid.kappa1 - grid.kappa2
    b = 0.5 * k1u * k2v / d**2
    zero = np.zeros_like(b)
    diag = {}
    if splitting is not None:
        _, N, _ = split_connection(grid, splitting)
        Nu, Nv = N.node_values()
        s1, s2 = grid.sigma1, grid.sigma2
        w_uv = wedge_coeff(grid, pe.apply(Nu, s1), pe.apply(Nv, s2))
        w_vu = wedge_coeff(grid, pe.apply(Nv, s1), pe.apply(Nu, s2))
        diag["intrinsic_b"] = 0.5 * (w_uv + w_vu)
    return QuadraticCoeffs(zero, b, zero.copy(), diag)


def darboux_cubic(grid: LegendreGrid, tau_scale=1.0) -> CubicCoeffs:
    """A = (k2 - k1) k1_u E, B = (k2 - k1) k2_v G, evaluated on tau = s1^s2."""
    k1u, k2v = _kappa_derivs(grid)
    d = grid.kappa2 - grid.kappa1
    sc = np.asarray(tau_scale, float)
    return CubicCoeffs(sc * d * k1u * grid.E, sc * d * k2v * grid.G)


def darboux_cubic_intrinsic(grid: LegendreGrid, splitting: CyclideSplitting) -> CubicCoeffs:
    """C(X,X,X) from (D_X D_X xi1, N_X xi2) - (D_X D_X xi2, N_X xi1)."""
    s = grid.shape
    P1, P2 = splitting.P1, splitting.P2
    I = np.eye(6)
    Nu = (I - 2 * P1) @ d_u(P1, s)
    Nv = (I - 2 * P1) @ d_v(P1, s)
    s1, s2 = grid.sigma1, grid.sigma2

    def DD(sig, diff):
        # D = P1 d P1 + P2 d P2 acting on sections
        def D(w):
            a = pe.apply(P1, w)
            b = pe.apply(P2, w)
            return pe.apply(P1, diff(a, s)) + pe.apply(P2, diff(b, s))
        return D(D(sig))

    A = pe.inner(DD(s1, d_u), pe.apply(Nu, s2)) - pe.inner(DD(s2, d_u), pe.apply(Nu, s1))
    B = pe.inner(DD(s1, d_v), pe.apply(Nv, s2)) - pe.inner(DD(s2, d_v), pe.apply(Nv, s1))
    return CubicCoeffs(A, B)


def hodge_star(form: EdgeForm) -> EdgeForm:
    return form.hodge()
