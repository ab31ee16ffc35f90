"""Associate surfaces: the Combescure triple hidden in a gauge-normalized potential.

With (eta p, q_inf) = 0 the potential splits as f ^ df A + t ^ dt B, and
dx^D = dx A, d x_hat = dn B are closed. Curvatures of x^D and x_hat follow
from the diagonal entries of A and B by Rodrigues, with both surfaces
oriented by -n:

    1/kappa^D_i = -a_i / kappa_i,    1/kappa_hat_i = b_i.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import pseudo_euclidean as pe
from .config import DEFAULT_TOL, NotNormalizedError, PathDependenceError, Tolerances, UnsupportedError
from .forms import EdgeForm, SpanningTree, d_u4, d_v4, plaquette_mask
from .legendre import LegendreGrid, SurfaceGrid, build_legendre
from .lie_invariants import STAT_MARGIN
from .omega_structure import Potential, gauge, quadratic_differential

# rows of the O-system matrix for (x, x^D, x_hat, n)
O_MATRIX = np.array([[0.0, 1.0, 0.0, 0.0],
                     [1.0, 0.0, 0.0, 0.0],
                     [0.0, 0.0, 0.0, 1.0],
                     [0.0, 0.0, 1.0, 0.0]])


def _stat_mask(grid: LegendreGrid) -> np.ndarray:
    return grid.regular & grid.shape.interior_mask(STAT_MARGIN)


def _edge_mid(a, shape):
    return (0.5 * (a[: shape.mu] + np.roll(a, -1, 0)[: shape.mu]),
            0.5 * (a[:, : shape.nv] + np.roll(a, -1, 1)[:, : shape.nv]))


def _apply_edges(form: EdgeForm, w) -> EdgeForm:
    return EdgeForm(form.shape, pe.apply(np.nan_to_num(form.u), w), pe.apply(np.nan_to_num(form.v), w))


# ------------------------------------------------------------- normalization

def normalization_form(grid: LegendreGrid, eta: Potential) -> EdgeForm:
    """The closed scalar form (eta p, q_inf)."""
    fr = grid.frame
    w = _apply_edges(eta.eta, fr.p)
    return EdgeForm(grid.shape, pe.inner(w.u, fr.q), pe.inner(w.v, fr.q))


def normalize_gauge(grid: LegendreGrid, eta: Potential, shift: float = 0.0,
                    tol: Tolerances = DEFAULT_TOL, tree: SpanningTree | None = None) -> Potential:
    """eta - d tau with tau = -lam f ^ t and d lam = (eta p, q_inf), lam(base) = shift."""
    s = grid.shape
    tree = tree or SpanningTree(s)
    form = normalization_form(grid, eta)
    lam = tree.integrate_additive(form, base_value=shift)
    loop = tree.additive_loop_residual(lam, form)
    scale = max(float(np.max(np.abs(form.u))), float(np.max(np.abs(form.v))), 1.0)
    if loop > tol.certification * scale:
        raise PathDependenceError(f"normalization primitive fails to close: loop residual {loop:.3e}")
    out = gauge(eta, -lam, lifts=(grid.f_pt, grid.t_pl))
    info = dict(eta.info, lam=lam, lam_loop=loop)
    return Potential(out.eta, kind=f"normalized({eta.kind})", lifts=eta.lifts, root=out.root,
                     tau=out.tau, info=info, nodes=out.nodes)


# ------------------------------------------------------------- the triple

@dataclass(frozen=True)
class CombescureTriple:
    x: np.ndarray
    xD: np.ndarray
    xhat: np.ndarray
    n: np.ndarray
    kappa: tuple
    kappaD: tuple
    kappa_hat: tuple
    p2: np.ndarray  # III(d_u, d_u)
    r2: np.ndarray  # III(d_v, d_v)
    a: tuple  # diagonal entries of A
    b: tuple  # diagonal entries of B
    increments: dict  # edge increments per unit parameter of x^D and x_hat
    residuals: dict = field(default_factory=dict)


def _diag_entry(W, T, mask):
    """Coefficient of W along T and the leakage orthogonal to T.

    The leakage is relative to the largest |W| on the mask, so nodes where
    W itself vanishes do not count as leaking.
    """
    tt = np.sum(T * T, -1)
    c = np.sum(W * T, -1) / np.where(tt == 0, 1.0, tt)
    ref = max(float(np.max(np.linalg.norm(W, axis=-1)[mask])), 1e-300)
    leak = np.linalg.norm(W - c[..., None] * T, axis=-1) / ref
    return c, leak


def extract_associates(grid: LegendreGrid, eta: Potential, tol: Tolerances = DEFAULT_TOL,
                       tree: SpanningTree | None = None) -> CombescureTriple:
    """x^D and x_hat from a gauge-normalized potential."""
    s = grid.shape
    tree = tree or SpanningTree(s)
    fr = grid.frame
    mask = _stat_mask(grid)
    norm_res = _normalization_residual(grid, eta)
    # edge increments: dx^D = -(eta q_inf), d x_hat = -(eta p), R^3 parts
    wq = _apply_edges(eta.eta, fr.q)
    wp = _apply_edges(eta.eta, fr.p)
    incD = EdgeForm(s, -wq.u[..., :3], -wq.v[..., :3])
    incH = EdgeForm(s, -wp.u[..., :3], -wp.v[..., :3])
    xD = tree.integrate_additive(incD)
    xh = tree.integrate_additive(incH)
    loops = (tree.additive_loop_residual(xD, incD), tree.additive_loop_residual(xh, incH))
    # diagonal entries from node samples
    Eu, Ev = eta.node_samples()
    x, n = grid.f_pt[..., :3], grid.t_pl[..., :3]
    xu, xv = d_u4(x, s), d_v4(x, s)
    k1, k2 = grid.kappa1, grid.kappa2
    kmax = max(float(np.max(np.abs(k1[mask]))), float(np.max(np.abs(k2[mask]))))
    for i, k in enumerate((k1, k2), 1):
        km = k[mask]
        # a sign change means a zero between samples
        if np.min(np.abs(km)) <= tol.geometric * kmax or np.min(km) < 0 < np.max(km):
            raise UnsupportedError(f"principal curvature {i} vanishes: the hat associate is at infinity")
    nu, nv = -k1[..., None] * xu, -k2[..., None] * xv
    a1, la1 = _diag_entry(-pe.apply(np.nan_to_num(Eu), fr.q)[..., :3], xu, mask)
    a2, la2 = _diag_entry(-pe.apply(np.nan_to_num(Ev), fr.q)[..., :3], xv, mask)
    b1, lb1 = _diag_entry(-pe.apply(np.nan_to_num(Eu), fr.p)[..., :3], nu, mask)
    b2, lb2 = _diag_entry(-pe.apply(np.nan_to_num(Ev), fr.p)[..., :3], nv, mask)
    leak = float(max(np.max(l[mask]) for l in (la1, la2, lb1, lb2)))
    if leak > tol.leakage:
        raise NotNormalizedError(f"A or B is not diagonal in curvature directions (leakage {leak:.3e})")
    with np.errstate(divide="ignore", invalid="ignore"):
        kD = (-k1 / a1, -k2 / a2)
        kh = (1.0 / b1, 1.0 / b2)
    E, G = np.sum(xu * xu, -1), np.sum(xv * xv, -1)
    res = {"normalization": norm_res, "loop_xD": loops[0], "loop_xhat": loops[1], "leakage": leak}
    return CombescureTriple(
        x=x, xD=xD, xhat=xh, n=n, kappa=(k1, k2), kappaD=kD, kappa_hat=kh,
        p2=k1**2 * E, r2=k2**2 * G, a=(a1, a2), b=(b1, b2),
        increments={"xD": incD, "xhat": incH}, residuals=res,
    )


def _normalization_residual(grid: LegendreGrid, eta: Potential) -> float:
    form = normalization_form(grid, eta)
    ref = max(float(np.max(np.abs(eta.eta.u))), 1e-300)
    return float(max(np.max(np.abs(form.u)), np.max(np.abs(form.v)))) / ref


def asscurv_residual(triple: CombescureTriple) -> np.ndarray:
    """1/(k1 kD2) + 1/(k2 kD1) - 1/kh1 - 1/kh2, relative to the size of its terms."""
    k1, k2 = triple.kappa
    a1, a2 = triple.a
    b1, b2 = triple.b
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = -a2 / (k1 * k2)
        t2 = -a1 / (k1 * k2)
    terms = np.stack([t1, t2, -b1, -b2], -1)
    return np.abs(terms.sum(-1)) / (np.max(np.abs(terms), -1) + 1e-300)


def assocsurf_residual(triple: CombescureTriple, q) -> np.ndarray:
    """(1/k1 - 1/k2)(1/kD1 - 1/kD2) against -eps2 U^2/p^2 + V^2/r^2 read off q."""
    k1, k2 = triple.kappa
    a1, a2 = triple.a
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = (1.0 / k1 - 1.0 / k2) * (-a1 / k1 + a2 / k2)
        # q = -eps2 U^2 du^2 + V^2 dv^2
        rhs_u, rhs_v = q.a / triple.p2, q.c / triple.r2
        # both sides can vanish (the associate of a minimal surface is a sphere): scale by the terms
        scale = (np.abs(1.0 / k1) + np.abs(1.0 / k2)) * (np.abs(a1 / k1) + np.abs(a2 / k2)) \
            + np.abs(rhs_u) + np.abs(rhs_v)
    return np.abs(lhs - rhs_u - rhs_v) / (scale + 1e-300)


def o_surface_rows(triple: CombescureTriple) -> tuple:
    """K_j = (1/k_j, 1/kD_j, 1/kh_j, -1), the Gauss map having both curvatures -1."""
    k1, k2 = triple.kappa
    a1, a2 = triple.a
    b1, b2 = triple.b
    with np.errstate(divide="ignore", invalid="ignore"):
        K1 = np.stack([1.0 / k1, -a1 / k1, b1, -np.ones_like(k1)], -1)
        K2 = np.stack([1.0 / k2, -a2 / k2, b2, -np.ones_like(k2)], -1)
    return K1, K2


def o_surface_check(triple: CombescureTriple, mask=None) -> dict:
    K1, K2 = o_surface_rows(triple)
    r = np.einsum("...i,ij,...j->...", K1, O_MATRIX, K2)
    bad = ~np.isfinite(r)
    if mask is None:
        mask = np.ones(r.shape, bool)
    keep = mask & ~bad
    ref = np.max(np.abs(K1[..., :3]), -1) * np.max(np.abs(K2[..., :3]), -1)
    rel = np.abs(r) / (ref + 1e-300)
    vals = rel[keep]
    return {
        "max": float(vals.max()) if vals.size else 0.0,
        "l2": float(np.sqrt(np.mean(vals**2))) if vals.size else 0.0,
        "excluded": int((mask & bad).sum()),
    }


# ------------------------------------------------------------- back to the potential

def _associate_wedges(shape, fA, tA, wD, wH, x):
    """f ^ (w^D + (w^D, x) q_inf) + t ^ (w_hat + (w_hat, x) q_inf) for R^3 vectors w."""
    def lift(w):
        out = np.zeros(w.shape[:-1] + (6,))
        out[..., :3] = w
        return out + np.sum(w * x, -1)[..., None] * pe.Q_INF
    return pe.wedge(fA, lift(wD)) + pe.wedge(tA, lift(wH))


def eta_from_associates(grid: LegendreGrid, triple: CombescureTriple) -> Potential:
    """Rebuild the potential from the edge increments of x^D and x_hat."""
    s = grid.shape
    x = grid.f_pt[..., :3]
    fu, fv = _edge_mid(grid.f_pt, s)
    tu, tv = _edge_mid(grid.t_pl, s)
    xu_, xv_ = _edge_mid(x, s)
    incD, incH = triple.increments["xD"], triple.increments["xhat"]
    eu = _associate_wedges(s, fu, tu, incD.u, incH.u, xu_)
    ev = _associate_wedges(s, fv, tv, incD.v, incH.v, xv_)
    xu, xv = d_u4(x, s), d_v4(x, s)
    k1, k2 = triple.kappa
    a1, a2 = triple.a
    b1, b2 = triple.b
    nu_ = _associate_wedges(s, grid.f_pt, grid.t_pl, a1[..., None] * xu, -b1[..., None] * k1[..., None] * xu, x)
    nv_ = _associate_wedges(s, grid.f_pt, grid.t_pl, a2[..., None] * xv, -b2[..., None] * k2[..., None] * xv, x)
    return Potential(EdgeForm(s, eu, ev), kind="associate", nodes=(nu_, nv_))


def round_trip(grid: LegendreGrid, triple: CombescureTriple, tol: Tolerances = DEFAULT_TOL) -> dict:
    """extract_associates(eta_from_associates(triple)) against the triple, base-aligned."""
    again = extract_associates(grid, eta_from_associates(grid, triple), tol)
    mask = _stat_mask(grid)
    base = SpanningTree(grid.shape).base

    def dev(a, b):
        return float(np.max(np.linalg.norm((a - a[base]) - (b - b[base]), axis=-1)[mask]))
    return {"xD": dev(again.xD, triple.xD), "xhat": dev(again.xhat, triple.xhat)}


# ------------------------------------------------------------- the associate as an Omega-surface

def associate_grid(grid: LegendreGrid, triple: CombescureTriple) -> LegendreGrid:
    """Legendre lift of x^D oriented by -n, with curvatures from the triple."""
    s = grid.shape
    a1, a2 = triple.a
    sg = SurfaceGrid(shape=s, x=triple.xD, normal=-triple.n, E=a1**2 * grid.E, G=a2**2 * grid.G,
                     kappa1=triple.kappaD[0], kappa2=triple.kappaD[1], offdiag=0.0,
                     name=f"{grid.name}-associate")
    return build_legendre(sg)


def dual_potential(grid: LegendreGrid, triple: CombescureTriple) -> Potential:
    """Ad_{exp(x^D ^ q_inf)}(q0 ^ dx - xi^D ^ d x_hat) with xi^D = -n + p."""
    s = grid.shape
    fr = grid.frame

    def embed(w):
        out = np.zeros(w.shape[:-1] + (6,))
        out[..., :3] = w
        return out

    def assemble(xD, n, dx, dxh):
        g = pe.exp_skew(pe.wedge(embed(xD), np.broadcast_to(fr.q, xD.shape[:-1] + (6,))))
        xi = -embed(n) + fr.p
        inner = pe.wedge(np.broadcast_to(fr.q0, xi.shape), embed(dx)) - pe.wedge(xi, embed(dxh))
        return pe.conjugate(g, inner)

    x = triple.x
    xDu, xDv = _edge_mid(triple.xD, s)
    nu_, nv_ = _edge_mid(triple.n, s)
    dxu = (np.roll(x, -1, 0)[: s.mu] - x[: s.mu]) / s.du
    dxv = (np.roll(x, -1, 1)[:, : s.nv] - x[:, : s.nv]) / s.dv
    incH = triple.increments["xhat"]
    eta = EdgeForm(s, assemble(xDu, nu_, dxu, incH.u), assemble(xDv, nv_, dxv, incH.v))
    xu, xv = d_u4(x, s), d_v4(x, s)
    k1, k2 = triple.kappa
    b1, b2 = triple.b
    nodes = (assemble(triple.xD, triple.n, xu, -b1[..., None] * k1[..., None] * xu),
             assemble(triple.xD, triple.n, xv, -b2[..., None] * k2[..., None] * xv))
    return Potential(eta, kind="associate-dual", nodes=nodes)


def associate_report(grid: LegendreGrid, eta: Potential, tol: Tolerances = DEFAULT_TOL,
                     shift: float = 1.0) -> dict:
    """All associate-surface checks for one grid and potential."""
    s = grid.shape
    mask = _stat_mask(grid)
    pm = plaquette_mask(s, mask)
    norm = normalize_gauge(grid, eta, tol=tol)
    triple = extract_associates(grid, norm, tol)
    q = quadratic_differential(grid, norm)
    asc = asscurv_residual(triple)[mask]
    aso = assocsurf_residual(triple, q)[mask]
    osc = o_surface_check(triple, mask)
    rt = round_trip(grid, triple, tol)
    # the dual potential lives on the associate surface
    gD = associate_grid(grid, triple)
    etaD = dual_potential(grid, triple)
    ref = max(float(np.max(np.abs(etaD.eta.u))), 1e-300)
    # q only needs the point and plane lifts; the associate may be umbilic (a sphere
    # for minimal surfaces), so its umbilic flags are lifted for this trace
    qD = quadratic_differential(replace(gD, umbilic=np.zeros_like(gD.umbilic)), etaD)
    q_scale = max(float(np.max(np.abs(q.a[mask]))), float(np.max(np.abs(q.c[mask]))), 1e-300)
    qdev = max(float(np.max(np.abs(qD.a - q.a)[mask])), float(np.max(np.abs(qD.c - q.c)[mask])),
               float(np.max(np.abs(qD.b - q.b)[mask])))
    # constant shift of the primitive: x^D -> x^D + c n, x_hat -> x_hat - c x
    shifted = extract_associates(grid, normalize_gauge(grid, eta, shift=shift, tol=tol), tol)
    base = SpanningTree(s).base

    def aligned(a):
        return a - a[base]
    dxD = aligned(shifted.xD) - aligned(triple.xD) - shift * aligned(triple.n)
    dxh = aligned(shifted.xhat) - aligned(triple.xhat) + shift * aligned(triple.x)
    return {
        "normalization_residual": triple.residuals["normalization"],
        "leakage": triple.residuals["leakage"],
        "loop_xD": triple.residuals["loop_xD"],
        "loop_xhat": triple.residuals["loop_xhat"],
        "asscurv": float(np.nanmax(asc)),
        "o_surface": osc["max"],
        "o_surface_excluded": osc["excluded"],
        "assocsurf": float(np.nanmax(aso)),
        "round_trip": max(rt.values()),
        "dual_closure": etaD.closure_residual(pm) / ref,
        "dual_q_deviation": qdev / q_scale,
        "shift_xD": float(np.max(np.linalg.norm(dxD, axis=-1)[mask])),
        "shift_xhat": float(np.max(np.linalg.norm(dxh, axis=-1)[mask])),
        "triple": triple,
    }
