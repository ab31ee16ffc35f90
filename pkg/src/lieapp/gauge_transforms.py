"""The flat family d + t eta and the transforms it generates.

Frames follow dT = t T eta, so T(b) = T(a) M_e for an edge a -> b;
sections follow d sigma = -t eta sigma and move by M_e^{-1}.

Two edge transports are available. Order 2 exponentiates the edge sample,
exp(t h eta_e). Order 4 is the two-point Gauss-Legendre Magnus step built
from cubic interpolation of the node samples of eta. Each is one
exponential per edge; no sub-stepping is involved.

Gauged potentials eta - d tau keep a reference to their root; their
transports are exp(t tau_a) M_e exp(-t tau_b), which makes the discrete
gauge action exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import pseudo_euclidean as pe
from .config import (
    DEFAULT_TOL,
    GenericityError,
    IllConditionedError,
    ParameterError,
    PathDependenceError,
    Tolerances,
    UnsupportedError,
)
from .forms import (
    EdgeForm,
    GridShape,
    SpanningTree,
    d_u,
    d_u4,
    d_v,
    d_v4,
    edge_masks,
    gauss_samples,
    plaquette_mask,
)
from .legendre import (
    LegendreGrid,
    SurfaceGrid,
    build_legendre,
    check_legendre,
    estimate_principal_data,
    split_plane,
    transformed_grid,
    umbilic_mask,
)
from .lie_invariants import STAT_MARGIN, cyclide_splitting, lie_metric
from .omega_structure import (
    OmegaData,
    Potential,
    _require_lifts,
    laplace_q,
    quadratic_differential,
    zeta_q,
)

EYE = np.eye(pe.DIM)


def _stat_mask(grid: LegendreGrid) -> np.ndarray:
    return grid.regular & grid.shape.interior_mask(STAT_MARGIN)


def _tau_exp(tau, t):
    """exp(t tau) for tau in the wedge square of f (nilpotent: I + t tau)."""
    return pe.exp_skew(t * np.nan_to_num(tau))


# ------------------------------------------------------------- the family

@dataclass(frozen=True)
class ConnectionFamily:
    """Edge transports of d + t eta on one grid.

    ``mats_u``/``mats_v`` are frame transports along the edge direction,
    T(b) = T(a) M. Section transports are their metric adjoints.
    """

    grid: LegendreGrid
    eta: Potential
    t: float
    mats_u: np.ndarray
    mats_v: np.ndarray
    tree: SpanningTree
    order: int = 2

    @property
    def shape(self) -> GridShape:
        return self.grid.shape

    def section_mats(self) -> tuple:
        return pe.adjoint(self.mats_u), pe.adjoint(self.mats_v)

    def orthogonality(self) -> float:
        return float(max(np.max(pe.orthogonality_residual(self.mats_u)),
                         np.max(pe.orthogonality_residual(self.mats_v))))

    def holonomy(self) -> np.ndarray:
        """Per-plaquette ||H - I||_inf / (du dv) around the oriented boundary."""
        s = self.shape
        Mu, Mv = self.mats_u, self.mats_v
        bottom = Mu[:, : s.nv]
        top = np.roll(Mu, -1, 1)[:, : s.nv]
        left = Mv[: s.mu]
        right = np.roll(Mv, -1, 0)[: s.mu]
        H = bottom @ right @ pe.adjoint(top) @ pe.adjoint(left)
        return np.max(np.abs(H - EYE), axis=(-2, -1)) / (s.du * s.dv)

    def holonomy_residual(self, mask=None) -> float:
        h = self.holonomy()
        if mask is None:
            mask = plaquette_mask(self.shape, _stat_mask(self.grid))
        h = h[mask]
        return float(np.max(h)) if h.size else 0.0

    def period_holonomy(self) -> dict:
        """Transport around each closed parameter line through the base node."""
        s = self.shape
        i0, j0 = self.tree.base
        out = {}
        if s.periodic_u:
            H = EYE.copy()
            for i in range(s.m):
                H = H @ self.mats_u[(i0 + i) % s.m, j0]
            out["u"] = float(np.max(np.abs(H - EYE)))
        if s.periodic_v:
            H = EYE.copy()
            for j in range(s.n):
                H = H @ self.mats_v[i0, (j0 + j) % s.n]
            out["v"] = float(np.max(np.abs(H - EYE)))
        return out


def _edge_tau(shape: GridShape, tau):
    """Start and end node samples of a node field on u- and v-edges."""
    ua, ub = tau[: shape.mu], np.roll(tau, -1, 0)[: shape.mu]
    va, vb = tau[:, : shape.nv], np.roll(tau, -1, 1)[:, : shape.nv]
    return ua, ub, va, vb


def _magnus(a, b, h, t):
    """exp of the fourth-order Magnus step for T' = t T eta from Gauss samples."""
    a = t * np.nan_to_num(a)
    b = t * np.nan_to_num(b)
    return pe.exp_skew(0.5 * h * (a + b) + (np.sqrt(3.0) / 12.0) * h * h * (a @ b - b @ a))


def edge_transports(shape: GridShape, eta: Potential, t: float, order: int = 2) -> tuple:
    """Frame transports of d + t eta on u- and v-edges."""
    if order == 2:
        e = eta.eta
        return (pe.exp_skew(t * shape.du * np.nan_to_num(e.u)),
                pe.exp_skew(t * shape.dv * np.nan_to_num(e.v)))
    if order != 4:
        raise ParameterError(f"transport order must be 2 or 4, got {order}")
    nu, nv = eta.node_samples()
    a, b = gauss_samples(nu, 0, shape.periodic_u)
    Mu = _magnus(a, b, shape.du, t)
    a, b = gauss_samples(nv, 1, shape.periodic_v)
    Mv = _magnus(a, b, shape.dv, t)
    return Mu, Mv


def build_family(grid: LegendreGrid, eta: Potential, t: float,
                 tree: SpanningTree | None = None, order: int = 2) -> ConnectionFamily:
    """Edge transports of d + t eta; gauged potentials go through the root."""
    s = grid.shape
    tree = tree or SpanningTree(s)
    root = eta.root if eta.root is not None else eta
    Mu, Mv = edge_transports(s, root, t, order)
    if eta.root is not None and eta.tau is not None and t != 0:
        ua, ub, va, vb = _edge_tau(s, eta.tau)
        Mu = _tau_exp(ua, t) @ Mu @ _tau_exp(ub, -t)
        Mv = _tau_exp(va, t) @ Mv @ _tau_exp(vb, -t)
    return ConnectionFamily(grid, eta, float(t), Mu, Mv, tree, order)


# ------------------------------------------------------------- Calapso

@dataclass(frozen=True)
class GaugeFrame:
    T: np.ndarray  # (m, n, 6, 6)
    t: float
    base: tuple
    loop_residual: float
    tree_defect: float = 0.0
    period_holonomy: dict = field(default_factory=dict)
    flags: tuple = ()

    def orthogonality(self) -> float:
        return float(np.max(pe.orthogonality_residual(self.T)))


def plaquette_path_residual(T, family: ConnectionFamily) -> float:
    """max over plaquettes of ||T(a) (M_bottom M_right - M_left M_top)||.

    The two paths around each plaquette start from the integrated frame at
    its first corner.
    """
    s = family.shape
    Mu, Mv = family.mats_u, family.mats_v
    bottom = Mu[:, : s.nv]
    top = np.roll(Mu, -1, 1)[:, : s.nv]
    left = Mv[: s.mu]
    right = np.roll(Mv, -1, 0)[: s.mu]
    Ta = T[: s.mu, : s.nv]
    r = np.max(np.abs(Ta @ (bottom @ right - left @ top)), axis=(-2, -1))
    keep = np.ones(r.shape, dtype=bool)
    if s.periodic_u:
        keep[-1] = False
    if s.periodic_v:
        keep[:, -1] = False
    r = r[keep & plaquette_mask(s, family.grid.regular)]
    return float(np.max(r)) if r.size else 0.0


def trivialize(family: ConnectionFamily) -> GaugeFrame:
    """T with T(base) = I and T(b) = T(a) M_e along the spanning tree."""
    tree = family.tree
    T = tree.integrate_frames(family.mats_u, family.mats_v, right=True)
    loop = plaquette_path_residual(T, family)
    per = family.period_holonomy()
    flags = ("cut-grid",) if per else ()
    defect = tree.frame_loop_residual(T, family.mats_u, family.mats_v)
    return GaugeFrame(T, family.t, tree.base, loop, defect, per, flags)


def pinned_frame(frame: GaugeFrame, tau) -> GaugeFrame:
    """Trivializing frame of eta - d tau, pinned to I at the base node.

    Equals T exp(-t tau) up to the constant exp(t tau(base)) on the left.
    """
    t = frame.t
    i0, j0 = frame.base
    T = _tau_exp(tau[i0, j0], t) @ frame.T @ _tau_exp(tau, -t)
    return replace(frame, T=T)


def cut_shape(shape: GridShape, frame, tol: float = DEFAULT_TOL.geometric) -> GridShape:
    """Drop periodicity in directions with nontrivial period holonomy.

    ``frame`` is a GaugeFrame, a ConnectionFamily or a period-holonomy dict.
    """
    if isinstance(frame, ConnectionFamily):
        per = frame.period_holonomy()
    elif isinstance(frame, GaugeFrame):
        per = frame.period_holonomy
    else:
        per = dict(frame)
    pu = shape.periodic_u and per.get("u", 0.0) <= tol
    pv = shape.periodic_v and per.get("v", 0.0) <= tol
    return replace(shape, periodic_u=pu, periodic_v=pv)


def cut_grid(grid: LegendreGrid, shape: GridShape) -> LegendreGrid:
    return grid if shape == grid.shape else replace(grid, shape=shape)


def _restrict_form(form: EdgeForm, shape: GridShape) -> EdgeForm:
    return EdgeForm(shape, form.u[: shape.mu], form.v[:, : shape.nv])


def calapso_potential(family: ConnectionFamily, frame: GaugeFrame,
                      shape: GridShape | None = None) -> Potential:
    """eta^t = Ad_{T} eta with T taken at the edge midpoint of the flow."""
    s = family.shape
    eta = family.eta.eta
    t = family.t
    Tu = frame.T[: s.mu] @ pe.exp_skew(0.5 * t * s.du * np.nan_to_num(eta.u))
    Tv = frame.T[:, : s.nv] @ pe.exp_skew(0.5 * t * s.dv * np.nan_to_num(eta.v))
    new = EdgeForm(s, pe.conjugate(Tu, eta.u), pe.conjugate(Tv, eta.v))
    if shape is not None:
        new = _restrict_form(new, shape)
    nu, nv = family.eta.node_samples()
    nodes = (pe.conjugate(frame.T, nu), pe.conjugate(frame.T, nv))
    return Potential(new, kind=f"calapso({family.eta.kind})", info={"t": t}, nodes=nodes)


def calapso(grid: LegendreGrid, frame: GaugeFrame,
            family: ConnectionFamily | None = None, tol: Tolerances = DEFAULT_TOL) -> tuple:
    """(f^t, eta^t): apply T per node and re-split against the space form.

    Periodic directions with monodromy are cut, so the transform lives on
    one sheet of the universal cover.
    """
    cut = cut_shape(grid.shape, frame, tol.geometric)
    src = replace(grid, shape=cut) if cut != grid.shape else grid
    ft = transformed_grid(src, frame.T, name=f"{grid.name}-calapso", tol=tol)
    eta_t = calapso_potential(family, frame, cut) if family is not None else None
    return ft, eta_t


def calapso_report(grid: LegendreGrid, eta: Potential, t: float,
                   tree: SpanningTree | None = None, order: int = 4,
                   tol: Tolerances = DEFAULT_TOL) -> dict:
    """q^t against q and g^L,t against g^L on the transformed grid."""
    fam = build_family(grid, eta, t, tree, order)
    fr = trivialize(fam)
    ft, eta_t = calapso(grid, fr, fam, tol)
    mask = _stat_mask(grid) & _stat_mask(ft)
    q = quadratic_differential(grid, eta)
    qt = quadratic_differential(ft, eta_t)
    dq = max(float(np.max(np.abs(getattr(qt, c) - getattr(q, c))[mask])) for c in "abc")
    qs = max(float(np.max(np.abs(getattr(q, c))[mask])) for c in "abc")
    g = lie_metric(grid).b
    gt = lie_metric(ft).b
    dg = float(np.max(np.abs(gt - g)[mask]))
    return {
        "t": t,
        "q_deviation": dq,
        "q_scale": qs,
        "lie_metric_deviation": dg,
        "lie_metric_scale": float(np.max(np.abs(g[mask]))),
        "loop_residual": fr.loop_residual,
        "frame_orthogonality": fr.orthogonality(),
        "ideal_nodes": int(np.sum(ft.ideal)) if ft.ideal is not None else 0,
        "grid": ft,
        "frame": fr,
    }


def permutability(grid: LegendreGrid, eta: Potential, s_par: float, t_par: float,
                  order: int = 4) -> float:
    """max ||T^t(s) T(t) - T(s + t)|| with T^t(s) trivializing d + s eta^t.

    All frames are pinned to I at the base node; eta^t lives on the cut
    grid when a period carries monodromy.
    """
    fam_t = build_family(grid, eta, t_par, order=order)
    fr_t = trivialize(fam_t)
    cut = cut_shape(grid.shape, fr_t)
    eta_t = calapso_potential(fam_t, fr_t, cut)
    grid_cut = replace(grid, shape=cut) if cut != grid.shape else grid
    fr_st = trivialize(build_family(grid_cut, eta_t, s_par, order=order))
    fr_sum = trivialize(build_family(grid, eta, s_par + t_par, order=order))
    return float(np.max(np.abs(fr_st.T @ fr_t.T - fr_sum.T)))


# ------------------------------------------------------------- parallel sections

@dataclass(frozen=True)
class ParallelSection:
    sigma: np.ndarray  # (m, n, 6)
    m: float
    null_drift: float
    loop_residual: float


def parallel_section(family: ConnectionFamily, v0, tol: Tolerances = DEFAULT_TOL,
                     check: bool = True) -> ParallelSection:
    """Integrate d sigma = -m eta sigma from the base node along the tree."""
    v0 = np.asarray(v0, float)
    Su, Sv = family.section_mats()
    tree = family.tree
    sig = tree.integrate_vectors(Su, Sv, v0)
    scale = max(float(np.dot(v0, v0)), 1e-300)
    drift = float(np.max(np.abs(pe.norm2(sig) - pe.norm2(v0)))) / scale
    loop = _section_loop(sig, Su, Sv, family) / np.sqrt(scale)
    bound = tol.certification
    if check and loop > bound:
        raise PathDependenceError(f"parallel section loop residual {loop:.3e} exceeds {bound:.1e}")
    return ParallelSection(sig, family.t, drift, loop)


def _section_loop(sig, Su, Sv, family: ConnectionFamily) -> float:
    """Largest mismatch of the section across non-tree, non-wrap edges among regular nodes."""
    s = family.shape
    reg = family.grid.regular
    ru = np.max(np.abs(pe.apply(Su, sig[: s.mu]) - np.roll(sig, -1, 0)[: s.mu]), axis=-1)
    rv = np.max(np.abs(pe.apply(Sv, sig[:, : s.nv]) - np.roll(sig, -1, 1)[:, : s.nv]), axis=-1)
    mu, mv = edge_masks(s, reg)
    tu, tv = family.tree.tree_edge_masks
    keep_u, keep_v = mu & ~tu, mv & ~tv
    if s.periodic_u:
        keep_u[-1] = False
    if s.periodic_v:
        keep_v[:, -1] = False
    vals = np.concatenate([ru[keep_u], rv[keep_v]])
    return float(vals.max()) if vals.size else 0.0


def seed_from_point(grid: LegendreGrid, point) -> np.ndarray:
    """Null seed at the base node: the point sphere of an R^3 point."""
    from .legendre import lift_point
    return lift_point(grid.frame, np.asarray(point, float))


# ------------------------------------------------------------- Darboux

@dataclass(frozen=True)
class DarbouxResult:
    grid: LegendreGrid  # f, on the grid the section lives on (cut if needed)
    sigma_hat: np.ndarray
    s0: np.ndarray
    f_hat: LegendreGrid
    m: float
    null_drift: float
    loop_residual: float
    contact_residual: float
    genericity: float
    s_infty: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def _unit_e(a):
    n = np.linalg.norm(a, axis=-1, keepdims=True)
    return a / np.where(n == 0, 1.0, n)


def genericity_margin(grid: LegendreGrid, sig_hat) -> np.ndarray:
    """min over i of |(sigma_hat, sigma_i)| / (|sigma_hat| |sigma_i|), Euclidean norms."""
    a = _unit_e(sig_hat)
    return np.minimum(np.abs(pe.inner(a, _unit_e(grid.sigma1))),
                      np.abs(pe.inner(a, _unit_e(grid.sigma2))))


def darboux_from_section(grid: LegendreGrid, sig_hat, m: float = 0.0,
                         tol: Tolerances = DEFAULT_TOL, check: bool = True,
                         null_drift: float = 0.0, loop_residual: float = 0.0) -> DarbouxResult:
    """f_hat = s0 + s_hat with s0 the line of f orthogonal to s_hat."""
    s = grid.shape
    reg = grid.regular
    gen = genericity_margin(grid, sig_hat)
    bad = reg & ~(gen > tol.genericity)
    if check and np.any(bad):
        nodes = [tuple(int(k) for k in ij) for ij in zip(*np.nonzero(bad))]
        raise GenericityError(f"section nearly orthogonal to a curvature sphere at {len(nodes)} nodes",
                              nodes)
    s1, s2 = np.nan_to_num(grid.sigma1), np.nan_to_num(grid.sigma2)
    s0 = pe.inner(sig_hat, s2)[..., None] * s1 - pe.inner(sig_hat, s1)[..., None] * s2
    f_hat_pt, t_hat_pl, ideal = split_plane(grid.frame, s0, sig_hat, tol.conditioning)
    ideal = ideal | ~reg
    x_hat = np.where(ideal[..., None], 0.0, f_hat_pt[..., :3])
    n_hat = np.where(ideal[..., None], 0.0, t_hat_pl[..., :3])
    est = estimate_principal_data(SurfaceGrid(s, x_hat, n_hat, name=f"{grid.name}-darboux"),
                                  tol, check=False)
    k1, k2 = est.kappa1, est.kappa2
    umb = umbilic_mask(k1, k2, tol.umbilic_rel) | ideal
    sig1, sig2 = (t_hat_pl + k1[..., None] * f_hat_pt, t_hat_pl + k2[..., None] * f_hat_pt)
    f_hat = LegendreGrid(
        shape=s, frame=grid.frame, f_pt=f_hat_pt, t_pl=t_hat_pl, kappa1=k1, kappa2=k2,
        E=est.E, G=est.G, umbilic=umb,
        sigma1=np.where(umb[..., None], np.nan, sig1), sigma2=np.where(umb[..., None], np.nan, sig2),
        name=est.name, ideal=ideal,
        extras={"offdiag": est.offdiag, "kappa_difference": k1 - k2},
    )
    contact = _orthsec_residual(grid, s0, sig_hat)
    mask = _stat_mask(grid)
    return DarbouxResult(
        grid=grid, sigma_hat=sig_hat, s0=s0, f_hat=f_hat, m=float(m), null_drift=null_drift,
        loop_residual=loop_residual, contact_residual=contact,
        genericity=float(np.min(gen[mask])) if mask.any() else 0.0,
    )


def _orthsec_residual(grid: LegendreGrid, s0, sig_hat) -> float:
    """Derivatives of s0 and s_hat must be orthogonal to f + f_hat.

    Pairings of d s0 and d s_hat with s0, s_hat and a complementary
    sphere in f, relative to the Euclidean sizes.
    """
    s = grid.shape
    comp = _complement(grid, s0)
    mask = _stat_mask(grid)
    worst = 0.0
    for w in (s0, sig_hat):
        for d in (d_u4(w, s), d_v4(w, s)):
            for c in (s0, sig_hat, comp):
                r = np.abs(pe.inner(d, c)) / (np.linalg.norm(d, axis=-1) * np.linalg.norm(c, axis=-1) + 1e-300)
                worst = max(worst, float(np.max(r[mask])))
    return worst


def _complement(grid: LegendreGrid, s0, kind: str = "euclidean") -> np.ndarray:
    """A sphere of f transverse to s0: the Euclidean complement, or sigma1/sigma2."""
    if kind == "sigma1":
        return np.nan_to_num(grid.sigma1)
    if kind == "sigma2":
        return np.nan_to_num(grid.sigma2)
    if kind != "euclidean":
        raise ParameterError(f"unknown complement choice {kind!r}")
    a, b = grid.f_pt, grid.t_pl
    # rotate s0 by a right angle inside f, Euclidean-wise
    c = np.sum(s0 * b, -1)[..., None] * a - np.sum(s0 * a, -1)[..., None] * b
    return _unit_e(c)


def darboux(grid: LegendreGrid, eta: Potential, m: float, v0=None, seed_point=(3.0, 0.0, 0.5),
            order: int = 4, tol: Tolerances = DEFAULT_TOL, check: bool = True) -> DarbouxResult:
    """Darboux transform from the parallel section of d + m eta through v0."""
    if m == 0:
        raise ParameterError("the Darboux parameter must be nonzero")
    if v0 is None:
        v0 = seed_from_point(grid, seed_point)
    v0 = np.asarray(v0, float)
    if abs(float(pe.norm2(v0))) > tol.algebraic * max(1.0, float(np.dot(v0, v0))):
        raise ParameterError("Darboux seed must be a null vector")
    fam = build_family(grid, eta, m, order=order)
    sec = parallel_section(fam, v0, tol, check=check)
    # sections with monodromy live on the cut grid
    base = cut_grid(grid, cut_shape(grid.shape, fam, tol.geometric))
    res = darboux_from_section(base, sec.sigma, m, tol, check, sec.null_drift, sec.loop_residual)
    return replace(res, info={"seed": v0, "order": order, "period_holonomy": fam.period_holonomy()})


# ------------------------------------------------------------- Ribaucour and the enveloping point

def _line_connection(shape: GridShape, B) -> tuple:
    """Edge coefficients of the projected connection on span(B), B (m, n, 6, 2)."""
    B = np.nan_to_num(B)

    def coeff(Ba, Bb, h):
        mid = 0.5 * (Ba + Bb)
        dB = (Bb - Ba) / h
        gram = np.swapaxes(mid, -1, -2) @ (pe.SIGNATURE[:, None] * mid)
        rhs = np.swapaxes(mid, -1, -2) @ (pe.SIGNATURE[:, None] * dB)
        return np.linalg.solve(gram, rhs)

    wu = coeff(B[: shape.mu], np.roll(B, -1, 0)[: shape.mu], shape.du)
    wv = coeff(B[:, : shape.nv], np.roll(B, -1, 1)[:, : shape.nv], shape.dv)
    return wu, wv


def _small_expm(W):
    from . import _kernels
    shape = W.shape
    flat = np.ascontiguousarray(W.reshape((-1,) + shape[-2:]))
    return _kernels.expm_batch(flat, 0.0).reshape(shape)


def line_holonomy(shape: GridShape, B) -> np.ndarray:
    """Per-plaquette holonomy density of the induced connection on span(B)."""
    wu, wv = _line_connection(shape, B)
    # coordinates c of a parallel section obey dc = -w c
    s = shape
    wu = np.nan_to_num(wu)
    wv = np.nan_to_num(wv)
    bottom = _small_expm(-s.du * wu[:, : s.nv])
    top_back = _small_expm(s.du * np.roll(wu, -1, 1)[:, : s.nv])
    left_back = _small_expm(s.dv * wv[: s.mu])
    right = _small_expm(-s.dv * np.roll(wv, -1, 0)[: s.mu])
    # around the plaquette: bottom, right, back along the top, back down the left
    H = left_back @ top_back @ right @ bottom
    return np.max(np.abs(H - np.eye(2)), axis=(-2, -1)) / (s.du * s.dv)


def ribaucour_check(result: DarbouxResult, complement: str = "euclidean") -> dict:
    """Flatness of the connection induced on l = s + s_hat, s a complement of s0 in f."""
    f = result.grid
    s = f.shape
    sig = _complement(f, result.s0, complement)
    sh = result.sigma_hat
    den = np.abs(pe.inner(sig, sh)) / (np.linalg.norm(sig, axis=-1) * np.linalg.norm(sh, axis=-1) + 1e-300)
    mask = _stat_mask(f) & _stat_mask(result.f_hat)
    if np.min(den[mask]) < DEFAULT_TOL.genericity:
        raise GenericityError("chosen complement meets s0", list(zip(*np.nonzero(mask & (den < 1e-4)))))
    B = np.stack([sig, sh], -1)
    hol = line_holonomy(s, B)
    pm = plaquette_mask(s, mask)
    return {
        "complement": complement,
        "holonomy": float(np.max(hol[pm])) if pm.any() else 0.0,
        "curvature_direction_residual": float(result.f_hat.extras.get("offdiag", np.nan)),
    }


def enveloping_point(f: LegendreGrid, f_hat: LegendreGrid, tol: Tolerances = DEFAULT_TOL) -> dict:
    """s_infty = (s1 + s1_hat) meet (s2 + s2_hat) inside f + f_hat."""
    s = f.shape
    reg = f.regular & f_hat.regular
    A = np.stack([f.sigma1, f_hat.sigma1, -f.sigma2, -f_hat.sigma2], -1)
    A = np.where(reg[..., None, None], np.nan_to_num(A), np.eye(6)[:, :4])
    A = A / np.linalg.norm(A, axis=-2, keepdims=True)
    _, sv, vt = np.linalg.svd(A)
    coef = vt[..., -1, :]
    cond = sv[..., -1] / sv[..., 0]
    # the two lines intersect: the smallest singular value vanishes, the next must not
    gap = sv[..., -2] / sv[..., 0]
    mask = _stat_mask(f) & reg
    if mask.any() and np.min(gap[mask]) < tol.conditioning:
        raise IllConditionedError("curvature-sphere lines are numerically parallel")
    A0 = np.stack([f.sigma1, f_hat.sigma1], -1)
    A0 = A0 / np.linalg.norm(A0, axis=-2, keepdims=True)
    pt = np.einsum("...ij,...j->...i", np.nan_to_num(A0), coef[..., :2])
    pt = _align_signs(_unit_e(pt))
    pt = np.where(reg[..., None], pt, np.nan)
    # derivative containment in the 3-space f + f_hat
    on = _span_basis(np.stack([f.f_pt, f.t_pl, f_hat.f_pt, f_hat.t_pl], -1), 3)
    on = np.where(reg[..., None, None], on, np.eye(6)[:, :3])
    worst = 0.0
    p0 = np.nan_to_num(pt)
    for d in (d_u4(p0, s), d_v4(p0, s)):
        # s_infty is unit, so the absolute off-span part is already relative
        r = _off_span(on, d) * np.linalg.norm(d, axis=-1)
        worst = max(worst, float(np.max(r[mask])) if mask.any() else 0.0)
    return {
        "s_infty": pt,
        "intersection_residual": float(np.max(cond[mask])) if mask.any() else 0.0,
        "derivative_residual": worst,
    }


def _align_signs(vec: np.ndarray) -> np.ndarray:
    """Make a projective field continuous by flipping signs along the tree paths."""
    v = np.array(vec)
    m, n = v.shape[:2]
    j0 = n // 2
    for i in range(1, m):
        if np.dot(v[i, j0], v[i - 1, j0]) < 0:
            v[i, j0] *= -1
    for j in list(range(j0 + 1, n)) + list(range(j0 - 1, -1, -1)):
        prev = j - 1 if j > j0 else j + 1
        flip = np.einsum("ij,ij->i", v[:, j], v[:, prev]) < 0
        v[flip, j] *= -1
    return v


def _span_basis(vectors, rank: int) -> np.ndarray:
    """Euclidean-orthonormal basis (..., 6, rank) of the leading singular directions."""
    v = np.nan_to_num(vectors)
    v = v / np.maximum(np.linalg.norm(v, axis=-2, keepdims=True), 1e-300)
    U, _, _ = np.linalg.svd(v, full_matrices=False)
    return U[..., :rank]


def _off_span(on, d) -> np.ndarray:
    """Relative Euclidean size of the part of d outside the span of ``on``."""
    c = np.einsum("...ji,...j->...i", on, d)
    r = d - np.einsum("...ij,...j->...i", on, c)
    return np.linalg.norm(r, axis=-1) / (np.linalg.norm(d, axis=-1) + 1e-300)


# ------------------------------------------------------------- the potential of the transform

def _pair_projection(a, b):
    """Projection onto span(a, b) for null a, b with (a, b) != 0."""
    c = pe.inner(a, b)

    def proj(v):
        return (pe.inner(v, b) / c)[..., None] * a + (pe.inner(v, a) / c)[..., None] * b
    return proj


def _gamma(sig, sig_hat, lam):
    """Gamma^{s_hat}_{s}(lam): lam on s_hat, 1/lam on s, identity on the rest (node field)."""
    c = pe.inner(sig, sig_hat)[..., None, None]
    G = pe.SIGNATURE
    # v -> v + (lam - 1)(v, sig)/c sig_hat + (1/lam - 1)(v, sig_hat)/c sig
    A = np.einsum("...i,...j->...ij", sig_hat, sig * G) * (lam - 1.0)
    B = np.einsum("...i,...j->...ij", sig, sig_hat * G) * (1.0 / lam - 1.0)
    return EYE + (A + B) / c


@dataclass(frozen=True)
class HatPotential:
    potential: Potential  # on the grid of f_hat
    sigma: np.ndarray  # lift of s, the complement of s0 in f
    report: dict


def hat_eta(eta: Potential, result: DarbouxResult, sigma=None, check_t: float | None = None,
            tol: Tolerances = DEFAULT_TOL) -> HatPotential:
    """eta_hat = eta_0 + beta / m from the splitting along l = s + s_hat.

    ``sigma`` defaults to the Euclidean complement of s0 in f.
    """
    f, fh, m = result.grid, result.f_hat, result.m
    s = f.shape
    sig = _complement(f, result.s0) if sigma is None else np.nan_to_num(np.asarray(sigma, float))
    sh = result.sigma_hat
    c = pe.inner(sig, sh)
    mask = _stat_mask(f) & _stat_mask(fh)
    rel = np.abs(c) / (np.linalg.norm(sig, axis=-1) * np.linalg.norm(sh, axis=-1) + 1e-300)
    if mask.any() and np.min(rel[mask]) < tol.genericity:
        raise GenericityError("s is nearly orthogonal to s_hat", list(zip(*np.nonzero(mask & (rel < tol.genericity)))))
    proj = _pair_projection(sig, sh)
    Eu, Ev = eta.node_samples()
    derivs = (d_u4(sig, s), d_v4(sig, s))
    hat = []
    for E, dsig in zip((Eu, Ev), derivs):
        E = np.nan_to_num(E)
        eta_s = pe.wedge(sig, pe.apply(E, sh)) / c[..., None, None]
        omega = dsig - proj(dsig)
        beta = -pe.wedge(sh, omega) / c[..., None, None]
        hat.append(E - eta_s + beta / m)
    pot = Potential(EdgeForm.from_nodes(s, hat[0], hat[1]), kind=f"darboux({eta.kind})",
                    info={"m": m}, nodes=(hat[0], hat[1]))
    t = 0.5 * m if check_t is None else check_t
    rep = _hat_eta_report(f, fh, eta, pot, sig, sh, m, t, mask)
    return HatPotential(pot, sig, rep)


def _hat_eta_report(f, fh, eta, pot, sig, sh, m, t, mask) -> dict:
    s = f.shape
    Hu, Hv = pot.node_samples()
    Eu, Ev = eta.node_samples()
    out = {}
    # s is parallel for d + m eta_hat: the image stays on s
    worst = 0.0
    for H, d in ((Hu, d_u4(sig, s)), (Hv, d_v4(sig, s))):
        w = d + m * pe.apply(H, sig)
        r = _off_span(_unit_e(sig)[..., None], w) * np.linalg.norm(w, axis=-1) / np.linalg.norm(sig, axis=-1)
        worst = max(worst, float(np.max(r[mask])))
    out["parallel_residual"] = worst
    # eta_hat kills f_hat
    worst = 0.0
    for H in (Hu, Hv):
        ref = np.max(np.abs(H), axis=(-2, -1)) + 1e-300
        for w in (fh.f_pt, fh.t_pl):
            r = np.linalg.norm(pe.apply(H, np.nan_to_num(w)), axis=-1) / (ref * np.linalg.norm(np.nan_to_num(w), axis=-1) + 1e-300)
            worst = max(worst, float(np.max(r[mask])))
    out["annihilation_residual"] = worst
    # gauge relation d + t eta_hat = Gamma(1 - t/m) (d + t eta)
    if t != m:
        g = _gamma(sig, sh, 1.0 - t / m)
        gi = pe.adjoint(g)
        worst = 0.0
        for H, E, dg in ((Hu, Eu, d_u4(g, s)), (Hv, Ev, d_v4(g, s))):
            lhs = t * H
            rhs = g @ (t * np.nan_to_num(E)) @ gi - dg @ gi
            r = np.max(np.abs(lhs - rhs), axis=(-2, -1)) / (np.max(np.abs(rhs), axis=(-2, -1)) + 1e-300)
            worst = max(worst, float(np.max(r[mask])))
        out["gamma_residual"] = worst
    pm = plaquette_mask(s, mask)
    ref = max(float(np.max(np.abs(pot.eta.u))), 1e-300)
    out["closure"] = pot.closure_residual(pm) / ref
    out["bracket"] = pot.bracket_residual(pm) / ref**2
    q = quadratic_differential(f, eta)
    qh = quadratic_differential(fh, pot)
    scale = max(float(np.max(np.abs(q.a[mask]))), float(np.max(np.abs(q.c[mask]))), 1e-300)
    dev = max(float(np.max(np.abs(qh.a - q.a)[mask])), float(np.max(np.abs(qh.b - q.b)[mask])),
              float(np.max(np.abs(qh.c - q.c)[mask])))
    out["q_deviation"] = dev
    out["q_scale"] = scale
    return out


# ------------------------------------------------------------- structure of Darboux pairs

def umbilic_prediction(result: DarbouxResult, data: OmegaData, dilation: int = 2) -> dict:
    """Zeros of zeta_q(s0, s0) against the umbilics of f_hat.

    Both sets are read off as sign changes between neighbouring nodes.
    Umbilics of f_hat are zeros of sin(theta1 - theta2), kappa_i = tan
    theta_i, which stays smooth where a curvature passes through infinity.
    """
    from scipy.ndimage import binary_dilation

    f, fh = result.grid, result.f_hat
    z = zeta_q(f, data, result.s0)
    k1, k2 = fh.kappa1, fh.kappa2
    gap = (k1 - k2) / np.sqrt((1.0 + k1**2) * (1.0 + k2**2))
    mask = _stat_mask(f) & fh.regular
    pred = _sign_changes(z, mask)
    seen = _sign_changes(gap, mask)
    near_pred = binary_dilation(pred, iterations=dilation)
    near_seen = binary_dilation(seen, iterations=dilation)
    return {
        "predicted": int(pred.sum()),
        "detected": int(seen.sum()),
        "unpredicted": int((seen & ~near_pred).sum()),
        "unconfirmed": int((pred & ~near_seen).sum()),
        "agree": bool(not (seen & ~near_pred).any() and not (pred & ~near_seen).any()),
        "zeta_sign_changes": bool(pred.any()),
    }


def _sign_changes(a, mask) -> np.ndarray:
    """Nodes at either end of an edge across which a changes sign, both ends in mask."""
    sg = np.sign(np.nan_to_num(a))
    out = np.zeros(a.shape, bool)
    e = (sg[1:] != sg[:-1]) & mask[1:] & mask[:-1]
    out[1:] |= e
    out[:-1] |= e
    e = (sg[:, 1:] != sg[:, :-1]) & mask[:, 1:] & mask[:, :-1]
    out[:, 1:] |= e
    out[:, :-1] |= e
    return out


def middle_potential_darboux_structure(result: DarbouxResult, data: OmegaData,
                                       s_infty=None) -> dict:
    """V_q = s0 + d s0(T) + <Delta_q s0>: signature and orthogonality to s_hat, s_infty."""
    f = result.grid
    s = f.shape
    s0 = result.s0
    lap = laplace_q(f, data, s0)
    X = d_u(s0, s) / data.U[:, None, None]
    Y = d_v(s0, s) / data.V[None, :, None]
    V = np.stack([s0, X, Y, lap], -1)
    gram = np.swapaxes(V, -1, -2) @ (pe.SIGNATURE[:, None] * V)
    # scale-free eigen-signs
    nrm = np.linalg.norm(V, axis=-2)
    gram = gram / (nrm[..., :, None] * nrm[..., None, :] + 1e-300)
    ev = np.linalg.eigvalsh(gram)
    mask = _stat_mask(f) & _stat_mask(result.f_hat)
    pos = (ev > 0).sum(-1)
    neg = (ev < 0).sum(-1)
    sig_ok = (pos == 3) & (neg == 1)
    sh = result.sigma_hat

    def rel(a, b):
        return np.abs(pe.inner(a, b)) / (np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1) + 1e-300)

    out = {
        "signature_fraction": float(sig_ok[mask].mean()) if mask.any() else 0.0,
        "min_abs_eigenvalue": float(np.min(np.abs(ev)[mask])) if mask.any() else 0.0,
        "laplace_hat_residual": float(np.max(rel(lap, sh)[mask])),
        "s_hat_orthogonality": float(max(np.max(rel(w, sh)[mask]) for w in (s0, X, Y, lap))),
    }
    if s_infty is None:
        s_infty = enveloping_point(f, result.f_hat)["s_infty"]
    si = np.nan_to_num(s_infty)
    out["s_infty_orthogonality"] = float(max(np.max(rel(w, si)[mask]) for w in (s0, X, Y, lap)))
    return out


def gauge_covariance(grid: LegendreGrid, eta: Potential, tau_coeff, m: float, v0,
                     order: int = 4, tol: Tolerances = DEFAULT_TOL) -> dict:
    """Darboux transforms from eta and from eta - d tau with the seed moved by exp(m tau)."""
    from .omega_structure import gauge

    gauged = gauge(eta, tau_coeff, eta.lifts)
    base = SpanningTree(grid.shape).base
    v0 = np.asarray(v0, float)
    tau_base = gauged.tau[base] if eta.tau is None else gauged.tau[base] - eta.tau[base]
    r1 = darboux(grid, eta, m, v0=v0, order=order, tol=tol, check=False)
    r2 = darboux(grid, gauged, m, v0=_tau_exp(tau_base, m) @ v0, order=order, tol=tol, check=False)
    mask = _stat_mask(r1.grid)
    d = plane_distance(r1.f_hat, r2.f_hat)
    return {"line_distance": float(np.max(d[mask])), "first": r1, "second": r2}


def plane_distance(a: LegendreGrid, b: LegendreGrid) -> np.ndarray:
    """Nodewise distance between the planes of two grids (Euclidean projectors)."""
    def projector(g):
        on = _span_basis(np.stack([g.f_pt, g.t_pl], -1), 2)
        return on @ np.swapaxes(on, -1, -2)
    return np.max(np.abs(projector(a) - projector(b)), axis=(-2, -1))


def involution_check(eta: Potential, result: DarbouxResult, order: int = 4,
                     tol: Tolerances = DEFAULT_TOL) -> dict:
    """A Darboux transform of f_hat with eta_hat and parameter m, seeded on s, gives back f."""
    hp = hat_eta(eta, result, tol=tol)
    fh = result.f_hat
    base = SpanningTree(fh.shape).base
    seed = hp.sigma[base]
    back = darboux(fh, hp.potential, result.m, v0=seed, order=order, tol=tol, check=False)
    mask = _stat_mask(result.grid) & _stat_mask(fh)
    d = plane_distance(back.f_hat, result.grid)
    return {"line_distance": float(np.max(d[mask])), "loop_residual": back.loop_residual,
            "hat_report": hp.report}


def random_section_control(result: DarbouxResult, amplitude: float = 0.3, seed: int = 0,
                           tol: Tolerances = DEFAULT_TOL) -> dict:
    """Negative control: bend the section by a smooth node-dependent rotation and redo f_hat."""
    f = result.grid
    s = f.shape
    rng = np.random.default_rng(seed)
    u = np.linspace(0.0, 1.0, s.m)[:, None]
    v = np.linspace(0.0, 1.0, s.n)[None, :]
    gen = np.zeros((s.m, s.n, 6, 6))
    for k in range(3):
        a, b = rng.normal(size=2)
        field_ = amplitude * np.sin(np.pi * (k + 1) * u + a) * np.cos(np.pi * (k + 1) * v + b)
        A = rng.normal(size=(6, 6))
        A = A - pe.adjoint(A)  # skew in the metric
        gen = gen + field_[..., None, None] * A / np.max(np.abs(A))
    sig = pe.apply(pe.exp_skew(gen), result.sigma_hat)
    bent = darboux_from_section(f, sig, result.m, tol, check=False)
    rb = ribaucour_check(bent)
    return {"holonomy": rb["holonomy"], "curvature_direction_residual": rb["curvature_direction_residual"],
            "contact_residual": bent.contact_residual}


def isothermic_darboux_correspondence(grid: LegendreGrid, pair, m: float, v0,
                                      order: int = 4, tol: Tolerances = DEFAULT_TOL) -> dict:
    """Darboux transforms through the isothermic potentials eta+ and eta-.

    The seeds are related by the gauge at the base node, so both runs
    describe the same f_hat; s_hat+ and s_hat- are then its isothermic
    congruences.
    """
    base = SpanningTree(grid.shape).base
    ep, em = pair.eta_plus, pair.eta_minus
    v0 = np.asarray(v0, float)
    mid_seed = _tau_exp(ep.tau[base], -m) @ v0
    vm = _tau_exp(em.tau[base], m) @ mid_seed
    rp = darboux(grid, ep, m, v0=v0, order=order, tol=tol, check=False)
    rm = darboux(grid, em, m, v0=vm, order=order, tol=tol, check=False)
    f = rp.grid
    mask = _stat_mask(f) & _stat_mask(rp.f_hat)
    out = {"same_transform": float(np.max(plane_distance(rp.f_hat, rm.f_hat)[mask]))}
    for name, res, eta, s_pm in (("plus", rp, ep, pair.splus), ("minus", rm, em, pair.sminus)):
        hp = hat_eta(eta, res, sigma=s_pm, tol=tol)
        Hu, Hv = hp.potential.node_samples()
        sh = res.sigma_hat
        worst = 0.0
        for H in (Hu, Hv):
            # distance of eta_hat from the wedge of s_hat with its orthogonal complement
            P = pe.wedge(sh, pe.apply(H, s_pm)) / pe.inner(sh, s_pm)[..., None, None]
            r = np.max(np.abs(H - P), axis=(-2, -1)) / (np.max(np.abs(H), axis=(-2, -1)) + 1e-300)
            worst = max(worst, float(np.max(r[mask])))
        out[f"containment_{name}"] = worst
        out[f"gamma_{name}"] = hp.report.get("gamma_residual", np.nan)
        out[f"parallel_{name}"] = hp.report["parallel_residual"]
    env = enveloping_point(f, rp.f_hat, tol)
    si = np.nan_to_num(env["s_infty"])
    for name, a, b in (("l1", pair.splus, rm.sigma_hat), ("l2", pair.sminus, rp.sigma_hat)):
        on = _span_basis(np.stack([a, b], -1), 2)
        out[f"s_infty_in_{name}"] = float(np.max(_off_span(on, si)[mask]))
    out["plus"], out["minus"] = rp, rm
    return out
