"""Legendre lifts of curvature-line grids in a flat space form.

A surface x with unit normal n becomes the null pair (point, tangent plane)
inside R^{4,2}; the curvature spheres are tangent-plane + kappa * point.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import pseudo_euclidean as pe
from .config import (
    DEFAULT_TOL,
    NormalizationError,
    NotCurvatureLineError,
    Tolerances,
    UnsupportedError,
)
from .forms import GridShape, d_u, d_v


@dataclass(frozen=True)
class SpaceFormFrame:
    q: np.ndarray
    p: np.ndarray
    q0: np.ndarray
    kappa: float

    def residuals(self) -> dict:
        return {
            "q_p": float(abs(pe.inner(self.q, self.p))),
            "q0_q": float(abs(pe.inner(self.q0, self.q) + 1.0)),
            "q0_q0": float(abs(pe.norm2(self.q0))),
            "p_p": float(abs(pe.norm2(self.p) + 1.0)),
        }


def build_space_form(kappa: float = 0.0) -> SpaceFormFrame:
    """Symmetry-breaking vectors for sectional curvature ``kappa`` <= 0."""
    if kappa > 0:
        raise UnsupportedError("positive curvature space forms are not supported")
    q = pe.Q_INF + 0.5 * kappa * pe.Q_ORIGIN
    return SpaceFormFrame(q=q, p=pe.P_SPHERE.copy(), q0=pe.Q_ORIGIN.copy(), kappa=float(kappa))


def _require_flat(frame: SpaceFormFrame):
    if frame.kappa != 0.0:
        raise UnsupportedError("R^3 ingestion is wired to the flat space form only")


def lift_point(frame: SpaceFormFrame, x) -> np.ndarray:
    """x + q0 + |x|^2/2 q_inf, broadcasting over leading axes."""
    _require_flat(frame)
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (6,))
    out[..., :3] = x
    out = out + frame.q0 + 0.5 * np.sum(x * x, -1)[..., None] * frame.q
    return out


def lift_tangent_plane(frame: SpaceFormFrame, x, n, tol: float = 1e-10) -> np.ndarray:
    """n + (n, x) q_inf + p."""
    _require_flat(frame)
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(np.abs(np.sum(n * n, -1) - 1.0) > tol):
        raise NormalizationError("normal is not a unit vector")
    out = np.zeros(n.shape[:-1] + (6,))
    out[..., :3] = n
    return out + np.sum(n * x, -1)[..., None] * frame.q + frame.p


@dataclass(frozen=True)
class SurfaceGrid:
    """Positions (and optional normals) on a curvature-line grid."""

    shape: GridShape
    x: np.ndarray
    normal: np.ndarray | None = None
    E: np.ndarray | None = None
    G: np.ndarray | None = None
    kappa1: np.ndarray | None = None
    kappa2: np.ndarray | None = None
    offdiag: float | None = None
    name: str = "surface"
    u: np.ndarray | None = None
    v: np.ndarray | None = None

    def __post_init__(self):
        s = self.shape
        if self.x.shape != (s.m, s.n, 3):
            raise NormalizationError(f"positions have shape {self.x.shape}, expected {(s.m, s.n, 3)}")
        if self.normal is not None and self.normal.shape != self.x.shape:
            raise NormalizationError("normals and positions differ in shape")

    @property
    def has_principal_data(self) -> bool:
        return self.kappa1 is not None


def _unit(a):
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


def estimate_principal_data(surface: SurfaceGrid, tol: Tolerances = DEFAULT_TOL,
                            check: bool = True) -> SurfaceGrid:
    """Rodrigues estimates of the principal curvatures by finite differences.

    Missing normals are taken from x_u x x_v. The shape-operator off-diagonal
    term |n_u . x_v| / sqrt(EG), relative to the curvature scale, must stay
    below ``tol.curvature_line``.
    """
    s = surface.shape
    x = surface.x
    xu, xv = d_u(x, s), d_v(x, s)
    n = surface.normal
    if n is None:
        n = _unit(np.cross(xu, xv))
    nu, nv = d_u(n, s), d_v(n, s)
    E = np.sum(xu * xu, -1)
    G = np.sum(xv * xv, -1)
    k1 = -np.sum(nu * xu, -1) / E
    k2 = -np.sum(nv * xv, -1) / G
    off = np.abs(np.sum(nu * xv, -1)) / np.sqrt(E * G)
    scale = max(1.0, float(np.max(np.abs(np.concatenate([k1.ravel(), k2.ravel()])))))
    offdiag = float(np.max(off)) / scale
    if check and offdiag > tol.curvature_line:
        raise NotCurvatureLineError(
            f"shape operator off-diagonal residual {offdiag:.3e} exceeds {tol.curvature_line:.1e}"
        )
    return replace(surface, normal=n, E=E, G=G, kappa1=k1, kappa2=k2, offdiag=offdiag)


def umbilic_mask(k1, k2, rel: float = DEFAULT_TOL.umbilic_rel) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(k1), np.abs(k2)), 1.0)
    return np.abs(k1 - k2) < rel * scale


@dataclass(frozen=True)
class LegendreGrid:
    shape: GridShape
    frame: SpaceFormFrame
    f_pt: np.ndarray
    t_pl: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray
    E: np.ndarray
    G: np.ndarray
    umbilic: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    name: str = "surface"
    ideal: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.f_pt[..., :3]

    @property
    def normal(self) -> np.ndarray:
        return self.t_pl[..., :3]

    @property
    def regular(self) -> np.ndarray:
        """Nodes usable by the Lie-applicable machinery."""
        r = ~self.umbilic
        if self.ideal is not None:
            r = r & ~self.ideal
        return r

    def invariant_residuals(self) -> dict:
        fr = self.frame
        f, t = self.f_pt, self.t_pl
        def mx(a):
            return float(np.max(np.abs(a)))
        return {
            "f_null": mx(pe.norm2(f)),
            "f_q": mx(pe.inner(f, fr.q) + 1.0),
            "f_p": mx(pe.inner(f, fr.p)),
            "t_null": mx(pe.norm2(t)),
            "t_q": mx(pe.inner(t, fr.q)),
            "t_p": mx(pe.inner(t, fr.p) + 1.0),
            "f_t": mx(pe.inner(f, t)),
        }

    def f_basis(self) -> np.ndarray:
        """Columns (point, tangent plane) spanning the Legendre plane, shape (m, n, 6, 2)."""
        return np.stack([self.f_pt, self.t_pl], axis=-1)


def curvature_sphere_lifts(f_pt, t_pl, kappa1, kappa2, umbilic=None):
    """tangent-plane + kappa_i * point; NaN at flagged umbilics."""
    s1 = t_pl + np.asarray(kappa1)[..., None] * f_pt
    s2 = t_pl + np.asarray(kappa2)[..., None] * f_pt
    if umbilic is not None:
        s1 = np.where(umbilic[..., None], np.nan, s1)
        s2 = np.where(umbilic[..., None], np.nan, s2)
    return s1, s2


def build_legendre(surface: SurfaceGrid, frame: SpaceFormFrame | None = None,
                   tol: Tolerances = DEFAULT_TOL) -> LegendreGrid:
    if frame is None:
        frame = build_space_form(0.0)
    if not surface.has_principal_data:
        surface = estimate_principal_data(surface, tol)
    f = lift_point(frame, surface.x)
    t = lift_tangent_plane(frame, surface.x, surface.normal)
    umb = umbilic_mask(surface.kappa1, surface.kappa2, tol.umbilic_rel)
    s1, s2 = curvature_sphere_lifts(f, t, surface.kappa1, surface.kappa2, umb)
    return LegendreGrid(
        shape=surface.shape, frame=frame, f_pt=f, t_pl=t,
        kappa1=np.asarray(surface.kappa1, float), kappa2=np.asarray(surface.kappa2, float),
        E=np.asarray(surface.E, float), G=np.asarray(surface.G, float),
        umbilic=umb, sigma1=s1, sigma2=s2, name=surface.name,
        ideal=np.zeros(umb.shape, dtype=bool),
    )


def check_legendre(grid: LegendreGrid, tol: Tolerances = DEFAULT_TOL) -> dict:
    """Contact residual, immersion margin and umbilic census."""
    s = grid.shape
    f, t = grid.f_pt, grid.t_pl
    fu, fv = d_u(f, s), d_v(f, s)
    tu, tv = d_u(t, s), d_v(t, s)
    contact = np.maximum.reduce([
        np.abs(pe.inner(f, tu)), np.abs(pe.inner(f, tv)),
        np.abs(pe.inner(t, fu)), np.abs(pe.inner(t, fv)),
    ])
    # The induced form on f^perp / f is positive definite, so the solder map
    # is injective exactly when I + III is.
    g11 = pe.inner(fu, fu) + pe.inner(tu, tu)
    g12 = pe.inner(fu, fv) + pe.inner(tu, tv)
    g22 = pe.inner(fv, fv) + pe.inner(tv, tv)
    mat = np.stack([np.stack([g11, g12], -1), np.stack([g12, g22], -1)], -2)
    ev = np.linalg.eigvalsh(mat)
    margin = np.sqrt(np.clip(ev[..., 0], 0.0, None))
    floor = tol.rank_rel * max(1.0, float(np.max(np.sqrt(np.abs(ev[..., 1])))))
    interior = s.interior_mask()
    return {
        "contact_residual": float(np.max(contact[interior])),
        "contact_residual_all": float(np.max(contact)),
        "immersion_margin": float(np.min(margin)),
        "immersed": bool(np.min(margin) > floor),
        "umbilic_count": int(np.sum(grid.umbilic)),
        "node_count": int(grid.umbilic.size),
        "invariants": grid.invariant_residuals(),
    }


# ------------------------------------------------------------ reprojection

def split_plane(frame: SpaceFormFrame, a, b, cond: float = DEFAULT_TOL.conditioning):
    """Point and tangent-plane lifts inside the isotropic plane span(a, b).

    Returns (f_pt, t_pl, ideal) where ``ideal`` flags nodes at which the
    plane has no finite point representative.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    ap, bp = pe.inner(a, frame.p), pe.inner(b, frame.p)
    aq, bq = pe.inner(a, frame.q), pe.inner(b, frame.q)
    det = ap * bq - bp * aq
    scale = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    ideal = np.abs(det) <= cond * np.maximum(scale, 1e-300)
    det = np.where(ideal, 1.0, det)
    # point: (.,p)=0, (.,q)=-1 ; plane: (.,p)=-1, (.,q)=0
    fa, fb = bp / det, -ap / det
    ta, tb = -bq / det, aq / det
    f = fa[..., None] * a + fb[..., None] * b
    t = ta[..., None] * a + tb[..., None] * b
    return f, t, ideal


def curvature_from_sphere(frame: SpaceFormFrame, sigma) -> np.ndarray:
    """kappa with sigma proportional to tangent-plane + kappa * point."""
    return pe.inner(sigma, frame.q) / pe.inner(sigma, frame.p)


def transformed_grid(grid: LegendreGrid, T, name: str | None = None,
                     E=None, G=None, tol: Tolerances = DEFAULT_TOL) -> LegendreGrid:
    """Apply per-node (or constant) orthogonal maps and re-split.

    Curvature spheres are mapped by T, so the new principal curvatures are
    read off algebraically. E and G default to finite differences of the new
    positions.
    """
    T = np.asarray(T, float)
    fT = pe.apply(T, grid.f_pt)
    tT = pe.apply(T, grid.t_pl)
    f_new, t_new, ideal = split_plane(grid.frame, fT, tT, tol.conditioning)
    s1 = pe.apply(T, grid.sigma1)
    s2 = pe.apply(T, grid.sigma2)
    k1 = curvature_from_sphere(grid.frame, s1)
    k2 = curvature_from_sphere(grid.frame, s2)
    s = grid.shape
    if E is None or G is None:
        x = f_new[..., :3]
        E = np.sum(d_u(x, s) ** 2, -1)
        G = np.sum(d_v(x, s) ** 2, -1)
    umb = grid.umbilic | umbilic_mask(k1, k2, tol.umbilic_rel)
    sig1, sig2 = curvature_sphere_lifts(f_new, t_new, k1, k2, umb)
    return LegendreGrid(
        shape=s, frame=grid.frame, f_pt=f_new, t_pl=t_new, kappa1=k1, kappa2=k2,
        E=E, G=G, umbilic=umb, sigma1=sig1, sigma2=sig2,
        name=name or grid.name, ideal=ideal | (grid.ideal if grid.ideal is not None else False),
    )


def inversion_map(frame: SpaceFormFrame, center, radius: float) -> np.ndarray:
    """Reflection of R^{4,2} realizing inversion in the sphere (center, radius)."""
    _require_flat(frame)
    c = np.asarray(center, float)
    sph = lift_point(frame, c) - 0.5 * radius**2 * frame.q
    return np.eye(6) - 2.0 * np.outer(sph, pe.lower(sph)) / radius**2


def mobius_invert(grid: LegendreGrid, center, radius: float,
                  tol: Tolerances = DEFAULT_TOL) -> LegendreGrid:
    """Inversion of a Legendre grid, keeping the curvature-line coordinates.

    The first fundamental form scales by the conformal factor
    (radius / |x - center|)^4, which is applied exactly.
    """
    R = inversion_map(grid.frame, center, radius)
    d2 = np.sum((grid.x - np.asarray(center, float)) ** 2, -1)
    fac = (radius**2 / d2) ** 2
    return transformed_grid(grid, R, name=f"{grid.name}-inverted", E=grid.E * fac, G=grid.G * fac, tol=tol)


def perturb_curvatures(grid: LegendreGrid, amplitude: float = 0.05, seed: int = 0,
                       modes: int = 3, tol: Tolerances = DEFAULT_TOL) -> LegendreGrid:
    """Negative control: add smooth random fields to both curvatures.

    The fields are fixed trigonometric polynomials in the (u, v) node index
    fractions, so they do not change under refinement and break the
    compatibility equations at O(1).
    """
    rng = np.random.default_rng(seed)
    s = grid.shape
    a = np.linspace(0, 1, s.m, endpoint=not s.periodic_u)
    b = np.linspace(0, 1, s.n, endpoint=not s.periodic_v)
    A, B = np.meshgrid(a, b, indexing="ij")

    def bump():
        out = np.zeros_like(A)
        for _ in range(modes):
            ku, kv = rng.integers(1, 3, size=2)
            ph = rng.uniform(0, 2 * np.pi, size=2)
            out += rng.normal() * np.sin(2 * np.pi * ku * A + ph[0]) * np.cos(np.pi * kv * B + ph[1])
        return out

    scale = float(np.max(np.abs(grid.kappa1 - grid.kappa2)))
    k1 = grid.kappa1 + amplitude * scale * bump()
    k2 = grid.kappa2 + amplitude * scale * bump()
    umb = umbilic_mask(k1, k2, tol.umbilic_rel)
    s1, s2 = curvature_sphere_lifts(grid.f_pt, grid.t_pl, k1, k2, umb)
    return replace(grid, kappa1=k1, kappa2=k2, umbilic=umb, sigma1=s1, sigma2=s2,
                   name=f"{grid.name}-perturbed")
