"""Analytic curvature-line surfaces.

Surfaces of revolution use u for the rotation angle and v for the profile
parameter, with the normal pointing towards the axis. The cylinder is the
exception: u runs along the rulings so that its first curvature vanishes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import ParameterError
from ..forms import GridShape
from ..legendre import SurfaceGrid

TWO_PI = 2.0 * np.pi

KINDS = ("torus", "catenoid", "cylinder", "cone", "ellipsoid_of_revolution",
         "revolution", "plane")

_DEFAULTS = {
    "torus": dict(params={"R": 2.0, "r": 1.0}, u=(0.0, TWO_PI), v=(0.0, TWO_PI), pu=True, pv=True),
    "catenoid": dict(params={"a": 1.0}, u=(0.0, TWO_PI), v=(-1.0, 1.0), pu=True, pv=False),
    "cylinder": dict(params={"r": 1.0}, u=(-1.0, 1.0), v=(0.0, TWO_PI), pu=False, pv=True),
    "cone": dict(params={"angle": 0.5}, u=(0.0, TWO_PI), v=(1.0, 2.0), pu=True, pv=False),
    "ellipsoid_of_revolution": dict(params={"a": 2.0, "c": 1.0}, u=(0.0, TWO_PI), v=(-1.0, 1.0),
                                    pu=True, pv=False),
    "revolution": dict(params={}, u=(0.0, TWO_PI), v=(0.0, 1.0), pu=True, pv=False),
    "plane": dict(params={}, u=(-1.0, 1.0), v=(-1.0, 1.0), pu=False, pv=False),
}


@dataclass(frozen=True)
class SurfaceSpec:
    kind: str
    m: int = 64
    n: int = 64
    params: dict = field(default_factory=dict)
    u_range: tuple | None = None
    v_range: tuple | None = None
    periodic_u: bool | None = None
    periodic_v: bool | None = None

    def resolved(self) -> "SurfaceSpec":
        if self.kind not in _DEFAULTS:
            raise ParameterError(f"unknown surface kind {self.kind!r}; choose from {KINDS}")
        d = _DEFAULTS[self.kind]
        params = dict(d["params"])
        params.update(self.params)
        return SurfaceSpec(
            kind=self.kind, m=self.m, n=self.n, params=params,
            u_range=tuple(self.u_range or d["u"]), v_range=tuple(self.v_range or d["v"]),
            periodic_u=d["pu"] if self.periodic_u is None else self.periodic_u,
            periodic_v=d["pv"] if self.periodic_v is None else self.periodic_v,
        )

    def with_resolution(self, m: int, n: int | None = None) -> "SurfaceSpec":
        return SurfaceSpec(self.kind, m, m if n is None else n, dict(self.params),
                           self.u_range, self.v_range, self.periodic_u, self.periodic_v)


def _axis(lo, hi, k, periodic):
    if periodic:
        h = (hi - lo) / k
        return lo + h * np.arange(k), h
    h = (hi - lo) / (k - 1)
    return np.linspace(lo, hi, k), h


def _revolution(U, V, r, rp, z, zp):
    """Position and axis-facing normal for the profile (r(v), z(v))."""
    cu, su = np.cos(U), np.sin(U)
    x = np.stack([r * cu, r * su, z * np.ones_like(U)], -1)
    s = np.sqrt(rp**2 + zp**2)
    normal = -np.stack([zp * cu, zp * su, -rp * np.ones_like(U)], -1) / s[..., None]
    return x, normal


def _revolution_curvatures(r, rp, rpp, zp, zpp):
    """Principal curvatures (parallel, meridian) and E, G for the inward normal."""
    s2 = rp**2 + zp**2
    s = np.sqrt(s2)
    return zp / (r * s), (rp * zpp - rpp * zp) / (s2 * s), r**2, s2


def _profile(kind, p, V):
    """(r, r', r'', z, z', z'') of the profile curve."""
    zero = np.zeros_like(V)
    if kind == "torus":
        R, r = p["R"], p["r"]
        if not (R > r > 0):
            raise ParameterError("torus needs R > r > 0")
        c, s = np.cos(V), np.sin(V)
        return R + r * c, -r * s, -r * c, r * s, r * c, -r * s
    if kind == "catenoid":
        a = p["a"]
        if a <= 0:
            raise ParameterError("catenoid needs a > 0")
        return a * np.cosh(V / a), np.sinh(V / a), np.cosh(V / a) / a, V, np.ones_like(V), zero
    if kind == "cone":
        ang = p["angle"]
        if not (0 < ang < np.pi / 2):
            raise ParameterError("cone angle must lie in (0, pi/2)")
        if np.any(V <= 0):
            raise ParameterError("cone profile parameter must stay positive")
        sa, ca = np.sin(ang), np.cos(ang)
        return V * sa, np.full_like(V, sa), zero, V * ca, np.full_like(V, ca), zero
    if kind == "ellipsoid_of_revolution":
        a, c = p["a"], p["c"]
        if a <= 0 or c <= 0:
            raise ParameterError("ellipsoid axes must be positive")
        if np.any(np.abs(V) >= np.pi / 2):
            raise ParameterError("ellipsoid latitude range must avoid the poles")
        cv, sv = np.cos(V), np.sin(V)
        return a * cv, -a * sv, -a * cv, c * sv, c * cv, -c * sv
    raise ParameterError(kind)


def _sampled_profile(p, V):
    """Profile from samples: params r, z (and t) as lists, spline-interpolated."""
    from scipy.interpolate import CubicSpline

    r = np.asarray(p.get("r", []), float)
    z = np.asarray(p.get("z", []), float)
    if r.size < 4 or r.size != z.size:
        raise ParameterError("revolution profile needs matching r and z samples (at least 4)")
    if np.any(r <= 0):
        raise ParameterError("revolution profile radius must be positive")
    t = np.asarray(p.get("t", np.linspace(0.0, 1.0, r.size)), float)
    cr, cz = CubicSpline(t, r), CubicSpline(t, z)
    return cr(V), cr(V, 1), cr(V, 2), cz(V), cz(V, 1), cz(V, 2)


def generate(spec: SurfaceSpec, analytic: bool = True) -> SurfaceGrid:
    """Sample a catalog surface on its curvature-line grid.

    With ``analytic`` the exact principal curvatures and metric
    coefficients are attached; otherwise they are left for the
    finite-difference estimator.
    """
    spec = spec.resolved()
    if spec.m < 16 or spec.n < 16:
        raise ParameterError("resolution must be at least 16 in each direction")
    u, du = _axis(*spec.u_range, spec.m, spec.periodic_u)
    v, dv = _axis(*spec.v_range, spec.n, spec.periodic_v)
    U, V = np.meshgrid(u, v, indexing="ij")
    shape = GridShape(spec.m, spec.n, du, dv, spec.periodic_u, spec.periodic_v)
    kind, p = spec.kind, spec.params
    ones = np.ones_like(U)
    if kind == "plane":
        x = np.stack([U, V, np.zeros_like(U)], -1)
        normal = np.broadcast_to([0.0, 0.0, 1.0], x.shape).copy()
        k1, k2, E, G = 0 * ones, 0 * ones, ones, ones
    elif kind == "cylinder":
        r = p["r"]
        if r <= 0:
            raise ParameterError("cylinder needs r > 0")
        x = np.stack([r * np.cos(V), r * np.sin(V), U], -1)
        normal = -np.stack([np.cos(V), np.sin(V), np.zeros_like(V)], -1)
        k1, k2, E, G = 0 * ones, ones / r, ones, r * r * ones
    else:
        r, rp, rpp, z, zp, zpp = _sampled_profile(p, V) if kind == "revolution" else _profile(kind, p, V)
        x, normal = _revolution(U, V, r, rp, z, zp)
        k1, k2, E, G = _revolution_curvatures(r, rp, rpp, zp, zpp)
    if not analytic:
        return SurfaceGrid(shape=shape, x=x, normal=normal, name=kind, u=u, v=v)
    return SurfaceGrid(shape=shape, x=x, normal=normal, E=E * ones, G=G * ones,
                       kappa1=k1 * ones, kappa2=k2 * ones, offdiag=0.0, name=kind, u=u, v=v)
