"""Structured grids, finite differences, edge-sampled forms, spanning trees.

Node arrays have shape (m, n, ...) with axis 0 the u direction and axis 1
the v direction. A u-edge (i, j) joins node (i, j) to (i+1, j); a v-edge
(i, j) joins (i, j) to (i, j+1). Periodic directions carry one extra wrap
edge.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .config import GridShapeError


@dataclass(frozen=True)
class GridShape:
    m: int
    n: int
    du: float
    dv: float
    periodic_u: bool = False
    periodic_v: bool = False

    def __post_init__(self):
        if self.m < 4 or self.n < 4:
            raise GridShapeError(f"grid too small: {self.m}x{self.n}")
        if not (self.du > 0 and self.dv > 0):
            raise GridShapeError("grid steps must be positive")

    @property
    def mu(self) -> int:
        """Number of u-edges per column."""
        return self.m if self.periodic_u else self.m - 1

    @property
    def nv(self) -> int:
        return self.n if self.periodic_v else self.n - 1

    @property
    def base(self) -> tuple:
        return (self.m // 2, self.n // 2)

    def interior_mask(self, width: int = 1) -> np.ndarray:
        """True away from non-periodic boundaries (used for statistics)."""
        mask = np.ones((self.m, self.n), dtype=bool)
        if not self.periodic_u:
            mask[:width] = False
            mask[-width:] = False
        if not self.periodic_v:
            mask[:, :width] = False
            mask[:, -width:] = False
        return mask

    def refined(self) -> "GridShape":
        """Same domain with the step halved."""
        m = 2 * self.m if self.periodic_u else 2 * self.m - 1
        n = 2 * self.n if self.periodic_v else 2 * self.n - 1
        return GridShape(m, n, self.du / 2, self.dv / 2, self.periodic_u, self.periodic_v)


def _diff1(f: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    if periodic:
        d = (np.roll(f, -1, 0) - np.roll(f, 1, 0)) / (2 * h)
    else:
        d = np.empty_like(f)
        d[1:-1] = (f[2:] - f[:-2]) / (2 * h)
        d[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
        d[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    return np.moveaxis(d, 0, axis)


def _diff2(f: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    if periodic:
        d = (np.roll(f, -1, 0) - 2 * f + np.roll(f, 1, 0)) / h**2
    else:
        d = np.empty_like(f)
        d[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
        d[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h**2
        d[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h**2
    return np.moveaxis(d, 0, axis)


def _diff1_4(f: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    """Fourth-order first derivative; one-sided five-point stencils at edges."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    if periodic:
        d = (8 * (np.roll(f, -1, 0) - np.roll(f, 1, 0)) - (np.roll(f, -2, 0) - np.roll(f, 2, 0))) / (12 * h)
    else:
        if f.shape[0] < 5:
            raise GridShapeError("fourth-order differences need five nodes")
        d = np.empty_like(f)
        d[2:-2] = (8 * (f[3:-1] - f[1:-3]) - (f[4:] - f[:-4])) / (12 * h)
        d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
        d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
        d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
        d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return np.moveaxis(d, 0, axis)


def d_u(f, shape: GridShape):
    return _diff1(f, shape.du, 0, shape.periodic_u)


def d_v(f, shape: GridShape):
    return _diff1(f, shape.dv, 1, shape.periodic_v)


def d_uu(f, shape: GridShape):
    return _diff2(f, shape.du, 0, shape.periodic_u)


def d_vv(f, shape: GridShape):
    return _diff2(f, shape.dv, 1, shape.periodic_v)


def d_uv(f, shape: GridShape):
    return d_v(d_u(f, shape), shape)


def d_u4(f, shape: GridShape):
    return _diff1_4(f, shape.du, 0, shape.periodic_u)


def d_v4(f, shape: GridShape):
    return _diff1_4(f, shape.dv, 1, shape.periodic_v)


_GAUSS = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)


def gauss_samples(f, axis: int, periodic: bool) -> tuple:
    """Cubic interpolation of a node field at the two Gauss points of each edge.

    Returns arrays in edge layout along ``axis``. Interior edges use the
    centred four-node stencil; edges next to a boundary shift it inwards.
    """
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    k = f.shape[0]
    if periodic:
        start = np.arange(k) - 1
        rows = [np.roll(f, -o + 1, 0) for o in range(4)]  # f[i-1], f[i], f[i+1], f[i+2]
        offset = np.ones(k)
    else:
        start = np.clip(np.arange(k - 1) - 1, 0, k - 4)
        rows = [f[start + o] for o in range(4)]
        offset = np.arange(k - 1) - start
    out = []
    for g in _GAUSS:
        x = offset + g
        val = 0.0
        for a in range(4):
            w = np.ones_like(x)
            for b in range(4):
                if b != a:
                    w = w * (x - b) / (a - b)
            val = val + w.reshape((-1,) + (1,) * (f.ndim - 1)) * rows[a]
        out.append(np.moveaxis(val, 0, axis))
    return tuple(out)


def _edge_diff(f, h, axis, periodic):
    f = np.asarray(f, dtype=float)
    nxt = np.roll(f, -1, axis)
    d = (nxt - f) / h
    if not periodic:
        d = np.delete(d, -1, axis=axis)
    return d


def _edge_mean(f, axis, periodic):
    f = np.asarray(f, dtype=float)
    a = 0.5 * (f + np.roll(f, -1, axis))
    if not periodic:
        a = np.delete(a, -1, axis=axis)
    return a


def _edge_to_node(e, axis, periodic):
    e = np.moveaxis(e, axis, 0)
    if periodic:
        out = 0.5 * (e + np.roll(e, 1, 0))
    else:
        k = e.shape[0] + 1
        out = np.empty((k,) + e.shape[1:])
        out[1:-1] = 0.5 * (e[1:] + e[:-1])
        out[0] = 1.5 * e[0] - 0.5 * e[1]
        out[-1] = 1.5 * e[-1] - 0.5 * e[-2]
    return np.moveaxis(out, 0, axis)


class EdgeForm:
    """A 1-form sampled on grid edges, per unit parameter.

    ``u`` has shape (mu, n, ...) and ``v`` has shape (m, nv, ...). Values can
    be scalars, vectors or matrices; the trailing shape is shared.
    """

    __slots__ = ("shape", "u", "v")

    def __init__(self, shape: GridShape, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if u.shape[:2] != (shape.mu, shape.n) or v.shape[:2] != (shape.m, shape.nv):
            raise GridShapeError(f"edge arrays {u.shape}, {v.shape} do not fit {shape}")
        if u.shape[2:] != v.shape[2:]:
            raise GridShapeError("u and v samples have different value shapes")
        self.shape = shape
        self.u = u
        self.v = v

    @property
    def value_shape(self) -> tuple:
        return self.u.shape[2:]

    @classmethod
    def exact(cls, shape: GridShape, f) -> "EdgeForm":
        """Discrete differential of a node field: edge difference over step."""
        return cls(
            shape,
            _edge_diff(f, shape.du, 0, shape.periodic_u),
            _edge_diff(f, shape.dv, 1, shape.periodic_v),
        )

    @classmethod
    def from_nodes(cls, shape: GridShape, fu, fv) -> "EdgeForm":
        """Sample node fields of the du and dv coefficients by edge averaging."""
        return cls(
            shape,
            _edge_mean(fu, 0, shape.periodic_u),
            _edge_mean(fv, 1, shape.periodic_v),
        )

    @classmethod
    def zeros(cls, shape: GridShape, value_shape=()) -> "EdgeForm":
        return cls(
            shape,
            np.zeros((shape.mu, shape.n) + tuple(value_shape)),
            np.zeros((shape.m, shape.nv) + tuple(value_shape)),
        )

    def _check(self, other):
        if not isinstance(other, EdgeForm) or other.shape != self.shape:
            raise GridShapeError("forms live on different grids")

    def __add__(self, other):
        self._check(other)
        return EdgeForm(self.shape, self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        self._check(other)
        return EdgeForm(self.shape, self.u - other.u, self.v - other.v)

    def __neg__(self):
        return EdgeForm(self.shape, -self.u, -self.v)

    def scale(self, c) -> "EdgeForm":
        return EdgeForm(self.shape, c * self.u, c * self.v)

    def map(self, fn) -> "EdgeForm":
        return EdgeForm(self.shape, fn(self.u), fn(self.v))

    def hodge(self) -> "EdgeForm":
        """Curvature-line Hodge star: keep du samples, negate dv samples."""
        return EdgeForm(self.shape, self.u, -self.v)

    def node_values(self) -> tuple:
        """Node samples of the du and dv coefficients."""
        s = self.shape
        return _edge_to_node(self.u, 0, s.periodic_u), _edge_to_node(self.v, 1, s.periodic_v)

    def _plaquette_slices(self):
        s = self.shape
        u_lo = self.u[:, : s.nv]
        u_hi = np.roll(self.u, -1, 1)[:, : s.nv]
        v_lo = self.v[: s.mu]
        v_hi = np.roll(self.v, -1, 0)[: s.mu]
        return u_lo, u_hi, v_lo, v_hi

    def closure(self) -> np.ndarray:
        """Plaquette field of the exterior derivative, per unit area."""
        s = self.shape
        u_lo, u_hi, v_lo, v_hi = self._plaquette_slices()
        return (v_hi - v_lo) / s.du - (u_hi - u_lo) / s.dv

    def plaquette_values(self) -> tuple:
        """Averaged (X, Y) samples per plaquette: X from u-edges, Y from v-edges."""
        u_lo, u_hi, v_lo, v_hi = self._plaquette_slices()
        return 0.5 * (u_lo + u_hi), 0.5 * (v_lo + v_hi)

    def bracket(self) -> np.ndarray:
        """[eta ^ eta] on plaquettes for matrix-valued forms: 2 [X, Y]."""
        X, Y = self.plaquette_values()
        return 2.0 * (X @ Y - Y @ X)

    def norm_inf(self) -> float:
        return float(max(np.max(np.abs(self.u)), np.max(np.abs(self.v))))


def plaquette_mask(shape: GridShape, node_mask) -> np.ndarray:
    """Plaquettes whose four corners are all set in ``node_mask``."""
    k = np.asarray(node_mask, dtype=bool)
    a = k & np.roll(k, -1, 0)
    a = a & np.roll(a, -1, 1)
    return a[: shape.mu, : shape.nv]


def edge_masks(shape: GridShape, node_mask) -> tuple:
    k = np.asarray(node_mask, dtype=bool)
    mu = (k & np.roll(k, -1, 0))[: shape.mu]
    mv = (k & np.roll(k, -1, 1))[:, : shape.nv]
    return mu, mv


@dataclass(frozen=True)
class TreeEdge:
    parent: tuple
    child: tuple
    kind: str  # 'u' or 'v'
    index: tuple
    sign: int  # +1 when traversed in the edge direction


class SpanningTree:
    """Base row (constant v through the base node) first, then the columns.

    Wrap edges of periodic directions are never used, so integrations live
    on the cut grid.
    """

    def __init__(self, shape: GridShape, base=None):
        self.shape = shape
        self.base = tuple(shape.base if base is None else base)
        i0, j0 = self.base
        if not (0 <= i0 < shape.m and 0 <= j0 < shape.n):
            raise GridShapeError(f"base node {self.base} outside grid")
        edges = []
        for i in range(i0, shape.m - 1):
            edges.append(TreeEdge((i, j0), (i + 1, j0), "u", (i, j0), 1))
        for i in range(i0, 0, -1):
            edges.append(TreeEdge((i, j0), (i - 1, j0), "u", (i - 1, j0), -1))
        for i in range(shape.m):
            for j in range(j0, shape.n - 1):
                edges.append(TreeEdge((i, j), (i, j + 1), "v", (i, j), 1))
            for j in range(j0, 0, -1):
                edges.append(TreeEdge((i, j), (i, j - 1), "v", (i, j - 1), -1))
        self.edges = edges

    @cached_property
    def arrays(self) -> dict:
        n = self.shape.n
        e = self.edges
        return {
            "parent": np.array([p[0] * n + p[1] for p in (x.parent for x in e)], dtype=np.int64),
            "child": np.array([c[0] * n + c[1] for c in (x.child for x in e)], dtype=np.int64),
            "is_u": np.array([x.kind == "u" for x in e]),
            "i": np.array([x.index[0] for x in e], dtype=np.int64),
            "j": np.array([x.index[1] for x in e], dtype=np.int64),
            "sign": np.array([x.sign for x in e], dtype=float),
        }

    @cached_property
    def tree_edge_masks(self) -> tuple:
        s = self.shape
        mu = np.zeros((s.mu, s.n), dtype=bool)
        mv = np.zeros((s.m, s.nv), dtype=bool)
        for e in self.edges:
            (mu if e.kind == "u" else mv)[e.index] = True
        return mu, mv

    def edge_values(self, form_u, form_v) -> np.ndarray:
        """Gather per-tree-edge samples of an edge field, in tree order."""
        a = self.arrays
        out = np.empty((len(self.edges),) + form_u.shape[2:])
        out[a["is_u"]] = form_u[a["i"][a["is_u"]], a["j"][a["is_u"]]]
        iv = ~a["is_u"]
        out[iv] = form_v[a["i"][iv], a["j"][iv]]
        return out

    def steps(self) -> np.ndarray:
        a = self.arrays
        return np.where(a["is_u"], self.shape.du, self.shape.dv) * a["sign"]

    # ---- integrations

    def integrate_additive(self, form: EdgeForm, base_value=None) -> np.ndarray:
        """Node field F with F(child) = F(parent) + signed step * edge value."""
        s = self.shape
        vals = self.edge_values(form.u, form.v)
        incr = vals * self.steps().reshape((-1,) + (1,) * (vals.ndim - 1))
        out = np.zeros((s.m * s.n,) + form.value_shape)
        i0, j0 = self.base
        if base_value is not None:
            out[i0 * s.n + j0] = base_value
        a = self.arrays
        for p, c, d in zip(a["parent"], a["child"], incr):
            out[c] = out[p] + d
        return out.reshape((s.m, s.n) + form.value_shape)

    def integrate_frames(self, mats_u, mats_v, right: bool = True, base_frame=None) -> np.ndarray:
        """Products of per-edge matrices along the tree.

        ``mats_u``/``mats_v`` hold forward transports (edge direction). With
        right=True, F(child) = F(parent) @ M, otherwise M @ F(parent).
        Backward traversal uses the matrix inverse.
        """
        s = self.shape
        d = mats_u.shape[-1]
        fwd = self.edge_values(mats_u, mats_v)
        a = self.arrays
        mats = fwd.copy()
        back = a["sign"] < 0
        if np.any(back):
            mats[back] = np.linalg.inv(fwd[back])
        F0 = np.zeros((s.m * s.n, d, d))
        i0, j0 = self.base
        F0[i0 * s.n + j0] = np.eye(d) if base_frame is None else base_frame
        F = _kernels.tree_frames(a["parent"], a["child"], mats, right, F0)
        return F.reshape(s.m, s.n, d, d)

    def integrate_vectors(self, mats_u, mats_v, base_vector) -> np.ndarray:
        """v(child) = M v(parent) along the tree, inverses on backward edges."""
        s = self.shape
        fwd = self.edge_values(mats_u, mats_v)
        a = self.arrays
        mats = fwd.copy()
        back = a["sign"] < 0
        if np.any(back):
            mats[back] = np.linalg.inv(fwd[back])
        base_vector = np.asarray(base_vector, dtype=float)
        V0 = np.zeros((s.m * s.n,) + base_vector.shape)
        i0, j0 = self.base
        V0[i0 * s.n + j0] = base_vector
        V = _kernels.tree_vectors(a["parent"], a["child"], mats, V0)
        return V.reshape((s.m, s.n) + base_vector.shape)

    # ---- residuals on the non-tree edges

    def additive_loop_residual(self, node_field, form: EdgeForm) -> float:
        """max |F(b) - F(a) - h w| over non-tree, non-wrap edges."""
        s = self.shape
        Fu = _edge_diff(node_field, s.du, 0, s.periodic_u)
        Fv = _edge_diff(node_field, s.dv, 1, s.periodic_v)
        ru = np.abs(Fu - form.u) * s.du
        rv = np.abs(Fv - form.v) * s.dv
        return _nontree_max(self, ru, rv)

    def frame_loop_residual(self, F, mats_u, mats_v) -> float:
        """max ||F(a) M_e - F(b)|| over non-tree, non-wrap edges (right action)."""
        s = self.shape
        Fb_u = np.roll(F, -1, 0)[: s.mu]
        Fb_v = np.roll(F, -1, 1)[:, : s.nv]
        ru = np.max(np.abs(F[: s.mu] @ mats_u - Fb_u), axis=(-2, -1))
        rv = np.max(np.abs(F[:, : s.nv] @ mats_v - Fb_v), axis=(-2, -1))
        return _nontree_max(self, ru, rv)

    def vector_loop_residual(self, V, mats_u, mats_v) -> float:
        """max |M_e v(a) - v(b)| over non-tree, non-wrap edges."""
        s = self.shape
        Vb_u = np.roll(V, -1, 0)[: s.mu]
        Vb_v = np.roll(V, -1, 1)[:, : s.nv]
        ru = np.max(np.abs(np.einsum("...ij,...j->...i", mats_u, V[: s.mu]) - Vb_u), axis=-1)
        rv = np.max(np.abs(np.einsum("...ij,...j->...i", mats_v, V[:, : s.nv]) - Vb_v), axis=-1)
        return _nontree_max(self, ru, rv)


def _nontree_max(tree: SpanningTree, ru, rv) -> float:
    s = tree.shape
    tu, tv = tree.tree_edge_masks
    keep_u = ~tu
    keep_v = ~tv
    if s.periodic_u:
        keep_u[-1] = False
    if s.periodic_v:
        keep_v[:, -1] = False
    vals = np.concatenate([np.ravel(ru[keep_u]), np.ravel(rv[keep_v])])
    return float(vals.max()) if vals.size else 0.0


def wrap_edge_masks(shape: GridShape) -> tuple:
    mu = np.zeros((shape.mu, shape.n), dtype=bool)
    mv = np.zeros((shape.m, shape.nv), dtype=bool)
    if shape.periodic_u:
        mu[-1] = True
    if shape.periodic_v:
        mv[:, -1] = True
    return mu, mv


def refinement_order(coarse: float, fine: float) -> float:
    """Observed order log2(coarse/fine); inf when fine is exactly zero."""
    if fine == 0.0:
        return float("inf") if coarse > 0 else float("nan")
    if coarse <= 0:
        return float("nan")
    return float(np.log2(coarse / fine))
