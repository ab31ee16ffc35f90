"""Closed forms used by the numerical tests, re-derived symbolically."""
import numpy as np
import pytest

from conftest import surface

sp = pytest.importorskip("sympy")
u, v = sp.symbols("u v", real=True)


def _principal(x, axis_facing):
    """Curvatures along d_u and d_v plus E, G for a curvature-line parametrization."""
    xu, xv = x.diff(u), x.diff(v)
    n = xu.cross(xv)
    n = sp.simplify(n / sp.sqrt(sp.simplify(n.dot(n))))
    # the absolute values that appear wrap cosh v and 2 + cos v, both positive
    n = n.applyfunc(lambda e: e.replace(sp.Abs, lambda a: a))
    if axis_facing:
        n = -n
    E, G = sp.simplify(xu.dot(xu)), sp.simplify(xv.dot(xv))
    k1 = sp.simplify(x.diff(u, 2).dot(n) / E)
    k2 = sp.simplify(x.diff(v, 2).dot(n) / G)
    return k1, k2, E, G


def _catenoid():
    x = sp.Matrix([sp.cosh(v) * sp.cos(u), sp.cosh(v) * sp.sin(u), v])
    k1, k2, E, G = _principal(x, axis_facing=False)
    if sp.simplify(k1.subs({u: 0, v: 0})) < 0:
        k1, k2 = -k1, -k2
    return k1, k2, E, G


def _check(expr, values, grid_v, rows=(0, 5)):
    f = sp.lambdify(v, expr, "numpy")
    for i in rows:
        np.testing.assert_allclose(values[i], f(grid_v) * np.ones_like(grid_v), atol=1e-12)


def test_catenoid_curvatures():
    k1, k2, E, G = _catenoid()
    assert sp.simplify(k1 - 1 / sp.cosh(v) ** 2) == 0
    assert sp.simplify(k2 + 1 / sp.cosh(v) ** 2) == 0
    g = surface("catenoid", 32)
    _check(k1, g.kappa1, g.x[0, :, 2])
    _check(k2, g.kappa2, g.x[0, :, 2])


def test_catenoid_cubic_and_representative_metric():
    k1, k2, E, G = _catenoid()
    cubic = sp.simplify((k2 - k1) * k2.diff(v) * G)
    assert sp.simplify(cubic + 4 * sp.sinh(v) / sp.cosh(v) ** 3) == 0
    metric = sp.simplify(sp.Rational(1, 2) * (k1 - k2) ** 2 * sp.sqrt(E * G))
    assert sp.simplify(metric - 2 / sp.cosh(v) ** 2) == 0


def test_torus_curvatures():
    x = sp.Matrix([(2 + sp.cos(v)) * sp.cos(u), (2 + sp.cos(v)) * sp.sin(u), sp.sin(v)])
    k1, k2, _, _ = _principal(x, axis_facing=False)
    sign = sp.sign(k2.subs(v, 0))
    k1, k2 = sp.simplify(sign * k1), sp.simplify(sign * k2)
    assert sp.simplify(k2 - 1) == 0
    assert sp.simplify(k1 - sp.cos(v) / (2 + sp.cos(v))) == 0
    g = surface("torus", 32)
    theta = np.arctan2(g.x[0, :, 2], np.hypot(g.x[0, :, 0], g.x[0, :, 1]) - 2)
    _check(k1, g.kappa1, theta)


def test_o_surface_expansion():
    k1, k2, a1, a2, b1, b2 = sp.symbols("k1 k2 a1 a2 b1 b2", nonzero=True)
    O = sp.Matrix([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    K1 = sp.Matrix([[1 / k1, -a1 / k1, b1, -1]])
    K2 = sp.Matrix([[1 / k2, -a2 / k2, b2, -1]])
    lhs = (K1 * O * K2.T)[0]
    # 1/(k1 kD2) + 1/(k2 kD1) - 1/kh1 - 1/kh2 with 1/kD = -a/k and 1/kh = b
    rhs = (1 / k1) * (-a2 / k2) + (1 / k2) * (-a1 / k1) - b1 - b2
    assert sp.simplify(lhs - rhs) == 0
