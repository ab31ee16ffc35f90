import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import surface
from lieapp import pseudo_euclidean as pe
from lieapp.cli_io.catalog import SurfaceSpec, generate
from lieapp.config import NormalizationError, UnsupportedError
from lieapp.forms import GridShape
from lieapp.legendre import (SurfaceGrid, build_legendre, build_space_form, check_legendre,
                             curvature_sphere_lifts, estimate_principal_data, lift_point,
                             lift_tangent_plane, mobius_invert)

FRAME = build_space_form(0.0)
point = arrays(np.float64, 3, elements=st.floats(-5, 5))


def test_space_form_frame():
    np.testing.assert_array_equal(FRAME.q, pe.basis(4) - pe.basis(6))
    np.testing.assert_array_equal(FRAME.p, pe.basis(5))
    np.testing.assert_array_equal(FRAME.q0, -0.5 * (pe.basis(4) + pe.basis(6)))
    assert pe.inner(FRAME.q0, FRAME.q) == -1.0
    assert max(FRAME.residuals().values()) == 0.0
    with pytest.raises(UnsupportedError):
        build_space_form(1.0)


def test_lift_examples():
    np.testing.assert_array_equal(lift_point(FRAME, [0, 0, 0]), FRAME.q0)
    np.testing.assert_array_equal(lift_point(FRAME, [1, 0, 0]), pe.basis(1) + FRAME.q0 + 0.5 * FRAME.q)
    np.testing.assert_array_equal(lift_tangent_plane(FRAME, [0, 0, 0], [0, 0, 1]), pe.basis(3) + pe.basis(5))
    with pytest.raises(NormalizationError):
        lift_tangent_plane(FRAME, [0, 0, 0], [0, 0, 2])


@given(point, point)
def test_lift_invariants_random(x, n):
    if np.linalg.norm(n) < 1e-3:
        return
    n = n / np.linalg.norm(n)
    f = lift_point(FRAME, x)
    t = lift_tangent_plane(FRAME, x, n)
    scale = 1 + np.dot(x, x)
    assert abs(pe.norm2(f)) < 1e-12 * scale**2
    assert abs(pe.inner(f, FRAME.q) + 1) < 1e-12
    assert abs(pe.inner(f, FRAME.p)) < 1e-12
    assert abs(pe.norm2(t)) < 1e-12 * scale
    assert abs(pe.inner(t, FRAME.p) + 1) < 1e-12
    assert abs(pe.inner(f, t)) < 1e-12 * scale


def test_curvature_sphere_lifts_torus():
    g = surface("torus", 64, R=2.0, r=1.0)
    # theta = 0 is the first profile sample: kappa1 = 1/3, kappa2 = 1
    np.testing.assert_allclose(g.kappa1[:, 0], 1 / 3, atol=1e-15)
    np.testing.assert_allclose(g.kappa2[:, 0], 1.0, atol=1e-15)
    np.testing.assert_allclose(g.sigma1[:, 0], g.t_pl[:, 0] + g.f_pt[:, 0] / 3, atol=1e-14)
    assert np.max(np.abs(pe.inner(g.sigma1, g.sigma2))) < 1e-12
    s1, _ = curvature_sphere_lifts(g.f_pt, g.t_pl, np.zeros(g.kappa1.shape), g.kappa2)
    np.testing.assert_array_equal(s1, g.t_pl)


def _estimated(kind, n, **params):
    return estimate_principal_data(generate(SurfaceSpec(kind, n, n, params=params), analytic=False))


def test_estimated_cylinder_curvatures():
    est = _estimated("cylinder", 64)
    np.testing.assert_allclose(est.kappa1, 0.0, atol=1e-12)
    # inward normal: positive curvature across the rulings; normal and
    # position differences along a circle are parallel, so the ratio is exact
    np.testing.assert_allclose(est.kappa2, 1.0, rtol=1e-12)


def test_estimated_torus_curvature_exact_on_circles():
    est = _estimated("torus", 64)
    exact = np.cos(est.v)[None, :] / (2.0 + np.cos(est.v)[None, :])
    assert np.max(np.abs(est.kappa1 - exact)) < 1e-13


def test_estimated_meridian_curvature_converges_second_order():
    # the catenoid meridian is not a circle, so the stencil error shows
    err = []
    for n in (64, 128):
        est = _estimated("catenoid", n)
        err.append(np.max(np.abs(est.kappa2 + 1 / np.cosh(est.v)[None, :] ** 2)))
    assert 3.0 <= err[0] / err[1] <= 5.0


def test_plane_is_all_umbilic_but_immersed():
    g = surface("plane", 32)
    rep = check_legendre(g)
    assert rep["umbilic_count"] == rep["node_count"]
    assert rep["immersed"]


def test_contact_residual_order_and_margin():
    res = []
    for n in (64, 128):
        g = build_legendre(_estimated("catenoid", n))
        rep = check_legendre(g)
        assert rep["immersed"] and rep["immersion_margin"] > 0.5
        res.append(rep["contact_residual"])
    assert 3.0 <= res[0] / res[1] <= 5.0


def test_repeated_rows_flag_immersion_failure():
    g = generate(SurfaceSpec("catenoid", 32, 32))
    x = g.x.copy()
    x[:, 10:] = x[:, 10:11]
    n = g.normal.copy()
    n[:, 10:] = n[:, 10:11]
    grid = build_legendre(SurfaceGrid(g.shape, x, n, g.E, g.G, g.kappa1, g.kappa2))
    assert not check_legendre(grid)["immersed"]


def test_mobius_inversion_preserves_invariants():
    g = mobius_invert(surface("catenoid", 64), (0.5, 0.3, 3.0), 2.0)
    assert max(g.invariant_residuals().values()) < 1e-12


def test_shape_validation():
    s = GridShape(16, 16, 0.1, 0.1)
    with pytest.raises(NormalizationError):
        SurfaceGrid(s, np.zeros((16, 15, 3)))
