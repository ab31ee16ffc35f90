import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import surface
from lieapp.forms import EdgeForm, GridShape
from lieapp.lie_invariants import (cyclide_splitting, darboux_cubic, darboux_cubic_intrinsic,
                                   hodge_star, lie_metric, representative_metric, split_connection)

KINDS = ("torus", "catenoid", "cylinder", "cone", "ellipsoid_of_revolution")


def _profile(g):
    # catenoid height coordinate equals the profile parameter
    return g.x[0, :, 2]


@pytest.mark.parametrize("kind", KINDS)
def test_lie_metric_vanishes_on_surfaces_of_revolution(kind):
    # principal curvatures do not depend on the rotation angle
    g = surface(kind, 64)
    assert np.max(np.abs(lie_metric(g).b[g.regular])) == 0.0


def test_intrinsic_lie_metric_agrees():
    g = surface("catenoid", 64)
    L = lie_metric(g, cyclide_splitting(g))
    inner = g.shape.interior_mask(2)
    assert np.nanmax(np.abs(L.diagnostics["intrinsic_b"][inner])) < 1e-12


def test_representative_metric_mixed_only():
    g = surface("catenoid", 128)
    R = representative_metric(g)
    assert not np.any(R.a) and not np.any(R.c)
    assert R.diagnostics["null_residual"] < 1e-12


def test_representative_metric_closed_form_converges():
    # half the squared curvature gap times the area element: 2 / cosh^2
    err = []
    for n in (64, 128):
        g = surface("catenoid", n)
        inner = g.shape.interior_mask(2)
        exact = 2.0 / np.cosh(_profile(g))[None, :] ** 2
        err.append(np.max(np.abs(representative_metric(g).b - exact)[inner]))
    assert err[1] < 2e-3
    assert 3.0 <= err[0] / err[1] <= 5.0


@given(st.floats(0.1, 10.0))
def test_invariants_scale_with_the_section(scale):
    g = surface("catenoid", 32)
    np.testing.assert_allclose(representative_metric(g, scale).b, scale * representative_metric(g).b,
                               rtol=1e-14)
    ref = darboux_cubic(g)
    np.testing.assert_allclose(darboux_cubic(g, scale).B, scale * ref.B, rtol=1e-14)


def test_catenoid_cubic_matches_closed_form():
    # symbolic value B = -4 sinh v / cosh^3 v; A vanishes identically
    err = []
    for n in (64, 128):
        g = surface("catenoid", n)
        c = darboux_cubic(g)
        inner = g.shape.interior_mask(2)
        exact = -4.0 * np.sinh(_profile(g)) / np.cosh(_profile(g)) ** 3
        assert not np.any(c.A)
        err.append(np.max(np.abs(c.B - exact[None, :])[inner]))
    assert err[1] < 5e-4
    assert 3.0 <= err[0] / err[1] <= 5.0


def test_intrinsic_cubic_agrees_with_curvature_formula():
    g = surface("catenoid", 128)
    sp = cyclide_splitting(g)
    ci, c = darboux_cubic_intrinsic(g, sp), darboux_cubic(g)
    inner = g.shape.interior_mask(2)
    assert np.max(np.abs(ci.A[inner])) < 1e-12
    assert np.max(np.abs(ci.B - c.B)[inner]) < 1e-3 * np.max(np.abs(c.B))


def test_torus_cubic_vanishes():
    g = surface("torus", 64)
    c = darboux_cubic(g)
    assert np.max(np.abs(c.A)) < 1e-12 and np.max(np.abs(c.B)) < 1e-12


def test_cyclide_splitting_structure():
    res = []
    for n in (64, 128):
        g = surface("catenoid", n)
        sp = cyclide_splitting(g)
        reg = g.regular
        assert np.all(sp.signature1[reg] == (2, 1))
        assert np.all(sp.signature2[reg] == (2, 1))
        assert not sp.degenerate.any()
        _, _, checks = split_connection(g, sp)
        # N kills the curvature sphere in its own direction and swaps the blocks
        assert checks["N_v_sigma1"] < 1e-10 and checks["N_u_sigma2"] < 1e-10
        assert checks["N_off_block"] < 1e-12
        res.append(np.nanmax(sp.orthogonality))
    assert 3.0 <= res[0] / res[1] <= 5.0


def test_projectors_are_idempotent():
    g = surface("torus", 32)
    sp = cyclide_splitting(g)
    P = sp.P1[g.regular]
    assert np.max(np.abs(P @ P - P)) < 1e-10


form_values = arrays(np.float64, (8, 8), elements=st.floats(-10, 10))


@given(form_values, form_values)
def test_hodge_star_is_an_involution(u, v):
    s = GridShape(8, 8, 0.1, 0.2)
    w = EdgeForm.from_nodes(s, u, v)
    ww = hodge_star(hodge_star(w))
    np.testing.assert_array_equal(ww.u, w.u)
    np.testing.assert_array_equal(ww.v, w.v)


def test_hodge_star_signs():
    s = GridShape(8, 8, 0.1, 0.2)
    ones, zero = np.ones((8, 8)), np.zeros((8, 8))
    du_only = EdgeForm.from_nodes(s, ones, zero)
    dv_only = EdgeForm.from_nodes(s, zero, ones)
    np.testing.assert_array_equal(hodge_star(du_only).u, du_only.u)
    np.testing.assert_array_equal(hodge_star(dv_only).v, -dv_only.v)
