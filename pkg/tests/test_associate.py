import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import catenoid, surface
from lieapp.associate import (CombescureTriple, asscurv_residual, associate_report,
                              extract_associates, normalization_form, normalize_gauge,
                              o_surface_check, o_surface_rows, round_trip, O_MATRIX)
from lieapp.config import NotNormalizedError, UnsupportedError
from lieapp.omega_structure import OmegaData, gauge, middle_potential, quadratic_differential


def _inner(g):
    return g.shape.interior_mask(3) & g.regular


def _angle(g):
    return np.arange(g.shape.m) * 2 * np.pi / g.shape.m


def _unnormalized(n):
    g, _, eta = catenoid(n)
    lam = 0.4 * np.sin(_angle(g))[:, None] * (1 + g.x[..., 2] ** 2)
    return g, gauge(eta, lam, lifts=(g.f_pt, g.t_pl))


def test_normalization_is_idempotent():
    g, eta = _unnormalized(64)
    once = normalize_gauge(g, eta, shift=0.7)
    assert np.max(np.abs(normalization_form(g, once).u)) < 1e-12
    twice = normalize_gauge(g, once, shift=0.0)
    assert np.max(np.abs(twice.info["lam"])) < 1e-10
    assert np.max(np.abs(twice.eta.u - once.eta.u)) < 1e-10


def test_normalization_keeps_quadratic_differential():
    g, eta = _unnormalized(64)
    q0, q1 = quadratic_differential(g, eta), quadratic_differential(g, normalize_gauge(g, eta))
    m = _inner(g)
    assert np.max(np.abs(q1.a - q0.a)[m]) < 1e-4
    assert np.max(np.abs(q1.c - q0.c)[m]) < 1e-4


def test_extraction_requires_normalized_gauge():
    g, eta = _unnormalized(64)
    with pytest.raises(NotNormalizedError):
        extract_associates(g, eta)


def test_catenoid_associate_is_a_sphere():
    # a minimal surface: the associate is a sphere of radius 1/2; oriented by -n
    # its curvatures are both -2
    g, _, eta = catenoid(128)
    t = extract_associates(g, normalize_gauge(g, eta))
    m = _inner(g)
    # centre x^D + n/2 is fixed up to the integration error of x^D
    centre = (t.xD + 0.5 * t.n)[m]
    assert np.max(np.ptp(centre, axis=0)) < 1e-4
    for k in t.kappaD:
        np.testing.assert_allclose(k[m], -2.0, atol=1e-5)


def test_shift_moves_associates_along_the_pair():
    rep = associate_report(*catenoid(64)[::2])
    assert rep["shift_xD"] < 1e-12 and rep["shift_xhat"] < 1e-12


def test_round_trip_and_closed_increments():
    g, _, eta = catenoid(64)
    t = extract_associates(g, normalize_gauge(g, eta))
    assert max(round_trip(g, t).values()) < 1e-12
    assert max(t.residuals["loop_xD"], t.residuals["loop_xhat"]) < 1e-12


finite = st.floats(0.2, 5.0)
field = arrays(np.float64, (4, 3), elements=finite)


@given(field, field, field, field, field, field)
def test_o_surface_identity_is_curvature_relation(k1, k2, a1, a2, b1, b2):
    # K1 O K2^t = -(a1 + a2)/(k1 k2) - b1 - b2: the same four terms as asscurv
    z = np.zeros((4, 3, 3))
    t = CombescureTriple(z, z, z, z, (k1, k2), (None, None), (None, None), k1, k2,
                         (a1, a2), (b1, b2), {})
    K1, K2 = o_surface_rows(t)
    lhs = np.einsum("...i,ij,...j->...", K1, O_MATRIX, K2)
    terms = np.stack([-a2 / (k1 * k2), -a1 / (k1 * k2), -b1, -b2], -1)
    np.testing.assert_allclose(lhs, terms.sum(-1), atol=1e-12 * np.abs(terms).max())
    np.testing.assert_allclose(np.abs(lhs) / np.abs(terms).max(-1), asscurv_residual(t), rtol=1e-9, atol=1e-15)


def test_perturbed_hat_surface_fails_the_curvature_relation():
    g, _, eta = catenoid(64)
    t = extract_associates(g, normalize_gauge(g, eta))
    m = _inner(g)
    b1, b2 = t.b
    bad = CombescureTriple(t.x, t.xD, t.xhat, t.n, t.kappa, t.kappaD, t.kappa_hat, t.p2, t.r2,
                           t.a, (b1 * 1.05, b2), t.increments)
    assert np.nanmax(asscurv_residual(t)[m]) < 1e-5
    assert np.nanmax(asscurv_residual(bad)[m]) > 1e-3
    assert o_surface_check(bad, m)["max"] > 1e-3


@pytest.mark.parametrize("kind", ["cone", "cylinder", "torus"])
def test_vanishing_curvature_is_unsupported(kind):
    # a flat direction sends the hat associate to infinity
    g = surface(kind, 64)
    eta = middle_potential(g, OmegaData.constant(g, 1), certify=False)
    with pytest.raises(UnsupportedError):
        extract_associates(g, normalize_gauge(g, eta))
