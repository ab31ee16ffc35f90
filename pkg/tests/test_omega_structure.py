import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import catenoid, surface
from lieapp.config import CertificationError, ParameterError, UnsupportedError
from lieapp.legendre import perturb_curvatures
from lieapp.omega_structure import (OmegaData, demoulin_residual, fit_UV, gauge,
                                    isothermic_congruences, middle_potential, omega_report,
                                    plus_minus_potentials, quadratic_differential,
                                    refinement_study, special_lift_check, special_lifts, zeta_q,
                                    zeta_q_combination)


def _inner(g, width=3):
    return g.shape.interior_mask(width) & g.regular


def _angle(g):
    return np.arange(g.shape.m) * 2 * np.pi / g.shape.m


@pytest.mark.parametrize("eps2", [1, 0, -1])
def test_demoulin_vanishes_on_torus(eps2):
    g = surface("torus", 64)
    assert np.nanmax(np.abs(demoulin_residual(g, np.ones(64), np.ones(64), eps2))) == 0.0


def test_demoulin_rejects_bad_input():
    g = surface("torus", 16)
    with pytest.raises(ParameterError):
        demoulin_residual(g, -np.ones(16), np.ones(16), 1)
    with pytest.raises(ParameterError):
        OmegaData.constant(g, 2)


def test_special_lift_normalization_converges():
    res = [special_lift_check(catenoid(n)[0], catenoid(n)[1]) for n in (64, 128)]
    for key in ("q2_vs_V2", "q1_vs_U2"):
        assert res[1][key] < 1e-3
        assert 3.0 <= res[0][key] / res[1][key] <= 5.0


def test_zeta_q_on_special_lifts():
    # +1 on the first lift, -1 on the second, and the sum is null for the form
    g, d, _ = catenoid(128)
    lifts = special_lifts(g, d)
    m = _inner(g)
    assert np.max(np.abs(zeta_q(g, d, lifts.sigma1s) - 1)[m]) < 1e-3
    assert np.max(np.abs(zeta_q(g, d, lifts.sigma2s) + 1)[m]) < 1e-3
    assert np.max(np.abs(zeta_q_combination(g, d, 1.0, 1.0))[m]) < 1e-3


def test_middle_quadratic_differential():
    # a = -1, c = 1, b = 0 in curvature-line coordinates with U = V = 1
    err = []
    for n in (64, 128):
        g, _, eta = catenoid(n)
        q = quadratic_differential(g, eta)
        m = _inner(g)
        err.append(np.max(np.abs(q.a + 1)[m]))
        assert np.max(np.abs(q.c - 1)[m]) < 1e-5
        assert np.max(np.abs(q.b)[m]) < 1e-12
        assert q.diagnostics["asymmetry"] < 1e-12
    assert err[0] / err[1] > 10.0


def test_gauge_identity_and_inverse():
    g, _, eta = catenoid(64)
    assert not np.any(gauge(eta, 0.0).eta.u - eta.eta.u)
    tau = 0.3 * np.sin(_angle(g))[:, None] * np.ones(g.shape.n)
    back = gauge(gauge(eta, tau), -tau)
    assert np.max(np.abs(back.eta.u - eta.eta.u)) < 1e-14
    assert np.max(np.abs(back.eta.v - eta.eta.v)) < 1e-14
    np.testing.assert_allclose(back.tau, 0.0, atol=1e-15)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_quadratic_differential_is_gauge_invariant(c0, cu, cuv):
    g, _, eta = catenoid(64)
    v = g.x[0, :, 2]
    tau = c0 + cu * np.sin(_angle(g))[:, None] + cuv * np.cos(_angle(g))[:, None] * v[None, :] ** 2
    q0, q1 = quadratic_differential(g, eta), quadratic_differential(g, gauge(eta, tau))
    m = _inner(g)
    # constants drop out exactly; the rest carries a fourth-order error proportional to tau
    bound = 2e-5 * (abs(cu) + abs(cuv)) + 1e-12
    for a, b in ((q0.a, q1.a), (q0.b, q1.b), (q0.c, q1.c)):
        assert np.max(np.abs(a - b)[m]) < bound


def test_gauge_error_is_fourth_order():
    err = []
    for n in (64, 128):
        g, _, eta = catenoid(n)
        tau = 0.3 * np.sin(_angle(g))[:, None] * np.ones(g.shape.n)
        q0, q1 = quadratic_differential(g, eta), quadratic_differential(g, gauge(eta, tau))
        err.append(np.max(np.abs(q1.b - q0.b)[_inner(g)]))
    assert err[0] / err[1] > 10.0


def test_middle_potential_is_closed():
    g, _, eta = catenoid(64)
    assert eta.closure_residual() < 1e-11


def test_plus_minus_are_gauges_of_middle():
    g, d, eta = catenoid(64)
    plus, minus = plus_minus_potentials(g, d, eta)
    mid = 0.5 * (plus.eta.u + minus.eta.u)
    assert np.max(np.abs(mid - eta.eta.u)) < 1e-14
    assert plus.kind == "plus" and minus.kind == "minus"


def test_fit_recovers_constant_scalings():
    g = surface("catenoid", 64)
    f = fit_UV(g, 1)
    np.testing.assert_allclose(f.U, 1.0, atol=1e-10)
    np.testing.assert_allclose(f.V, 1.0, atol=1e-10)
    assert f.fit_residual < 1e-10


def test_fit_flags_dupin_degenerate_torus():
    assert "dupin-degenerate" in fit_UV(surface("torus", 32), 1).flags


@pytest.mark.parametrize("eps2", [0, -1])
def test_isothermic_pair_needs_real_structure(eps2):
    g, d, _ = catenoid(64)
    with pytest.raises(UnsupportedError):
        isothermic_congruences(g, OmegaData(eps2, d.U, d.V))
    with pytest.raises(UnsupportedError):
        plus_minus_potentials(g, OmegaData(eps2, d.U, d.V))


def test_perturbed_curvatures_fail_certification():
    g = perturb_curvatures(surface("catenoid", 64))
    rep = omega_report(g, OmegaData.constant(g, 1))
    assert not rep["pass_fine"]
    assert rep["residuals"]["demoulin"] > 0.1
    with pytest.raises(CertificationError):
        middle_potential(g, OmegaData.constant(g, 1))


def test_certified_middle_potential_on_fine_catenoid():
    g = surface("catenoid", 128)
    eta = middle_potential(g, OmegaData.constant(g, 1))
    assert eta.kind == "middle"


@pytest.mark.parametrize("kind", ["cylinder", "cone", "torus"])
def test_dupin_type_surfaces_certify(kind):
    # every structural coefficient vanishes here, so residuals are measured
    # against how fast the curvature spheres move
    reps = []
    for n in (64, 128):
        g = surface(kind, n)
        reps.append(omega_report(g, OmegaData.constant(g, 1)))
        assert max(reps[-1]["residuals"].values()) < 1e-9
    assert refinement_study(*reps)["pass"]
