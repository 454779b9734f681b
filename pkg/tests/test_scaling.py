import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from metricspace import OperatorSpec, PhiFunction
from metricspace.grid import (build_grid, flat_metric, integrate_density,
                              random_smooth_fields)
from metricspace.scaling import (ScalingError, ScalingProfile, analytic_profile,
                                 closed_form_scaling, curvature_scaling_length,
                                 extract_psi_f, scaling_length, scaling_ode,
                                 totally_geodesic_check)
from metricspace.tensors import Geometry

from conftest import FAMILIES


def _unit(N=8, dim=2):
    return build_grid(dim, [N] * dim, [1.0] * dim)


def _power_profile(n, alpha):
    def psi(r):
        return np.power(np.asarray(r, float), alpha)

    def dpsi(r):
        return alpha * np.power(np.asarray(r, float), alpha - 1.0)

    def f(r):
        return np.zeros_like(np.asarray(r, float))

    r = np.geomspace(1e-3, 10.0, 11)
    return ScalingProfile("custom", n, r, psi(r), f(r), "analytic",
                          _psi_fn=psi, _dpsi_fn=dpsi, _f_fn=f)


# closed forms

def test_closed_form_l2_midpoint():
    assert closed_form_scaling("identity", 2, None, 1.0, 4.0, 0.5) == pytest.approx(2.25, abs=1e-14)


def test_closed_form_conformal_linear_case():
    assert closed_form_scaling("conformal", 2, 1.0, 1.0, 3.0, 0.5) == pytest.approx(2.0, abs=1e-14)


@given(st.sampled_from(["identity", "conformal"]), st.sampled_from([1, 2]),
       st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_closed_form_endpoints(family, n, r0, r1):
    k = 1.0 if family == "conformal" else None
    r = closed_form_scaling(family, n, k, r0, r1, np.array([0.0, 1.0]))
    assert r[0] == pytest.approx(r0, rel=1e-12)
    assert r[1] == pytest.approx(r1, rel=1e-12)


def test_closed_form_degenerate_exponent():
    with pytest.raises(ScalingError, match="degenerate"):
        closed_form_scaling("conformal", 2, -1.0, 1.0, 2.0, 0.5)


# radial ODE

def test_ode_l2_matches_closed_form():
    prof = analytic_profile(FAMILIES["identity"], 2, 1.0)
    sol = scaling_ode(prof, 1.0, 1.0, 1.0, 1e-3)
    exact = (1.0 + sol.t / 2.0) ** 2
    assert np.max(np.abs(sol.r - exact) / exact) <= 1e-8


def test_ode_conformal_power_one_is_linear():
    prof = analytic_profile(FAMILIES["conformal"], 2, 1.0)
    sol = scaling_ode(prof, 1.0, 1.0, 1.0, 1e-3)
    exact = 1.0 + sol.t
    assert np.max(np.abs(sol.r - exact) / exact) <= 1e-10


def test_ode_zero_velocity_is_constant():
    prof = analytic_profile(FAMILIES["identity"], 2, 1.0)
    sol = scaling_ode(prof, 1.7, 0.0, 1.0, 1e-2)
    assert np.all(sol.r == 1.7)


def test_ode_halts_at_floor():
    # r(t) = (1 - t)^2 reaches zero at t = 1
    prof = analytic_profile(FAMILIES["identity"], 2, 1.0)
    sol = scaling_ode(prof, 1.0, -2.0, 2.0, 1e-3)
    assert sol.halted
    assert sol.t[-1] == pytest.approx(1.0, abs=2e-3)
    assert np.all(np.diff(sol.r) < 0)


def test_ode_rejects_nonpositive_psi():
    prof = _power_profile(2, 1.0)
    prof._psi_fn = lambda r: -np.ones_like(np.asarray(r, float))
    with pytest.raises(ScalingError):
        scaling_ode(prof, 1.0, 1.0, 1.0, 1e-2)


# profile extraction

def test_extract_identity_profile():
    g0, _ = random_smooth_fields(_unit(), 0, 0.2, 1)
    prof = extract_psi_f(FAMILIES["identity"], g0, [0.5, 1.0, 2.0])
    assert np.allclose(prof.psi, 1.0, atol=1e-12)
    assert np.allclose(prof.f, 0.0, atol=1e-12)
    assert prof.restricts_to_ray


def test_extract_conformal_matches_analytic():
    g0, _ = random_smooth_fields(_unit(), 1, 0.2, 1)
    r = np.array([0.5, 1.0, 2.0])
    ext = extract_psi_f(FAMILIES["conformal"], g0, r)
    ana = analytic_profile(FAMILIES["conformal"], 2, ext.vol0, r)
    assert np.allclose(ext.psi, ana.psi, rtol=1e-10)
    assert np.allclose(ext.f, ana.f, rtol=1e-6)
    assert ext.restricts_to_ray


def test_extract_sobolev_flat_has_zero_f():
    g0 = flat_metric(_unit())
    prof = extract_psi_f(FAMILIES["sobolev"], g0, [0.5, 1.0, 2.0])
    assert np.allclose(prof.psi, 1.0, atol=1e-10)
    assert np.max(np.abs(prof.f)) <= 1e-9


def test_extract_rejects_nonpositive_radius():
    with pytest.raises(ScalingError):
        extract_psi_f(FAMILIES["identity"], flat_metric(_unit()), [0.0, 1.0])


# lengths

def test_length_l2_flat():
    prof = extract_psi_f(FAMILIES["identity"], flat_metric(_unit()), np.geomspace(1e-3, 2, 9))
    assert scaling_length(prof) == pytest.approx(2.0 * math.sqrt(2.0), abs=1e-8)


def test_length_conformal_flat():
    prof = analytic_profile(FAMILIES["conformal"], 2, 1.0)
    assert scaling_length(prof) == pytest.approx(math.sqrt(2.0), abs=1e-8)


@pytest.mark.parametrize("n", [1, 2])
def test_length_boundary_exponent_diverges(n):
    assert scaling_length(_power_profile(n, -n / 2.0), vol0=1.0) == math.inf


def test_length_just_inside_boundary_is_finite():
    assert math.isfinite(scaling_length(_power_profile(2, -0.9), vol0=1.0))


def test_length_scales_with_volume():
    prof = analytic_profile(FAMILIES["identity"], 2, 1.0)
    assert scaling_length(prof, vol0=4.0) == pytest.approx(2.0 * scaling_length(prof), rel=1e-12)


# curvature-weighted lengths

def test_curvature_constant_phi_matches_l2_length():
    P = OperatorSpec("curvature", PhiFunction.polynomial([1.0]))
    g0, _ = random_smooth_fields(_unit(16), 2, 0.1, 1)
    rep = curvature_scaling_length(P, g0)
    prof = analytic_profile(FAMILIES["identity"], 2, integrate_density(Geometry(g0).vol))
    assert rep.guaranteed
    assert rep.length == pytest.approx(scaling_length(prof), abs=1e-6)


def test_curvature_flat_affine_exp_closed_form():
    P = OperatorSpec("curvature", PhiFunction.affine_exp(1.0, 0.5))
    g0 = flat_metric(_unit(8))
    rep = curvature_scaling_length(P, g0)
    n = 2
    assert rep.length == pytest.approx(math.sqrt(n * P.phi(0.0) * 1.0) * 4.0 / n, abs=1e-8)


def test_curvature_quadratic_phi_not_guaranteed():
    P = OperatorSpec("curvature", PhiFunction.polynomial([1.0, 0.0, 1.0]))
    g0, _ = random_smooth_fields(_unit(16), 3, 0.2, 1)
    rep = curvature_scaling_length(P, g0)
    assert not rep.guaranteed
    assert "does not guarantee" in rep.criterion
    assert not rep.finite


def test_curvature_length_needs_curvature_family():
    with pytest.raises(ScalingError):
        curvature_scaling_length(FAMILIES["identity"], flat_metric(_unit()))


# rays of metrics

def test_identity_ray_is_geodesic():
    g0, _ = random_smooth_fields(_unit(8), 0, 0.2, 1)
    rep = totally_geodesic_check(FAMILIES["identity"], g0)
    assert rep.passed, rep


def test_sobolev_flat_ray_is_geodesic():
    rep = totally_geodesic_check(FAMILIES["sobolev"], flat_metric(_unit(8)))
    assert rep.passed, rep


def test_curvature_generic_ray_is_not_geodesic():
    g0, _ = random_smooth_fields(_unit(16), 0, 0.2, 1)
    rep = totally_geodesic_check(FAMILIES["curvature"], g0, T=0.1)
    assert not rep.passed
    assert max(rep.psi_residual, rep.f_residual) > 1e-6
