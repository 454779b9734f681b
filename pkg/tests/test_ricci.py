import math

import numpy as np
import pytest

from metricspace.grid import (GridError, TensorField, build_grid, constant_sym2,
                              flat_metric, random_smooth_fields)
from metricspace.ricci import (curl_residual, gradient_condition_residual,
                               q_adjoint, q_apply, q_matrix)
from metricspace.tensors import Geometry
from metricspace.variations import d_scal

from conftest import FAMILIES


def _unit(N, dim=2):
    return build_grid(dim, [N] * dim, [1.0] * dim)


def _fields(N=8, seed=3):
    grid = _unit(N)
    g, h = random_smooth_fields(grid, seed, 0.2, 1)
    _, k = random_smooth_fields(grid, seed + 1, 0.2, 1)
    return g, h, k


def _conformal(grid, a):
    # exp(2 a phi) delta for a fixed smooth phi
    x, y = grid.coordinates()
    phi = np.sin(2 * np.pi * x) + 0.5 * np.cos(2 * np.pi * (x + y))
    data = np.zeros((2, 2) + grid.shape)
    data[0, 0] = data[1, 1] = np.exp(2.0 * a * phi)
    return TensorField(grid, data, "dd")


# Q at the flat metric

def test_flat_identity_q_of_delta_is_zero():
    g = flat_metric(_unit(8))
    assert q_apply(FAMILIES["identity"], g, g).norm_inf() <= 1e-10


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_flat_constant_direction_q_is_zero(name):
    # constant directions keep the metric flat, so P Ricci stays zero
    grid = _unit(8)
    h = constant_sym2(grid, [[0.3, 0.1], [0.1, -0.2]])
    assert q_apply(FAMILIES[name], flat_metric(grid), h).norm_inf() <= 1e-10


def test_q_zero_direction():
    g, _, _ = _fields()
    assert q_apply(FAMILIES["identity"], g, g * 0.0).norm_inf() == 0.0


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_q_linear_in_direction(name):
    g, h, k = _fields()
    P = FAMILIES[name]
    lhs = q_apply(P, g, h * 2.0 - k * 0.5)
    rhs = q_apply(P, g, h) * 2.0 - q_apply(P, g, k) * 0.5
    assert (lhs - rhs).norm_inf() <= 1e-6 * max(rhs.norm_inf(), 1.0)


def test_q_output_symmetric():
    g, h, _ = _fields()
    q = q_apply(FAMILIES["curvature"], g, h).data
    assert np.array_equal(q, np.swapaxes(q, 0, 1))


def test_trace_compatibility_with_scal_variation():
    # D Scal(h) = tr_g Q(h) - g(h, Ric) for P = identity
    grid = build_grid(2, [32, 32], [2 * np.pi] * 2)
    g, h = random_smooth_fields(grid, 5, 0.2, 1)
    geo = Geometry(g)
    lhs = (geo.trace_g(q_apply(FAMILIES["identity"], g, h))
           - geo.inner(h, geo.ricci))
    ref = d_scal(g, h)
    err = math.sqrt(geo.integrate(lhs - ref, lhs - ref) / geo.integrate(ref, ref))
    assert err <= 1e-3


# assembled adjoint

@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_q_adjoint_pairing(name):
    g, h, k = _fields()
    P = FAMILIES[name]
    geo = Geometry(g)
    Q = q_matrix(P, g)
    a = geo.integrate(q_apply(P, g, h), k)
    b = geo.integrate(h, q_adjoint(P, geo, k, matrix=Q))
    assert abs(a - b) <= 1e-10 * max(abs(a), 1.0)


def test_q_adjoint_of_smooth_field_is_smooth():
    N = 16
    grid = _unit(N)
    g = flat_metric(grid)
    _, k = random_smooth_fields(grid, 7, 0.2, 1)
    out = q_adjoint(FAMILIES["identity"], g, k).data
    spec = np.abs(np.fft.fft2(out, axes=(-2, -1))) ** 2
    m = np.abs(np.fft.fftfreq(N, 1.0 / N))
    high = (m[:, None] > N / 4) | (m[None, :] > N / 4)
    frac = spec[..., high].sum() / spec.sum()
    assert frac <= 0.05


def test_assembly_refused_on_large_grid():
    g = flat_metric(_unit(32))
    with pytest.raises(GridError, match="too large"):
        q_matrix(FAMILIES["identity"], g)


# exterior-derivative identity

@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_curl_identity_16(name):
    g, h, k = _fields(16)
    rep = curl_residual(FAMILIES[name], g, h, k)
    assert rep.rel_diff <= 1e-2 or rep.abs_diff <= 1e-10, rep


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_curl_flat_vanishes(name):
    grid = _unit(8)
    h = constant_sym2(grid, [[0.3, 0.1], [0.1, -0.2]])
    k = constant_sym2(grid, [[-0.1, 0.2], [0.2, 0.4]])
    rep = curl_residual(FAMILIES[name], flat_metric(grid), h, k)
    assert abs(rep.lhs) <= 1e-10 and abs(rep.rhs) <= 1e-10


def test_curl_flat_identity_random_directions():
    # the linearised Ricci operator is not self-adjoint, so the sides need
    # not vanish for non-constant directions; they must still agree
    grid = _unit(8)
    _, h, k = _fields()
    rep = curl_residual(FAMILIES["identity"], flat_metric(grid), h, k)
    assert abs(rep.lhs) > 1e-3
    assert rep.abs_diff <= 1e-8 * abs(rep.lhs)


def test_curl_antisymmetric():
    g, h, k = _fields()
    P = FAMILIES["identity"]
    Q = q_matrix(P, g)
    a = curl_residual(P, g, h, k, matrix=Q)
    b = curl_residual(P, g, k, h, matrix=Q)
    assert abs(a.lhs + b.lhs) <= 1e-10
    assert abs(a.rhs + b.rhs) <= 1e-10


# gradient condition

@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_gradient_condition_holds_on_circle(name):
    g, h = random_smooth_fields(_unit(16, 1), 3, 0.2, 1)
    assert gradient_condition_residual(FAMILIES[name], g, h) <= 1e-10


def test_gradient_condition_flat_identity():
    grid = _unit(8)
    h = constant_sym2(grid, [[0.3, 0.1], [0.1, -0.2]])
    assert gradient_condition_residual(FAMILIES["identity"], flat_metric(grid), h) <= 1e-10


def test_gradient_condition_fails_on_curved_torus():
    g, h, _ = _fields()
    assert gradient_condition_residual(FAMILIES["identity"], g, h) > 1e-8


def test_gradient_condition_translation_invariant():
    g, h, _ = _fields()
    P = FAMILIES["identity"]
    shift = (3, 5)

    def roll(f):
        return f.like(np.roll(f.data, shift, axis=(-2, -1)))

    a = gradient_condition_residual(P, g, h)
    b = gradient_condition_residual(P, roll(g), roll(h))
    assert b == pytest.approx(a, rel=1e-8)


def test_gradient_condition_linear_in_amplitude():
    grid = _unit(8)
    h = constant_sym2(grid, [[1.0, 0.2], [0.2, 0.5]])
    amps = np.array([1e-3, 2e-3, 4e-3, 8e-3])
    res = [gradient_condition_residual(FAMILIES["identity"], _conformal(grid, a), h)
           for a in amps]
    slope = np.polyfit(np.log(amps), np.log(res), 1)[0]
    assert abs(slope - 1.0) <= 0.3
