import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metricspace.fd import directional_fd, observed_order, rel_error
from metricspace.grid import GridError, TensorField, flat_metric, random_smooth_fields
from metricspace.tensors import Geometry, covariant_derivative, curvature, volume_density
from metricspace.variations import (d_laplacian, d_laplacian_adjoint, d_scal,
                                    d_volume_density, fundamental_vector_field, n_adjoint,
                                    n_apply, n_transpose, sigma_basis, sigma_n_apply,
                                    weight_gradient, weight_variation)

from conftest import torus


def _data(N, seed=1, amp=0.2, mode=1):
    grid = torus(N)
    g, m = random_smooth_fields(grid, seed, amp, mode)
    _, h = random_smooth_fields(grid, seed + 1, amp, mode)
    _, k = random_smooth_fields(grid, seed + 2, amp, mode)
    return g, m, h, k


def test_d_volume_density_matches_fd():
    g, m, _, _ = _data(32)
    assert rel_error(d_volume_density(g, m), directional_fd(volume_density, g, m)) <= 1e-8


def test_d_scal_converges():
    errs = []
    for N in (32, 64):
        g, m, _, _ = _data(N)
        errs.append(rel_error(d_scal(g, m), directional_fd(lambda q: curvature(q)[2], g, m)))
    assert errs[0] <= 1e-3
    assert observed_order(*errs) >= 2.0


def test_n_apply_and_d_laplacian_are_exact_derivatives():
    g, m, h, _ = _data(32)
    fd = directional_fd(lambda q: covariant_derivative(q, h), g, m)
    assert rel_error(n_apply(g, m, h), fd) <= 1e-8
    fd = directional_fd(lambda q: Geometry(q).laplacian(h), g, m)
    assert rel_error(d_laplacian(g, m, h), fd) <= 1e-8


def test_scaling_direction_leaves_connection_unchanged():
    g, _, h, _ = _data(16)
    assert np.max(np.abs(n_apply(g, g, h).data)) <= 1e-12


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10 ** 5))
def test_d_laplacian_adjoint_pairing(seed):
    g, m, h, k = _data(16, seed, 0.3, 2)
    geo = Geometry(g)
    a = geo.integrate(d_laplacian(geo, m, h), k)
    b = geo.integrate(m, d_laplacian_adjoint(geo, h, k))
    assert abs(a - b) <= 1e-11 * max(abs(a), 1e-3)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10 ** 5))
def test_n_adjoint_pairing(seed):
    g, m, h, k = _data(16, seed, 0.3, 2)
    geo = Geometry(g)
    B = geo.nabla(k)
    a = geo.integrate(n_apply(geo, m, h), B)
    b = geo.integrate(m, n_adjoint(geo, h, B))
    assert abs(a - b) <= 1e-11 * max(abs(a), 1e-3)


def test_n_transpose_is_pointwise_adjoint():
    g, m, h, k = _data(16)
    geo = Geometry(g)
    B = geo.nabla(k)
    a = geo.inner(n_apply(geo, m, h), B).data
    b = geo.inner(h, n_transpose(geo, m, B)).data
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_sigma_of_nabla_m_reproduces_n_apply():
    g, m, h, _ = _data(16)
    geo = Geometry(g)
    np.testing.assert_allclose(sigma_n_apply(geo, geo.nabla(m), h).data,
                               n_apply(geo, m, h).data, atol=1e-13)


def test_sigma_basis_spans_symmetric_slots():
    B = sigma_basis(2)
    assert B.shape == (6, 2, 2, 2)
    np.testing.assert_array_equal(B, B.swapaxes(2, 3))
    assert np.linalg.matrix_rank(B.reshape(6, -1)) == 6


def test_weight_variation_and_gradient_match_fd():
    g, m, h, k = _data(16)
    geo = Geometry(g)
    fd = directional_fd(lambda q: Geometry(q).integrate(h, k), g, m)
    assert abs(geo.integrate(h, weight_variation(geo, m, k)) - fd) <= 1e-9 * abs(fd)
    assert abs(geo.integrate(m, weight_gradient(geo, h, k)) - fd) <= 1e-9 * abs(fd)


def test_fundamental_vector_field_of_killing_field_vanishes():
    grid = torus(16)
    g = flat_metric(grid, 2.0)
    X = TensorField(grid, np.ones((2, 16, 16)), "u")
    assert not np.any(fundamental_vector_field(g, X).data)
    with pytest.raises(GridError):
        fundamental_vector_field(g, TensorField(grid, np.ones((2, 16, 16)), "d"))


def test_lie_derivative_pairs_with_metric_to_divergence():
    # g(L_X g, g) = 2 div X, whose integral vanishes
    grid = torus(16)
    g = flat_metric(grid)
    x, y = grid.coordinates()
    X = TensorField(grid, np.stack([np.sin(x), np.cos(y)]), "u")
    L = fundamental_vector_field(g, X)
    assert abs(Geometry(g).integrate(L, g)) <= 1e-10


def test_n_adjoint_rejects_mismatched_types():
    g, m, h, _ = _data(8)
    with pytest.raises(GridError):
        n_adjoint(g, h, h)
