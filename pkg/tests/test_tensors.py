import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metricspace.grid import (GridError, TensorField, constant_sym2, flat_metric,
                              random_smooth_fields, scalar_field)
from metricspace.tensors import (Geometry, christoffel, curvature, integrated_inner,
                                 metric_inverse, nabla_star, total_volume, trace_first_two,
                                 volume_density)
from metricspace.verification import conformal_test_metric

from conftest import torus


def test_inverse_metric():
    g, _ = random_smooth_fields(torus(16), 0, 0.4, 2)
    gi = metric_inverse(g)
    eye = np.einsum("ab...,bc...->ac...", g.data, gi.data)
    assert np.max(np.abs(eye - np.eye(2)[:, :, None, None])) <= 1e-13
    assert gi.slots == "uu"


def test_volume_of_scaled_flat_metric():
    grid = torus(16)
    assert total_volume(flat_metric(grid, 4.0)) == pytest.approx(4 * 4 * math.pi ** 2)
    v = volume_density(constant_sym2(grid, [[2, 1], [1, 3]]))
    np.testing.assert_allclose(v.data, math.sqrt(5.0))


def test_christoffel_symmetry_and_flat_vanishing():
    g, _ = random_smooth_fields(torus(16), 1, 0.3, 2)
    G = christoffel(g).data
    np.testing.assert_array_equal(G, G.swapaxes(1, 2))
    assert not np.any(christoffel(flat_metric(torus(8), 2.0)).data)


def test_metric_is_parallel():
    g, _ = random_smooth_fields(torus(32), 2, 0.2, 1)
    assert np.max(np.abs(Geometry(g).nabla(g).data)) <= 1e-4


def test_nabla_prepends_derivative_slot():
    g, h = random_smooth_fields(torus(16), 3, 0.2, 2)
    geo = Geometry(g)
    assert geo.nabla(h).slots == "ddd"
    assert geo.nabla(scalar_field(g.grid, 1.0)).slots == "d"


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 6), rank=st.integers(0, 2))
def test_nabla_star_is_exact_adjoint(seed, rank):
    grid = torus(16)
    g, h = random_smooth_fields(grid, seed, 0.3, 2)
    _, k = random_smooth_fields(grid, seed + 1, 0.3, 2)
    geo = Geometry(g)
    T = {0: TensorField(grid, h.data[0, 1], ""), 1: TensorField(grid, h.data[0], "d"),
         2: h}[rank]
    B = geo.nabla({0: TensorField(grid, k.data[0, 0], ""),
                   1: TensorField(grid, k.data[1], "d"), 2: k}[rank])
    lhs, rhs = geo.integrate(geo.nabla(T), B), geo.integrate(T, geo.nabla_star(B))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_laplacian_symmetric_positive(seed):
    grid = torus(16)
    g, h = random_smooth_fields(grid, seed, 0.3, 2)
    _, k = random_smooth_fields(grid, seed + 7, 0.3, 2)
    geo = Geometry(g)
    a, b = geo.integrate(geo.laplacian(h), k), geo.integrate(h, geo.laplacian(k))
    assert abs(a - b) <= 1e-12 * max(abs(a), 1.0)
    assert geo.integrate(geo.laplacian(h), h) >= 0.0


def test_laplacian_of_metric_vanishes_and_constant_scalar():
    g, _ = random_smooth_fields(torus(32), 4, 0.2, 1)
    geo = Geometry(g)
    assert not np.any(geo.laplacian(scalar_field(g.grid, 2.0)).data)
    assert np.max(np.abs(geo.laplacian(g).data)) <= 1e-3


def test_flat_laplacian_of_sine():
    grid = torus(64, dim=1)
    x, = grid.coordinates()
    geo = Geometry(flat_metric(grid))
    lap = geo.laplacian(scalar_field(grid, np.sin(3 * x)))
    # nabla* nabla = -d^2 on flat space, up to the wide-stencil error
    assert np.max(np.abs(lap.data - 9 * np.sin(3 * x))) <= 1e-3 * 9


def test_nabla_star_requires_covariant_slots():
    geo = Geometry(flat_metric(torus(8)))
    with pytest.raises(GridError):
        nabla_star(geo, TensorField(geo.grid, np.zeros((2, 8, 8)), "u"))


def test_trace_first_two():
    grid = torus(8)
    T = TensorField(grid, np.eye(2)[:, :, None, None] * np.ones((8, 8)), "ud")
    np.testing.assert_array_equal(trace_first_two(T).data, 2.0)
    with pytest.raises(GridError):
        trace_first_two(TensorField(grid, T.data, "dd"))


def test_flat_curvature_is_zero():
    R, Ric, S = curvature(flat_metric(torus(8), 3.0))
    assert not np.any(R.data) and not np.any(Ric.data) and not np.any(S.data)


def test_one_dimensional_ricci_vanishes():
    g, _ = random_smooth_fields(torus(32, dim=1), 5, 0.3, 2)
    _, Ric, S = curvature(g)
    assert not np.any(Ric.data) and not np.any(S.data)


def test_conformal_scalar_curvature_and_gauss_bonnet():
    errs = []
    for N in (32, 64):
        grid = torus(N)
        g, phi, lap = conformal_test_metric(grid, 0.1, 0, 1)
        geo = Geometry(g)
        exact = -2 * np.exp(-2 * phi.data) * lap.data
        errs.append(np.max(np.abs(geo.scal.data - exact)) / np.max(np.abs(exact)))
        assert abs(integrated_inner(geo, geo.scal, scalar_field(grid, 1.0))) <= 1e-10
    assert errs[1] <= 1e-4
    assert math.log2(errs[0] / errs[1]) >= 3.5


def test_riemann_symmetries_and_ricci_symmetric():
    errs = []
    for N in (16, 32):
        g, _ = random_smooth_fields(torus(N), 6, 0.2, 1)
        R, Ric, S = Geometry(g).curvature
        np.testing.assert_allclose(R.data, -R.data.swapaxes(2, 3), atol=1e-12)
        np.testing.assert_array_equal(Ric.data, Ric.data.swapaxes(0, 1))
        # in two dimensions Ricci = Scal g / 2, here up to discretisation error
        errs.append(np.max(np.abs(Ric.data - 0.5 * S.data * g.data)) / np.max(np.abs(Ric.data)))
    assert errs[1] <= 1e-3
    assert errs[0] / errs[1] >= 8


def test_ill_conditioned_metric_rejected():
    grid = torus(8)
    bad = constant_sym2(grid, [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ValueError):
        Geometry(bad)
