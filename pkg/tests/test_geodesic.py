import json
import math

import numpy as np
import pytest

from metricspace.geodesic import (BoundaryReached, GeodesicState, energy, flow_field,
                                  integrate_geodesic, momentum_density, path_length)
from metricspace.grid import TensorField, build_grid, flat_metric, random_smooth_fields
from metricspace.operators import OperatorSpec, op_apply

from conftest import FAMILIES


def _unit(N=8):
    return build_grid(2, [N, N], [1.0, 1.0])


def test_zero_velocity_stays_put():
    grid = _unit()
    g, _ = random_smooth_fields(grid, 0, 0.2, 1)
    tr = integrate_geodesic(FAMILIES["sobolev"], g, g * 0.0, 0.1, 0.01)
    for st in tr.states:
        np.testing.assert_array_equal(st.g.data, g.data)
    assert all(r.energy == 0.0 for r in tr.monitors)


def test_l2_closed_form():
    d = flat_metric(_unit())
    tr = integrate_geodesic(FAMILIES["identity"], d, d, 1.0, 1e-3)
    for st in tr.states:
        assert st.g.data[0, 0, 0, 0] == pytest.approx((1 + st.t / 2) ** 2, rel=1e-10)
        assert st.g.data[0, 1, 0, 0] == 0.0


def test_monitors_and_snapshots():
    d = flat_metric(_unit())
    tr = integrate_geodesic(FAMILIES["identity"], d, d, 1.0, 1e-2)
    assert len(tr.monitors) == 101
    assert np.all(np.diff(tr.times) > 0)
    # one snapshot every ceil(T / (100 dt)) = 1 step
    assert len(tr.states) == 101
    tr = integrate_geodesic(FAMILIES["identity"], d, d, 1.0, 1e-3)
    assert len(tr.states) == 101 and tr.final.t == 1.0


def test_jsonl_output(tmp_path):
    d = flat_metric(_unit())
    tr = integrate_geodesic(FAMILIES["identity"], d, d, 0.05, 1e-2)
    p = tmp_path / "t.jsonl"
    tr.write_jsonl(p)
    rows = [json.loads(line) for line in p.read_text().splitlines()]
    assert len(rows) == len(tr.monitors)
    assert set(rows[0]) >= {"t", "energy", "momentum_drift", "spd_margin"}


@pytest.mark.parametrize("name", ["identity", "conformal", "sobolev"])
def test_energy_conserved(name):
    grid = _unit(16)
    g, _ = random_smooth_fields(grid, 0, 0.1, 1)
    _, u = random_smooth_fields(grid, 1, 0.05, 1)
    tr = integrate_geodesic(FAMILIES[name], g, u, 0.5, 0.05)
    E = np.array([r.energy for r in tr.monitors])
    # the Sobolev energy is evaluated through a solve at relative tolerance 1e-10
    tol = 1e-9 if name == "sobolev" else 1e-12
    assert np.max(np.abs(E / E[0] - 1)) <= tol


def test_energy_matches_gp_norm_of_velocity():
    grid = _unit(16)
    g, u = random_smooth_fields(grid, 2, 0.2, 1)
    P = FAMILIES["sobolev"]
    st = GeodesicState(g, op_apply(P, g, u))
    from metricspace.operators import gp_inner
    assert energy(P, st) == pytest.approx(gp_inner(P, g, u, u), rel=1e-10)
    gt, _ = flow_field(P, st)
    assert np.max(np.abs(gt.data - u.data)) <= 1e-9


def test_momentum_drift_converges_for_sobolev():
    drifts = []
    for N in (8, 16):
        grid = _unit(N)
        g, _ = random_smooth_fields(grid, 0, 0.02, 1)
        _, u = random_smooth_fields(grid, 1, 0.002, 1)
        tr = integrate_geodesic(FAMILIES["sobolev"], g, u, 0.5, 0.05)
        drifts.append(max(r.momentum_norm_drift for r in tr.monitors))
    assert drifts[0] / drifts[1] >= 4


def test_momentum_density_of_flat_constant_velocity():
    d = flat_metric(_unit())
    for derivative in ("fd", "spectral"):
        md = momentum_density(FAMILIES["identity"], GeodesicState(d, d * 2.0), derivative)
        assert np.max(np.abs(md.values)) <= 1e-13


@pytest.mark.parametrize("name", ["identity", "conformal"])
def test_pointwise_geodesics_conserve_momentum_to_roundoff(name):
    grid = _unit(16)
    g, _ = random_smooth_fields(grid, 0, 0.02, 1)
    _, u = random_smooth_fields(grid, 1, 0.002, 1)
    tr = integrate_geodesic(FAMILIES[name], g, u, 1.0, 0.05)
    assert max(r.momentum_norm_drift for r in tr.monitors) <= 1e-12


def test_stencil_momentum_shows_truncation_error():
    # the same geodesic measured with the stencil drifts at its truncation level
    grid = _unit(16)
    g, _ = random_smooth_fields(grid, 0, 0.02, 1)
    _, u = random_smooth_fields(grid, 1, 0.002, 1)
    P = FAMILIES["identity"]
    tr = integrate_geodesic(P, g, u, 1.0, 0.05)
    m0, m1 = (momentum_density(P, s, "fd").values for s in (tr.states[0], tr.final))
    drift = np.max(np.abs(m1 - m0)) / np.max(np.abs(m0))
    assert 1e-8 < drift < 1e-3


def test_pointwise_decoupling():
    grid = _unit(16)
    g, u = random_smooth_fields(grid, 0, 0.2, 1)
    P = FAMILIES["identity"]
    base = integrate_geodesic(P, g, u, 1.0, 1e-2).final.g
    du = np.zeros_like(u.data)
    du[:, :, 3, 5] = [[0.05, 0.01], [0.01, 0.02]]
    pert = integrate_geodesic(P, g, u + u.like(du), 1.0, 1e-2).final.g
    diff = np.abs(pert.data - base.data)
    diff[:, :, 3, 5] = 0.0
    assert diff.max() <= 1e-13


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_l2_scaling_equivariance(c):
    grid = _unit(8)
    g, u = random_smooth_fields(grid, 4, 0.2, 1)
    P = FAMILIES["identity"]
    a = integrate_geodesic(P, g * c, u * c, 1.0, 1e-2).final.g
    b = integrate_geodesic(P, g, u, 1.0, 1e-2).final.g * c
    assert np.max(np.abs(a.data - b.data)) <= 1e-9 * np.max(np.abs(b.data))


def test_boundary_event_is_reported():
    d = flat_metric(_unit())
    tr = integrate_geodesic(FAMILIES["identity"], d, d * -3.0, 1.0, 1e-2)
    assert tr.boundary_reached
    # r(t) = (1 - 3t/2)^2 reaches zero at t = 2/3
    assert tr.final.t <= 2 / 3 + 1e-9
    assert tr.final.t >= 0.6


def test_shrinking_path_length():
    d = flat_metric(_unit())
    P = FAMILIES["identity"]
    tr = integrate_geodesic(P, d, d * -2.0, 1.0, 1e-2, "rk4_adaptive", spd_floor=1e-10)
    assert path_length(P, tr) == pytest.approx(2 * math.sqrt(2), abs=1e-3)


def test_rejects_bad_arguments():
    d = flat_metric(_unit())
    P = FAMILIES["identity"]
    with pytest.raises(ValueError):
        integrate_geodesic(P, d, d, 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate_geodesic(P, d, d, 1.0, 0.1, scheme="euler")
    bad = TensorField(d.grid, -d.data, "dd")
    with pytest.raises(ValueError):
        integrate_geodesic(P, bad, d, 1.0, 0.1)
