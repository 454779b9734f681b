"""Exponential and logarithm maps on a small torus.

``exp`` launches a geodesic from ``g0`` with initial velocity ``u`` and
returns where it is at ``t = 1``; ``log`` recovers ``u`` from the two end
points by Gauss-Newton shooting.  The round trip is run for each operator
family with ``|u| = 0.2 |g0|`` (``0.05`` about a near-flat metric for the
curvature-weighted family, whose geodesic problem has no well-posedness
guarantee).

    python3 demos/exp_log_round_trip.py
"""

import time

from metricspace import OperatorSpec, PhiFunction, build_grid, flat_metric
from metricspace.grid import random_smooth_fields
from metricspace.shooting import exp_map, flat_norm, log_map

FAMILIES = [
    ("identity", OperatorSpec("identity"), 0.2, 0.2, 0.05),
    ("conformal", OperatorSpec("conformal", PhiFunction.power(1.0)), 0.2, 0.2, 0.05),
    ("sobolev", OperatorSpec("sobolev", p=1), 0.2, 0.2, 0.2),
    ("curvature", OperatorSpec("curvature", PhiFunction.affine_exp(1.0, 0.1)), 0.05, 0.05, 0.05),
]


def main():
    grid = build_grid(2, [8, 8], [1.0, 1.0])
    d = flat_metric(grid)
    e = exp_map(OperatorSpec("identity"), d, d)
    print(f"exp(delta, delta) / delta = {e.data[0, 0].mean():.12f}  (2.25 expected)")

    for name, P, base_amp, radius, dt in FAMILIES:
        g0, _ = random_smooth_fields(grid, 0, base_amp, 1)
        _, u = random_smooth_fields(grid, 100, 0.2, 1)
        u = u * (radius * flat_norm(g0) / flat_norm(u))
        t0 = time.perf_counter()
        g1 = exp_map(P, g0, u, dt=dt)
        v, rep = log_map(P, g0, g1, dt=dt, return_report=True)
        err = flat_norm(v - u) / flat_norm(u)
        print(f"{name:9s} |u|/|g0|={radius:.2f}  iterations={rep.iterations}  "
              f"|log(exp u) - u|/|u| = {err:.2e}  ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
