"""What is conserved along a computed geodesic, and how well.

Energy ``G^P(g_t, g_t)`` and the momentum density ``(nabla^* P g_t) vol``
are constant along exact geodesics.  The L2 and volume-weighted equations
act point by point, so the computed geodesics conserve both to round-off.
The Sobolev and curvature-weighted equations involve the difference
stencil, so their momentum drifts at the stencil's truncation level and
shrinks about 16x per grid refinement.

The last lines show why the momentum is measured with Fourier derivatives:
the same L2 geodesic, measured with the stencil, appears to drift because
the stencil does not obey the chain rule exactly.

    python3 demos/conserved_quantities.py
"""

import numpy as np

from metricspace import OperatorSpec, PhiFunction, build_grid
from metricspace.geodesic import integrate_geodesic, momentum_density
from metricspace.grid import random_smooth_fields
from metricspace.verification import conservation_drifts

FAMILIES = {
    "identity": OperatorSpec("identity"),
    "conformal": OperatorSpec("conformal", PhiFunction.power(1.0)),
    "sobolev": OperatorSpec("sobolev", p=1),
    "curvature": OperatorSpec("curvature", PhiFunction.affine_exp(1.0, 0.1)),
}


def main():
    print(f"{'family':10s} {'N':>4s} {'energy drift':>13s} {'momentum drift':>15s}")
    for name, P in FAMILIES.items():
        for N in (16, 32):
            e, m, _ = conservation_drifts(P, N)
            print(f"{name:10s} {N:4d} {e:13.2e} {m:15.2e}")

    grid = build_grid(2, [32, 32], [1.0, 1.0])
    g, _ = random_smooth_fields(grid, 0, 0.02, 1)
    _, u = random_smooth_fields(grid, 1, 2e-3, 1)
    P = FAMILIES["identity"]
    tr = integrate_geodesic(P, g, u, 1.0, 1e-2)
    for derivative in ("spectral", "fd"):
        m0, m1 = (momentum_density(P, s, derivative).values for s in (tr.states[0], tr.final))
        print(f"L2 momentum drift measured with {derivative:8s} derivatives: "
              f"{np.max(np.abs(m1 - m0)) / np.max(np.abs(m0)):.2e}")


if __name__ == "__main__":
    main()
