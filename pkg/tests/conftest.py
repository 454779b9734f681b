import math

import pytest

from metricspace import OperatorSpec, PhiFunction, build_grid

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE = {}


def torus(N, dim=2, L=2.0 * math.pi):
    return build_grid(dim, [N] * dim, [L] * dim)


FAMILIES = {
    "identity": OperatorSpec("identity"),
    "conformal": OperatorSpec("conformal", PhiFunction.power(1.0)),
    "sobolev": OperatorSpec("sobolev", p=1),
    "curvature": OperatorSpec("curvature", PhiFunction.affine_exp(1.0, 0.1)),
}


@pytest.fixture(params=sorted(FAMILIES))
def family(request):
    return request.param, FAMILIES[request.param]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
