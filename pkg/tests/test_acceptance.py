"""Acceptance criteria 1-9, each at its stated tolerance and runtime budget.

Every test records its outcome in ``conftest.ACCEPTANCE`` and prints one
``criterion n: PASS/FAIL`` line; the collected lines are repeated in the
terminal summary.
"""

import time

import pytest

from metricspace.verification import (adjoint_suite, conservation_suite,
                                      curvature_suite, decoupling_suite,
                                      exp_log_suite, format_table, ricci_suite,
                                      scaling_geodesic_checks, scaling_length_checks,
                                      variational_suite)

from conftest import ACCEPTANCE

pytestmark = pytest.mark.slow


def _judge(number, title, run, budget):
    t0 = time.perf_counter()
    checks = run()
    elapsed = time.perf_counter() - t0
    failed = [c for c in checks if not c.passed]
    ok = not failed and elapsed < budget
    detail = f"{title}: {len(checks) - len(failed)}/{len(checks)} checks, {elapsed:.1f}s (budget {budget:.0f}s)"
    if failed:
        detail += "; failed: " + ", ".join(c.name for c in failed)
    ACCEPTANCE[number] = (ok, detail)
    print(format_table(checks))
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert not failed, format_table(failed)
    assert elapsed < budget, f"took {elapsed:.1f}s, budget {budget}s"


def test_criterion_1_variational_formulas():
    _judge(1, "variational formulas vs finite differences, 32^2",
           lambda: variational_suite(N=32, seed=42), 60)


def test_criterion_2_adjoint_pairings():
    _judge(2, "adjoint pairings, 32^2 with refinement",
           lambda: adjoint_suite(N=32, seed=42), 120)


def test_criterion_3_closed_form_scaling_geodesics():
    _judge(3, "closed-form scaling geodesics, dt=1e-3",
           lambda: scaling_geodesic_checks(N=16), 60)


def test_criterion_4_incompleteness_lengths():
    _judge(4, "shrinking-path lengths by quadrature and integration",
           lambda: scaling_length_checks(N=16), 60)


def test_criterion_5_conservation():
    _judge(5, "energy and momentum drift over T=1, grids 16/32/64",
           lambda: conservation_suite(N=32, seed=0), 180)


def test_criterion_6_exp_log_round_trip():
    _judge(6, "exp(delta, delta) and 10-seed round trips at radius 0.2, 8^2",
           lambda: exp_log_suite(N=8, seed=0, seeds=10), 300)


def test_criterion_7_curvature():
    _judge(7, "conformal scalar curvature and Gauss-Bonnet, 64^2",
           lambda: curvature_suite(N=64, seed=0), 30)


def test_criterion_8_ricci_curl():
    _judge(8, "curl identity on 16^2 and gradient condition on T^1/T^2",
           lambda: ricci_suite(N=16, seed=3), 300)


def test_criterion_9_pointwise_decoupling():
    _judge(9, "L2 geodesic pointwise decoupling",
           lambda: decoupling_suite(N=16, seed=0), 10)
