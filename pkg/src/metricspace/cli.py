"""Command-line front end.

    metricspace geodesic    --config run.json --out out/
    metricspace expmap      --config run.json
    metricspace logmap      --config run.json --tol 1e-8
    metricspace scaling     --family identity --n 2 --vol 1
    metricspace ricci-curl  --config run.json
    metricspace verify      --suite variational --grid 32 --seed 42
    metricspace curvature   --grid 64

Exit status: 0 when every gated tolerance passes, 1 on a numerical gate
failure, 2 on an invalid configuration.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .config import (ConfigError, apply_overrides, load_config, make_field,
                     make_grid, make_operator)
from .geodesic import BoundaryReached, integrate_geodesic
from .grid import GridError
from .io import write_csv, write_field, write_json
from .operators import OperatorSpec, PhiFunction

EXIT_OK, EXIT_GATE, EXIT_SCHEMA = 0, 1, 2


def _out(cfg, name):
    return os.path.join(cfg["outputs"]["dir"], name)


def _setup(args):
    cfg = load_config(args.config)
    return apply_overrides(cfg, args.grid, args.seed, args.out)


def _initial(cfg, grid):
    g0 = make_field(cfg["initial_metric"], grid, role="metric")
    return g0


def cmd_geodesic(args) -> int:
    cfg = _setup(args)
    grid, P = make_grid(cfg), make_operator(cfg)
    g0 = _initial(cfg, grid)
    u0 = make_field(cfg["initial_velocity"], grid, metric=g0)
    integ = cfg["integrator"]
    tr = integrate_geodesic(P, g0, u0, integ["T"], integ["dt"], integ["scheme"],
                            spd_floor=integ["spd_floor"])
    os.makedirs(cfg["outputs"]["dir"], exist_ok=True)
    tr.write_jsonl(_out(cfg, "trajectory.jsonl"))
    write_field(_out(cfg, "final_metric.json"), tr.final.g, "metric")
    snapshots = []
    if integ["snapshots"]:
        for i, st in enumerate(tr.states):
            name = f"snapshot_{i:04d}.json"
            write_field(_out(cfg, name), st.g, "metric")
            snapshots.append({"t": st.t, "file": name})
    E = np.array([r.energy for r in tr.monitors])
    drift = float(np.max(np.abs(E - E[0])) / abs(E[0])) if E[0] != 0 else float(np.max(np.abs(E)))
    mom = max(r.momentum_norm_drift for r in tr.monitors)
    report = {"operator": P.to_dict(), "grid": cfg["grid"], "dt": integ["dt"],
              "T": integ["T"], "scheme": integ["scheme"], "final_t": tr.final.t,
              "boundary_reached": tr.boundary_reached, "halt_reason": tr.halt_reason,
              "energy_drift": drift, "momentum_drift": mom, "snapshots": snapshots}
    write_json(_out(cfg, "geodesic.json"), report)
    print(f"t_final={tr.final.t:.6g} energy_drift={drift:.3e} momentum_drift={mom:.3e}")
    if tr.boundary_reached:
        print(f"boundary reached: {tr.halt_reason}", file=sys.stderr)
        return EXIT_OK
    gate = args.tol if args.tol is not None else cfg["tolerances"].get("energy_drift")
    if gate is not None and not drift <= gate:
        print(f"energy drift {drift:.3e} exceeds {gate:.3e}", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def cmd_expmap(args) -> int:
    from .shooting import exp_map

    cfg = _setup(args)
    grid, P = make_grid(cfg), make_operator(cfg)
    g0 = _initial(cfg, grid)
    u0 = make_field(cfg["initial_velocity"], grid, metric=g0)
    integ = cfg["integrator"]
    try:
        g1 = exp_map(P, g0, u0, integ["dt"], integ["scheme"])
    except BoundaryReached as exc:
        write_json(_out(cfg, "expmap.json"), {"boundary_reached": True, "message": str(exc)})
        print(f"exp map undefined: {exc}", file=sys.stderr)
        return EXIT_GATE
    write_field(_out(cfg, "exp_metric.json"), g1, "metric")
    write_json(_out(cfg, "expmap.json"), {"operator": P.to_dict(), "dt": integ["dt"],
                                          "boundary_reached": False})
    print(f"wrote {_out(cfg, 'exp_metric.json')}")
    return EXIT_OK


def cmd_logmap(args) -> int:
    from .shooting import ShootingError, log_map

    cfg = _setup(args)
    grid, P = make_grid(cfg), make_operator(cfg)
    g0 = _initial(cfg, grid)
    g1 = make_field(cfg["target_metric"], grid, metric=g0, role="metric")
    integ = cfg["integrator"]
    tol = args.tol if args.tol is not None else cfg["tolerances"]["shooting"]
    try:
        u, rep = log_map(P, g0, g1, integ["dt"], integ["scheme"], tol=tol,
                         return_report=True)
    except ShootingError as exc:
        write_json(_out(cfg, "logmap.json"), {"iterations": None, "final_residual": None,
                                              "converged": False, "message": str(exc)})
        print(f"shooting failed: {exc}", file=sys.stderr)
        return EXIT_GATE
    write_field(_out(cfg, "log_velocity.json"), u, "sym2")
    write_json(_out(cfg, "logmap.json"), rep.to_dict())
    print(f"iterations={rep.iterations} final_residual={rep.final_residual:.3e}")
    return EXIT_OK


def _scaling_operator(args) -> OperatorSpec:
    if args.family == "identity":
        return OperatorSpec("identity")
    if args.family == "sobolev":
        return OperatorSpec("sobolev", p=args.p)
    if args.family == "conformal":
        return OperatorSpec("conformal", PhiFunction.power(args.k))
    return OperatorSpec("curvature", PhiFunction.affine_exp(args.a, args.b))


def cmd_scaling(args) -> int:
    from .scaling import (_tail_slope, analytic_profile, curvature_scaling_length,
                          scaling_length)
    from .tensors import total_volume

    cfg = _setup(args)
    P = _scaling_operator(args)
    quad = args.tol if args.tol is not None else cfg["tolerances"]["quadrature"]
    r = np.geomspace(1e-3, 10.0, 41)
    if P.family == "curvature":
        grid = make_grid(cfg)
        g0 = _initial(cfg, grid)
        rep = curvature_scaling_length(P, g0, tol=quad)
        from .tensors import Geometry
        geo = Geometry(g0)
        vol = total_volume(geo)
        cell = grid.cell_volume
        rows = []
        for x in r:
            with np.errstate(over="ignore"):
                psi = float(np.sum(P.phi(geo.scal.data / x) * geo.vol.data) * cell / vol)
            rows.append((float(x), psi, ""))
        summary = rep.to_dict()
    else:
        if args.n is None or args.n < 1:
            raise ConfigError("--n must be a positive dimension for this family")
        prof = analytic_profile(P, args.n, args.vol, r)
        L = scaling_length(prof, tol=quad)
        slope = _tail_slope(lambda x: float(prof.psi_at(x)) * x ** (args.n / 2 - 2),
                            np.geomspace(1e-9, 1e-6, 7))
        finite = math.isfinite(L)
        summary = {"length": L, "finite": finite,
                   "criterion": (f"Psi(r) r^(n/2-2) ~ r^{slope:.4g} near r=0; "
                                 f"finite iff exponent > -2")}
        rows = prof.to_rows()
    summary.update({"family": P.family, "operator": P.to_dict()})
    write_csv(_out(cfg, "scaling_profile.csv"), ["r", "psi", "f"], rows)
    write_json(_out(cfg, "scaling.json"), summary)
    L = summary["length"]
    print(f"{L:.6f}" if math.isfinite(L) else "inf")
    return EXIT_OK


def cmd_ricci_curl(args) -> int:
    from .ricci import curl_residual, gradient_condition_residual, q_matrix

    cfg = _setup(args)
    grid, P = make_grid(cfg), make_operator(cfg)
    g = _initial(cfg, grid)
    h = make_field(cfg["direction_h"], grid, metric=g)
    k = make_field(cfg["direction_k"], grid, metric=g)
    Q = q_matrix(P, g)
    rep = curl_residual(P, g, h, k, matrix=Q)
    res = gradient_condition_residual(P, g, h, matrix=Q)
    out = rep.to_dict()
    out["residual_norm"] = res
    out["rel_diff"] = rep.rel_diff
    out["operator"] = P.to_dict()
    write_json(_out(cfg, "ricci_curl.json"), out)
    print(f"lhs={rep.lhs:.12e} rhs={rep.rhs:.12e} abs_diff={rep.abs_diff:.3e} "
          f"residual_norm={res:.6e}")
    tol = args.tol if args.tol is not None else cfg["tolerances"]["curl"]
    # both sides below the FD floor agree trivially
    if rep.rel_diff > tol and rep.abs_diff > 1e-10:
        print(f"curl identity mismatch {rep.rel_diff:.3e} > {tol:.3e}", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verification import format_table, run_suite

    checks = run_suite(args.suite, args.grid, args.seed)
    print(format_table(checks))
    if args.out is not None:
        write_json(os.path.join(args.out, f"verify_{args.suite}.json"),
                   {"suite": args.suite, "checks": [c.to_dict() for c in checks]})
    return EXIT_OK if all(c.passed for c in checks) else EXIT_GATE


def cmd_curvature(args) -> int:
    from .tensors import Geometry

    if args.config is None:
        from .verification import curvature_report

        N = args.grid or 64
        rep = curvature_report(N, args.seed or 0)
        out_dir = args.out or "out"
        write_field(os.path.join(out_dir, "scal.json"), rep["scal"], "scalar")
        tol = args.tol if args.tol is not None else 1e-4
        report = {"grid": N, "max_rel_error": rep["max_rel_error"],
                  "gauss_bonnet": rep["gauss_bonnet"], "tolerance": tol}
        write_json(os.path.join(out_dir, "curvature.json"), report)
        print(f"max_rel_error={rep['max_rel_error']:.3e} "
              f"gauss_bonnet={rep['gauss_bonnet']:.3e}")
        ok = rep["max_rel_error"] <= tol and abs(rep["gauss_bonnet"]) <= 1e-6
        return EXIT_OK if ok else EXIT_GATE
    cfg = _setup(args)
    grid = make_grid(cfg)
    geo = Geometry(_initial(cfg, grid))
    scal = geo.scal
    gb = float(np.sum(scal.data * geo.vol.data) * grid.cell_volume)
    write_field(_out(cfg, "scal.json"), scal, "scalar")
    write_json(_out(cfg, "curvature.json"), {"gauss_bonnet": gb,
                                             "scal_min": float(scal.data.min()),
                                             "scal_max": float(scal.data.max())})
    print(f"gauss_bonnet={gb:.3e}")
    tol = args.tol if args.tol is not None else 1e-6
    return EXIT_OK if abs(gb) <= tol else EXIT_GATE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--grid", type=int, help="points per axis (overrides the config)")
    common.add_argument("--seed", type=int,
                        help="seed S: random fields get S, S+1, ... in config order")
    common.add_argument("--tol", type=float, help="override the command's gated tolerance")

    parser = argparse.ArgumentParser(prog="metricspace", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("geodesic", parents=[common], help="integrate a geodesic")
    sub.add_parser("expmap", parents=[common], help="exponential map")
    sub.add_parser("logmap", parents=[common], help="inverse exponential map by shooting")
    sc = sub.add_parser("scaling", parents=[common], help="length of the shrinking ray")
    sc.add_argument("--family", required=True,
                    choices=["identity", "conformal", "sobolev", "curvature"])
    sc.add_argument("--n", type=int,
                    help="dimension of the base manifold")
    sc.add_argument("--vol", type=float, default=1.0, help="volume of the base metric")
    sc.add_argument("--k", type=float, default=1.0, help="power for the conformal family")
    sc.add_argument("--p", type=int, default=1, help="Sobolev order")
    sc.add_argument("--a", type=float, default=1.0, help="curvature family: a + b exp(u)")
    sc.add_argument("--b", type=float, default=0.1)
    sub.add_parser("ricci-curl", parents=[common], help="curl identity for Ricci")
    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("--suite", required=True,
                   choices=["variational", "adjoint", "conservation", "scaling", "all",
                            "exp-log", "curvature", "ricci", "decoupling"])
    sub.add_parser("curvature", parents=[common],
                   help="scalar curvature; without --config, the conformal closed-form check")
    return parser


COMMANDS = {
    "geodesic": cmd_geodesic,
    "expmap": cmd_expmap,
    "logmap": cmd_logmap,
    "scaling": cmd_scaling,
    "ricci-curl": cmd_ricci_curl,
    "verify": cmd_verify,
    "curvature": cmd_curvature,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, GridError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
