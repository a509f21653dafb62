"""Command-line pipeline: scenario generation, solving, sweeps, figures.

Exit codes: 0 solved to optimality, 2 infeasible, 3 node budget exhausted,
4 input or usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import report as report_mod
from .baselines import (
    associate_mcg,
    associate_rsp,
    demand_share_x,
    equal_share_x,
    find_feasible_power,
    solve_dc,
    solve_gd,
)
from .gpsolve import GpProblem, SolverOptions, solve_gp
from .migp import MigpOptions, solve_migp
from .model import Assignment
from .ppf import PpfApprox, build_ppf, nested_knot_sets
from .rounding import RbCapacityError, rb_assign
from .scenario import GeneratorParams, ScenarioFormatError, generate, load, save

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_BUDGET = 3
EXIT_INPUT = 4

METHODS = ("migp", "gp-mcg", "gp-rsp", "gp-fixed-x", "gd", "dc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _add_generator_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("scenario generation")
    g.add_argument("--users", type=int, default=40)
    g.add_argument("--macro", type=int, default=1)
    g.add_argument("--micro", type=int, default=4)
    g.add_argument("--area-radius", type=float, default=500.0, metavar="M")
    g.add_argument("--ref-gain", type=float, default=4.65e-5)
    g.add_argument("--ref-distance", type=float, default=1.0, metavar="M")
    g.add_argument("--path-loss-exp", type=float, default=3.5)
    g.add_argument("--shadowing-db", type=float, default=0.0)
    g.add_argument("--demand-median", type=float, default=2e5, metavar="BPS")
    g.add_argument("--demand-sigma", type=float, default=1.2)
    g.add_argument("--bandwidth", type=float, default=1e8, metavar="HZ")
    g.add_argument("--rb-count", type=int, default=500)
    g.add_argument("--macro-power", type=float, default=40.0, metavar="W")
    g.add_argument("--power-ratio", type=float, default=10.0)


def _params_from_args(args, n_users=None) -> GeneratorParams:
    return GeneratorParams(
        n_users=n_users if n_users is not None else args.users,
        n_macro=args.macro,
        n_micro=args.micro,
        area_radius_m=args.area_radius,
        ref_gain=args.ref_gain,
        ref_distance_m=args.ref_distance,
        path_loss_exp=args.path_loss_exp,
        shadowing_sigma_db=args.shadowing_db,
        demand_median_bps=args.demand_median,
        demand_sigma_log=args.demand_sigma,
        bandwidth_hz=args.bandwidth,
        rb_count=args.rb_count,
        macro_power_w=args.macro_power,
        macro_micro_power_ratio=args.power_ratio,
    )


def _add_solver_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("solver")
    g.add_argument("--m", type=int, default=5, help="approximation pieces")
    g.add_argument("--gamma-max", type=float, default=513.85)
    g.add_argument("--knots", type=str, default=None,
                   help="explicit comma-separated knots, 0..gamma-max")
    g.add_argument("--knot-rule", choices=("geometric", "uniform"), default="geometric")
    g.add_argument("--delta1", type=float, default=0.05)
    g.add_argument("--delta2", type=float, default=0.16)
    g.add_argument("--big-m", type=float, default=1e6)
    g.add_argument("--node-budget", type=int, default=2000)
    g.add_argument("--top-k", type=int, default=None)
    g.add_argument("--tol-gap", type=float, default=1e-8)
    g.add_argument("--tol-feas", type=float, default=1e-8)
    g.add_argument("--step", type=float, default=1e-4,
                   help="trust radius for gd/dc")
    g.add_argument("--max-iter", type=int, default=1000,
                   help="iteration cap for gd/dc")
    g.add_argument("--x-rule", choices=("equal", "demand"), default="equal",
                   help="fraction rule for gp-fixed-x")


def _ppf_from_args(args) -> PpfApprox:
    if args.knots:
        knots = [float(v) for v in args.knots.split(",")]
        return build_ppf(knots[-1], len(knots) - 1, knots)
    return build_ppf(args.gamma_max, args.m, args.knot_rule)


def _solver_options(args) -> SolverOptions:
    return SolverOptions(tol_gap=args.tol_gap, tol_feas=args.tol_feas)


def _run_method(scenario, method, ppf, args, delta2=0.0):
    """Continuous solve for one method; returns a uniform result dict."""
    solver = _solver_options(args)
    if method == "migp":
        mo = MigpOptions(
            node_budget=args.node_budget,
            top_k=args.top_k,
            big_m=args.big_m,
            delta2=delta2,
            solver=solver,
        )
        assignment, alloc, rep = solve_migp(scenario, ppf, mo)
        return dict(assignment=assignment, alloc=alloc, rep=rep)
    if method in ("gp-mcg", "gp-rsp", "gp-fixed-x"):
        if method == "gp-rsp":
            assignment = associate_rsp(scenario, scenario.p_max_rb_w)
        else:
            assignment = associate_mcg(scenario)
        if method == "gp-fixed-x":
            if args.x_rule == "equal":
                x = equal_share_x(scenario, assignment, cap=1.0 - delta2)
            else:
                x = demand_share_x(scenario, assignment)
            prob = GpProblem.with_fixed_fractions(
                scenario, ppf, assignment, x, big_m=args.big_m, delta2=delta2
            )
        else:
            prob = GpProblem.for_assignment(
                scenario, ppf, assignment, big_m=args.big_m, delta2=delta2
            )
        alloc, rep = solve_gp(prob, solver)
        return dict(assignment=assignment, alloc=alloc, rep=rep)
    if method in ("gd", "dc"):
        assignment = associate_mcg(scenario)
        x = demand_share_x(scenario, assignment)
        p0 = find_feasible_power(scenario, assignment, x)
        fn = solve_gd if method == "gd" else solve_dc
        p, brep = fn(scenario, assignment, x, args.step, p0, max_iter=args.max_iter)
        from .model import Allocation

        alloc = Allocation(x=x, p=p)
        rep = dataclasses.replace(
            _baseline_report_to_solve(brep), wall_time_s=brep.wall_time_s
        )
        return dict(assignment=assignment, alloc=alloc, rep=rep)
    raise ValueError(f"unknown method {method!r}")


def _baseline_report_to_solve(brep):
    from .gpsolve import SolveReport

    status = "optimal" if brep.status == "converged" else "max_iter"
    return SolveReport(
        status=status,
        objective_w=brep.objective_w,
        duality_gap_w=float("nan"),
        newton_iterations=brep.iterations,
        barrier_stages=0,
        wall_time_s=brep.wall_time_s,
    )


def _exit_code(status: str) -> int:
    if status == "optimal":
        return EXIT_OK
    if status == "infeasible":
        return EXIT_INFEASIBLE
    if status == "budget":
        return EXIT_BUDGET
    return EXIT_BUDGET  # max_iter / numerical: treated as budget-type failures


# -- subcommands -------------------------------------------------------------


def cmd_generate(args) -> int:
    params = _params_from_args(args)
    scenario = generate(params, args.seed)
    save(scenario, args.out)
    print(f"wrote {args.out}: {scenario.n_users} users, {scenario.n_bs} BSs")
    return EXIT_OK


def cmd_solve(args) -> int:
    try:
        scenario = load(args.scenario)
    except (ScenarioFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    ppf = _ppf_from_args(args)
    solver = _solver_options(args)

    do_round = args.round and args.method in ("migp", "gp-mcg", "gp-rsp")
    plan = None
    t_start = time.perf_counter()
    if do_round:
        assignment = None
        if args.method in ("gp-mcg", "gp-rsp"):
            assignment = (
                associate_mcg(scenario)
                if args.method == "gp-mcg"
                else associate_rsp(scenario, scenario.p_max_rb_w)
            )
        mo = MigpOptions(
            node_budget=args.node_budget, top_k=args.top_k,
            big_m=args.big_m, solver=solver,
        )
        try:
            plan, assignment, alloc, rep = rb_assign(
                scenario, args.delta1, args.delta2,
                ppf=ppf, assignment=assignment, migp_opts=mo, solver=solver,
            )
        except RbCapacityError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_INFEASIBLE
        result = dict(assignment=assignment, alloc=alloc, rep=rep)
    else:
        result = _run_method(scenario, args.method, ppf, args)
    wall = time.perf_counter() - t_start

    rep = result["rep"]
    alloc = result["alloc"]
    assignment = result["assignment"]

    doc = {
        "version": 1,
        "method": args.method,
        "status": rep.status,
        "objective_w": None if np.isnan(rep.objective_w) else rep.objective_w,
        "assignment": assignment.bs_of.tolist(),
        "x": alloc.x.ravel().tolist(),
        "p": alloc.p.tolist(),
        "rb_plan": plan.to_dict() if plan is not None else None,
        "report": {
            "status": rep.status,
            "duality_gap_w": _nan_none(rep.duality_gap_w),
            "newton_iterations": rep.newton_iterations,
            "barrier_stages": rep.barrier_stages,
            "nodes": rep.nodes,
            "bound_w": _nan_none(rep.bound_w),
            "feas_residual": _nan_none(rep.feas_residual),
        },
        "params": {
            "m": ppf.m,
            "gamma_max": ppf.gamma_max,
            "ppf": ppf.to_dict(),
            "delta1": args.delta1 if do_round else None,
            "delta2": args.delta2 if do_round else None,
            "big_m": args.big_m,
            "tol_gap": args.tol_gap,
            "tol_feas": args.tol_feas,
        },
    }
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    _print_summary(scenario, result, plan, wall)
    return _exit_code(rep.status)


def _nan_none(v):
    v = float(v)
    return None if np.isnan(v) else v


def _print_summary(scenario, result, plan, wall):
    rep = result["rep"]
    print(f"status: {rep.status}")
    if not np.isnan(rep.objective_w):
        print(f"objective: {rep.objective_w:.6e} W (sum of per-RB powers)")
    print(f"wall time: {wall:.3f} s")
    assignment = result["assignment"]
    counts = np.bincount(assignment.bs_of, minlength=scenario.n_bs)
    print(f"{'BS':>4} {'users':>6} {'RB':>6} {'P_rb (W)':>12} {'P_total (W)':>12}")
    for j in range(scenario.n_bs):
        p_rb = result["alloc"].p[j]
        if plan is not None:
            rb = int(plan.rb_per_bs[j])
            total = plan.total_power_w[j]
        else:
            rb_frac = float(result["alloc"].x[:, j].sum() * scenario.rb_count[j])
            rb = int(round(rb_frac))
            total = p_rb * rb_frac
        print(f"{j:>4} {counts[j]:>6} {rb:>6} {p_rb:>12.4e} {total:>12.4e}")


def cmd_bench(args) -> int:
    methods = [m for m in args.methods.split(",") if m]
    if not methods:
        print("error: empty method list", file=sys.stderr)
        return EXIT_INPUT
    for m in methods:
        if m not in METHODS:
            print(f"error: unknown method {m!r}", file=sys.stderr)
            return EXIT_INPUT
    users = [int(v) for v in args.users_list.split(",") if v]
    seeds = [int(v) for v in args.seeds.split(",") if v]
    m_values = [int(v) for v in args.m_values.split(",") if v]
    if not users or not seeds or not m_values:
        print("error: users, seeds, and m-values must be non-empty", file=sys.stderr)
        return EXIT_INPUT

    knot_sets = nested_knot_sets(args.gamma_max, m_values)
    rows = []
    for seed in seeds:
        for n in users:
            params = _params_from_args(args, n_users=n)
            scenario = generate(params, seed)
            for m in m_values:
                ppf = build_ppf(args.gamma_max, m, knot_sets[m])
                for method in methods:
                    row = {
                        "method": method, "n": n, "m": m, "seed": seed,
                        "status": "", "objective_w": "", "kwh": "",
                        "wall_ms": "", "nodes": "",
                    }
                    t0 = time.perf_counter()
                    try:
                        result = _run_method(scenario, method, ppf, args)
                        rep = result["rep"]
                        row["status"] = rep.status
                        if not np.isnan(rep.objective_w):
                            row["objective_w"] = repr(float(rep.objective_w))
                            row["kwh"] = repr(float(rep.objective_w) * args.duration_h / 1000.0)
                        row["nodes"] = rep.nodes
                    except Exception as e:  # record the failure, keep sweeping
                        row["status"] = f"error:{type(e).__name__}"
                    wall_ms = (time.perf_counter() - t0) * 1000.0
                    row["wall_ms"] = "0" if args.no_timing else f"{wall_ms:.1f}"
                    rows.append(row)

    fieldnames = ["method", "n", "m", "seed", "status", "objective_w", "kwh", "wall_ms", "nodes"]
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.out}: {len(rows)} rows")

    if args.figures:
        created = report_mod.render_figures(args.out, Path(args.out).parent)
        for pth in created:
            print(f"wrote {pth}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        created = report_mod.render_figures(args.csv, args.outdir)
    except (OSError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    for pth in created:
        print(f"wrote {pth}")
    if not created:
        print("nothing to plot (need multiple users/methods or an m sweep)")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="hetpower", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write a synthetic scenario file",
                           parents=[], add_help=True)
    _add_generator_args(p_gen)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--out", type=str, required=True)
    p_gen.set_defaults(fn=cmd_generate)

    p_solve = sub.add_parser("solve", help="solve one scenario file")
    p_solve.add_argument("scenario", type=str)
    p_solve.add_argument("--method", choices=METHODS, default="migp")
    _add_solver_args(p_solve)
    p_solve.add_argument("--round", action=argparse.BooleanOptionalAction, default=True,
                         help="apply the integer RB pipeline (migp/gp-mcg/gp-rsp)")
    p_solve.add_argument("--out", type=str, default=None)
    p_solve.set_defaults(fn=cmd_solve)

    p_bench = sub.add_parser("bench", help="run a sweep and write CSV")
    _add_generator_args(p_bench)
    _add_solver_args(p_bench)
    p_bench.add_argument("--seeds", type=str, default="0")
    p_bench.add_argument("--users-list", type=str, default="20,50", metavar="N1,N2")
    p_bench.add_argument("--methods", type=str, default="migp,gp-mcg")
    p_bench.add_argument("--m-values", type=str, default="5")
    p_bench.add_argument("--duration-h", type=float, default=1.0,
                         help="snapshot duration for the kWh column")
    p_bench.add_argument("--no-timing", action="store_true",
                         help="zero the wall_ms column for reproducible output")
    p_bench.add_argument("--figures", action="store_true",
                         help="render figures next to the CSV")
    p_bench.add_argument("--out", type=str, required=True)
    p_bench.set_defaults(fn=cmd_bench)

    p_rep = sub.add_parser("report", help="render figures from a bench CSV")
    p_rep.add_argument("csv", type=str)
    p_rep.add_argument("--outdir", type=str, default=".")
    p_rep.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_INPUT
    try:
        return args.fn(args)
    except (ScenarioFormatError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
