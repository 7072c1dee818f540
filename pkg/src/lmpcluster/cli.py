"""Command-line entry point.  Every subcommand prints one JSON report (or a table with --pretty).

Exit codes: 0 success, 1 certification or assertion failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .certifier import closed_form_oracles, final_ratio_bound, grid_certify, rho
from .certifier.cases import default_p1
from .core_model import Instance, Objective, brute_force_opt, load_instance, validate_instance
from .generators import gen_lower_bound_instance, gen_random_instance
from .solver import SolverParams, assemble_candidates, assemble_k_solution, client_case_stats, lmp_solve, sweep_lambda

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CERTIFIED_FINAL = {Objective.KMEANS: 5.912, Objective.KMEDIAN: 2.406}


class UsageError(Exception):
    pass


def _clean(value):
    """Make a report JSON-safe: non-finite floats become strings, numpy scalars become Python ones."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [_clean(v) for v in items]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def _render(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, separators=(",", ":"))


def _table(report: dict, prefix: str = "") -> list[str]:
    lines = []
    for key in sorted(report):
        val = report[key]
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            lines += _table(val, name + ".")
        elif isinstance(val, list) and len(val) > 8:
            lines.append(f"{name:<40} [{len(val)} items]")
        else:
            lines.append(f"{name:<40} {val}")
    return lines


def _emit(report: dict, args) -> None:
    text = _render(report)
    if getattr(args, "out", None):
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    if getattr(args, "pretty", False):
        print("\n".join(_table(_clean(report))))
    elif not getattr(args, "out", None):
        print(text)


def _echo(args) -> dict:
    skip = {"func", "out", "pretty"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load(args) -> Instance:
    if not args.instance:
        raise UsageError("--instance is required")
    try:
        inst = load_instance(args.instance)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read instance {args.instance}: {exc}") from None
    if args.objective:
        inst = inst.with_objective(args.objective)
    return validate_instance(inst)


def _summary(inst: Instance) -> dict:
    return {"objective": inst.objective.value, "label": inst.label, "clients": inst.n_clients,
            "facilities": inst.n_facilities, "dimension": int(inst.clients.shape[1]),
            "scale": inst.scale, "flags": sorted(inst.flags)}


def _original_units(inst: Instance, cost: float) -> float:
    power = 2 if inst.objective is Objective.KMEANS else 1
    return cost / inst.scale ** power


def _params(args, objective: Objective) -> SolverParams:
    try:
        return SolverParams.default(objective, p1=args.p, C=args.C, mc_samples=args.mc_samples,
                                    rng_seed=args.seed, threads=args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _param_dict(params: SolverParams) -> dict:
    return {"deltas": list(params.deltas), "p1": params.p1, "C": params.C, "mc_samples": params.mc_samples,
            "rng_seed": params.rng_seed, "bisection_depth": params.bisection_depth,
            "lambda_step": params.lambda_step, "pad_to_k": params.pad_to_k}


# ---------------------------------------------------------------- subcommands

def cmd_solve(args) -> tuple[dict, int]:
    inst = _load(args)
    if args.k is None or not 1 <= args.k <= inst.n_facilities:
        raise UsageError(f"--k must lie in [1, {inst.n_facilities}]")
    params = _params(args, inst.objective)
    bracket = sweep_lambda(inst, args.k, params)
    candidates = assemble_candidates(inst, bracket, args.k, params)
    solution = assemble_k_solution(inst, bracket, args.k, params)
    lo = bracket.growth_lo
    report = {
        "command": "solve",
        "args": _echo(args),
        "instance": _summary(inst),
        "parameters": _param_dict(params),
        "solution": {"centers": solution.sorted_indices(), "cost": solution.cost,
                     "cost_original_units": _original_units(inst, solution.cost)},
        "routes": [{"route": c.route, "size": len(c.centers), "cost": c.cost} for c in candidates],
        "dual": {"bracket": bracket.to_dict(),
                 "dual_sum_lo": float(np.sum(lo.alpha)),
                 "lagrangian_lower_bound": float(np.sum(lo.alpha)) - bracket.lambda_lo * args.k},
        "seed": args.seed,
    }
    status = EXIT_OK
    if args.oracle:
        opt = brute_force_opt(inst, args.k)
        ratio = solution.cost / opt.cost if opt.cost > 0 else (1.0 if solution.cost == 0 else math.inf)
        bound = CERTIFIED_FINAL[inst.objective]
        report["oracle"] = {"opt_centers": opt.sorted_indices(), "opt_cost": opt.cost,
                            "realized_ratio": ratio, "certified_bound": bound,
                            "within_bound": bool(ratio <= bound)}
        if ratio > bound:
            status = EXIT_FAIL
    if args.dump_duals:
        report["duals"] = lo.to_dict()
    if args.dump_nqis:
        report["nqis_lo"] = bracket.nqis_lo.to_dict()
        report["nqis_hi"] = bracket.nqis_hi.to_dict() if bracket.nqis_hi else None
    return report, status


def cmd_certify(args) -> tuple[dict, int]:
    if not args.objective:
        raise UsageError("--objective is required")
    if args.target is None or args.target <= 0:
        raise UsageError("--target must be a positive number")
    obj = Objective.parse(args.objective)
    cert = grid_certify(obj, args.target)
    report = cert.to_dict(include_timing=False)
    report.update(command="certify", args=_echo(args),
                  rho_at_p1=rho(obj, default_p1(obj)), final_ratio_bound=final_ratio_bound(obj))
    return report, EXIT_OK if cert.certified else EXIT_FAIL


def cmd_oracle(args) -> tuple[dict, int]:
    if args.instance:
        inst = _load(args)
        if args.k is None or not 1 <= args.k <= inst.n_facilities:
            raise UsageError(f"--k must lie in [1, {inst.n_facilities}]")
        opt = brute_force_opt(inst, args.k)
        return {"command": "oracle", "args": _echo(args), "instance": _summary(inst),
                "opt_centers": opt.sorted_indices(), "opt_cost": opt.cost}, EXIT_OK
    res = closed_form_oracles(samples=args.mc_samples or 100_000, seed=args.seed)
    report = res.to_dict()
    report.update(command="oracle", args=_echo(args))
    return report, EXIT_OK if res.ok else EXIT_FAIL


def cmd_gen(args) -> tuple[dict, int]:
    try:
        if args.kind == "lower-bound":
            lb = gen_lower_bound_instance(args.T, args.N, args.h, args.eps)
            data = lb.instance.to_dict()
            data["recommended_lambda"] = lb.lam
        else:
            inst = gen_random_instance(args.n, args.m, args.d, args.kind, args.seed,
                                       objective=args.objective or "kmeans")
            data = inst.to_dict()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return data, EXIT_OK


def cmd_lmp(args) -> tuple[dict, int]:
    inst = _load(args)
    if args.lam is None or args.lam < 0:
        raise UsageError("--lambda must be a nonnegative number")
    params = _params(args, inst.objective)
    out = lmp_solve(inst, args.lam, params)
    report = out.to_dict()
    report.update(command="lmp", args=_echo(args), instance=_summary(inst), parameters=_param_dict(params))
    if args.dump_duals:
        report["duals"] = out.growth.to_dict()
    if args.dump_nqis:
        report["nqis"] = out.nqis.to_dict()
    return report, EXIT_OK


def cmd_stats(args) -> tuple[dict, int]:
    inst = _load(args)
    if args.lam is None or args.lam < 0:
        raise UsageError("--lambda must be a nonnegative number")
    params = _params(args, inst.objective)
    from .dual_growth import grow_duals
    from .nqis import build_nqis

    growth = grow_duals(inst, args.lam)
    nq = build_nqis(growth, inst, params.deltas)
    acc = client_case_stats(inst, growth, nq)
    violations = acc.violations()
    report = acc.to_dict()
    report.update(command="stats", args=_echo(args), instance=_summary(inst), violations=violations)
    return report, EXIT_OK if not violations else EXIT_FAIL


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, *, instance=True) -> None:
    if instance:
        p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--objective", choices=["kmeans", "kmedian"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--pretty", action="store_true", help="print a readable table")
    p.add_argument("--threads", type=int, default=1)


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p", type=float, default=None, help="rounding probability (defaults per objective)")
    p.add_argument("--C", type=int, default=None, help="group-size threshold for grouped rounding")
    p.add_argument("--mc-samples", type=int, default=None)
    p.add_argument("--dump-duals", action="store_true")
    p.add_argument("--dump-nqis", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmpcluster", description="Primal-dual k-means / k-median toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="choose exactly k centers")
    _common(p)
    _solver_flags(p)
    p.add_argument("--k", type=int)
    p.add_argument("--oracle", action="store_true", help="also compute OPT_k by enumeration")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certify", help="grid certification of a final ratio")
    _common(p, instance=False)
    p.add_argument("--target", type=float)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("oracle", help="closed-form sampling checks, or OPT_k with --instance")
    _common(p)
    p.add_argument("--k", type=int)
    p.add_argument("--mc-samples", type=int, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gen", help="generate an instance")
    _common(p, instance=False)
    p.add_argument("--kind", choices=["uniform", "clustered", "lower-bound"], default="uniform")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--h", type=int, default=10)
    p.add_argument("--eps", type=float, default=0.01)
    p.set_defaults(func=cmd_gen)

    for name, func, text in (("lmp", cmd_lmp, "single-lambda LMP run"),
                             ("stats", cmd_stats, "per-client case accounting")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _solver_flags(p)
        p.add_argument("--lambda", dest="lam", type=float)
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    if args.threads < 1:
        parser.print_usage(sys.stderr)
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    start = time.perf_counter()
    try:
        report, status = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssertionError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _emit(report, args)
    print(f"wall time: {time.perf_counter() - start:.3f}s", file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
