"""Command-line front end: ``solve``, ``map``, ``trace`` and ``verify``.

Exit codes: 0 success, 1 failed verification, 2 invalid arguments,
3 degenerate instance (resultant vanishes identically).

Text and CSV output use 12 significant digits; JSON carries full float
precision so that records round-trip exactly.  ``TENSEGRITY_TOL_EQ`` and
``TENSEGRITY_EPS_H`` override the default relative tolerances.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import List, Optional, Sequence, TextIO

from .continuation import branches_to_csv, stable_segments, trace_branches
from .mechanism import Configuration, Equilibrium, MechanismParams, StabilityClass, Tolerances, check_rho
from .polysolve import DegenerateResultant, solve_equilibria
from .regions import AXES, FAMILIES, PlaneSpec, map_region, validate_boundaries
from .reproduction import run_all

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_DEGENERATE = 0, 1, 2, 3

DEGENERATE_HINT = (
    "the resultant vanishes identically for these parameters; perturb them slightly "
    "or use the symmetric/unloaded solvers in tensegrity.special_cases"
)


class UsageError(Exception):
    pass


def fmt(x: float) -> str:
    return f"{x:.12g}"


# --- records --------------------------------------------------------------------------


def equilibrium_to_record(params: MechanismParams, e: Equilibrium) -> dict:
    nodes = e.config.nodes(params, e.rho)
    return {
        "rho": e.rho,
        "theta1": e.theta1,
        "theta2": e.theta2,
        "theta1_deg": math.degrees(e.theta1),
        "theta2_deg": math.degrees(e.theta2),
        "nodes": {name: [float(v) for v in xy] for name, xy in nodes.items()},
        "energy": e.energy,
        "grad_residual": e.grad_residual,
        "h11": e.h11,
        "det_h": e.det_h,
        "stability": e.stability.value,
        "branch_tag": e.branch_tag,
    }


def record_to_equilibrium(rec: dict) -> Equilibrium:
    return Equilibrium(
        rho=rec["rho"],
        config=Configuration(rec["theta1"], rec["theta2"]),
        energy=rec["energy"],
        grad_residual=rec["grad_residual"],
        h11=rec["h11"],
        det_h=rec["det_h"],
        stability=StabilityClass(rec["stability"]),
        branch_tag=rec.get("branch_tag"),
    )


def params_to_dict(params: MechanismParams) -> dict:
    return {"l1": params.l1, "l2": params.l2, "k": params.k, "f3": params.f3, "f4": params.f4, "f3x": params.f3x, "f4x": params.f4x}


SOLVE_COLUMNS = [
    "theta1", "theta2", "theta1_deg", "theta2_deg", "x3", "y3", "x4", "y4",
    "energy", "h11", "det_h", "stability", "grad_residual",
]


def _solve_rows(params: MechanismParams, eqs: Sequence[Equilibrium]) -> List[List[str]]:
    rows = []
    for e in eqs:
        nodes = e.config.nodes(params, e.rho)
        rows.append(
            [fmt(e.theta1), fmt(e.theta2), fmt(math.degrees(e.theta1)), fmt(math.degrees(e.theta2)),
             fmt(nodes["A3"][0]), fmt(nodes["A3"][1]), fmt(nodes["A4"][0]), fmt(nodes["A4"][1]),
             fmt(e.energy), fmt(e.h11), fmt(e.det_h), e.stability.value, fmt(e.grad_residual)]
        )
    return rows


# --- argument handling ------------------------------------------------------------------


def _add_params(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("mechanism")
    g.add_argument("--l1", type=float, default=1.0, help="rod A1A3 length (default 1)")
    g.add_argument("--l2", type=float, default=1.0, help="rod A2A4 length (default 1)")
    g.add_argument("--k", type=float, default=100.0, help="spring stiffness (default 100)")
    g.add_argument("--f3", type=float, default=0.0, help="vertical force at A3, positive up")
    g.add_argument("--f4", type=float, default=0.0, help="vertical force at A4, positive up")
    g.add_argument("--f3x", type=float, default=0.0, help="horizontal force at A3 along +x")
    g.add_argument("--f4x", type=float, default=0.0, help="horizontal force at A4 along -x")
    g.add_argument("--tol-eq", type=float, default=None, help="relative equilibrium residual tolerance")
    g.add_argument("--eps-h", type=float, default=None, help="relative Hessian degeneracy tolerance")


def _params(args) -> MechanismParams:
    try:
        return MechanismParams(args.l1, args.l2, args.k, args.f3, args.f4, args.f3x, args.f4x)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _tol(args) -> Tolerances:
    base = Tolerances.from_env()
    return Tolerances(
        tol_eq=args.tol_eq if args.tol_eq is not None else base.tol_eq,
        eps_h=args.eps_h if args.eps_h is not None else base.eps_h,
    )


def _range(text: str, name: str):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"{name} must look like LO:HI, got {text!r}") from exc
    return lo, hi


def parse_plane(text: str):
    """``"rho=0.01:2,l2=0.01:2"`` -> ``(("rho", (0.01, 2.0)), ("l2", (0.01, 2.0)))``."""
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise UsageError(f"--plane needs exactly two axes, got {text!r}")
    out = []
    for part in parts:
        if "=" not in part:
            raise UsageError(f"malformed axis {part!r}; expected NAME=LO:HI")
        name, rng = part.split("=", 1)
        name = name.strip()
        if name not in AXES:
            raise UsageError(f"unknown axis {name!r}; choose from {', '.join(AXES)}")
        out.append((name, _range(rng, name)))
    return tuple(out)


def _open_out(path: Optional[str]) -> TextIO:
    return open(path, "w", encoding="utf-8", newline="") if path else sys.stdout


def _write(text: str, path: Optional[str]) -> None:
    stream = _open_out(path)
    try:
        stream.write(text)
    finally:
        if path:
            stream.close()


# --- commands ----------------------------------------------------------------------------


def cmd_solve(args) -> int:
    params = _params(args)
    try:
        rho = check_rho(args.rho)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    eqs = solve_equilibria(params, rho, _tol(args))
    if args.format == "json":
        data = {"params": params_to_dict(params), "rho": rho, "equilibria": [equilibrium_to_record(params, e) for e in eqs]}
        _write(json.dumps(data, indent=2) + "\n", args.output)
        return EXIT_OK
    rows = _solve_rows(params, eqs)
    if args.format == "csv":
        lines = [",".join(SOLVE_COLUMNS)] + [",".join(r) for r in rows]
        _write("\n".join(lines) + "\n", args.output)
        return EXIT_OK
    n_stable = sum(e.is_stable for e in eqs)
    header = f"rho={fmt(rho)} l1={fmt(params.l1)} l2={fmt(params.l2)} k={fmt(params.k)} f3={fmt(params.f3)} f4={fmt(params.f4)}"
    if params.f3x or params.f4x:
        header += f" f3x={fmt(params.f3x)} f4x={fmt(params.f4x)}"
    lines = [header, f"{len(eqs)} equilibria, {n_stable} stable", "  ".join(SOLVE_COLUMNS)]
    lines += ["  ".join(r) for r in rows]
    _write("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def cmd_map(args) -> int:
    (ax, rx), (ay, ry) = parse_plane(args.plane)
    params = _params(args)
    fixed = {key: value for key, value in params_to_dict(params).items() if key not in (ax, ay)}
    if args.sym:
        if not ({ax, ay} & {"f3", "f4"}):
            raise UsageError("--sym needs a force axis (f3 or f4)")
        fixed.pop("f3", None)
        fixed.pop("f4", None)
    try:
        spec = PlaneSpec(ax, ay, rx, ry, args.res, fixed, symmetric=args.sym)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.depth < 0:
        raise UsageError("--depth must be non-negative")
    region = map_region(spec, depth=args.depth, jobs=args.jobs, tol=_tol(args))
    report = validate_boundaries(region, args.validate) if args.validate else None
    if args.format == "json":
        data = json.loads(region.to_json())
        if report is not None:
            data["validation"] = {
                "family": report.family,
                "boundary_points": report.n_points,
                "max_distance_cells": report.max_distance,
                "median_distance_cells": report.median_distance,
                "passes_2_cells": report.passes(2.0),
            }
        _write(json.dumps(data, sort_keys=True) + "\n", args.output)
    else:
        text = region.to_csv()
        if report is not None and not args.output:
            text += f"# validation: {report.summary()} passes_2_cells={int(report.passes(2.0))}\n"
        _write(text, args.output)
    if report is not None and args.output:
        print(f"validation: {report.summary()} passes_2_cells={int(report.passes(2.0))}")
    return EXIT_OK


def _summary_lines(branches) -> List[str]:
    lines = []
    for seg in stable_segments(branches):
        ends = []
        for kind, rho in ((seg.kind_lo, seg.rho_lo), (seg.kind_hi, seg.rho_hi)):
            br = branches[seg.branch_id]
            ev = next((e for e in br.events if e.kind is kind and abs(e.rho - rho) < 1e-12), None)
            bracket = f"[{fmt(ev.bracket[0])}, {fmt(ev.bracket[1])}]" if ev else f"[{fmt(rho)}]"
            ends.append(f"{kind.value if kind else 'none'}@{bracket}")
        lines.append(
            f"stable segment branch={seg.branch_id} mean_theta=({fmt(seg.mean_theta[0])}, {fmt(seg.mean_theta[1])}): "
            f"{ends[0]} -> {ends[1]}"
        )
    kinds = {}
    for br in branches:
        for ev in br.events:
            if ev.note != "range end":
                kinds[ev.kind.value] = kinds.get(ev.kind.value, 0) + 1
    lines.append("events: " + ", ".join(f"{k}={v}" for k, v in sorted(kinds.items())))
    return lines


def cmd_trace(args) -> int:
    lo, hi = _range(args.rho, "--rho")
    if not (0 < lo < hi) or args.steps < 2:
        raise UsageError("--rho needs 0 < LO < HI and --steps at least 2")
    params = _params(args)
    tol = _tol(args)
    branches = trace_branches(params, (lo, hi), args.steps, tol=tol, jobs=args.jobs, window_steps=args.window)
    meta = [f"# {key}={fmt(value)}" for key, value in params_to_dict(params).items()]
    if args.k == 100.0:
        meta.append("# k=100 is the default normalisation")
    text = "\n".join(meta) + "\n" + branches_to_csv(params, branches, tol)
    _write(text, args.output)
    out = sys.stdout if args.output else sys.stderr
    for line in _summary_lines(branches):
        print(line, file=out)
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_all(args.only, seed=args.seed, jobs=args.jobs, echo=lambda line: print(line, flush=True))
    if not results:
        raise UsageError(f"--only {args.only!r} selects no criteria")
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tensegrity", description="Equilibria of a planar crossed-rod tensegrity mechanism.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="all equilibria at one actuator input")
    _add_params(p)
    p.add_argument("--rho", type=float, required=True, help="actuator input (> 0)")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("map", help="stable-solution counts over a parameter plane")
    _add_params(p)
    p.add_argument("--plane", required=True, help="two axes, e.g. rho=0.01:2,l2=0.01:2")
    p.add_argument("--res", type=int, default=400, help="samples per axis (>= 2)")
    p.add_argument("--depth", type=int, default=4, help="boundary bisection depth")
    p.add_argument("--sym", action="store_true", help="tie f3 = f4 along the force axis")
    p.add_argument("--validate", choices=FAMILIES, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("trace", help="equilibrium branches over a range of rho")
    _add_params(p)
    p.add_argument("--rho", required=True, help="range LO:HI")
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--window", type=int, default=10, help="classification window in steps")
    p.add_argument("--output", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("verify", help="run the reproduction checks")
    p.add_argument("--only", default=None, help="comma-separated criterion numbers, keys or tags")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateResultant as exc:
        print(f"{parser.prog} {args.command}: degenerate instance: {exc}\n{DEGENERATE_HINT}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
