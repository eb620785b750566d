"""Command-line front end.

Exit codes: 0 success (including "never invest"), 2 invalid input,
3 solver failure, 4 a check failed, 5 simulation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

from . import __version__
from .analytic import build
from .errors import ConsistencyError, InvalidSpecError, SimulationError, SolverError
from .model import FIELD_NAMES, ProblemSpec, validate
from .solver import PolicyTriple, solve
from .value import log_grid, run_checks, value_function

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4
EXIT_SIM = 5

TABLE_COLUMNS = ("B", "s", "S", "spread", "v0", "vs", "vS")


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"impulse-ss: {msg}", file=sys.stderr)


def _spec_from_args(args) -> ProblemSpec:
    data = {}
    if args.spec:
        with open(args.spec) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise UsageError("spec file must hold a JSON object")
        ProblemSpec.from_dict({**{k: 0.0 for k in FIELD_NAMES}, **data})  # reject unknown keys early
    for name in FIELD_NAMES:
        val = getattr(args, name)
        if val is not None:
            data[name] = val
    missing = [n for n in FIELD_NAMES if n not in data]
    if missing:
        raise UsageError("missing parameters: " + ", ".join(f"--{n}" for n in missing))
    return ProblemSpec.from_dict(data)


def _validated(spec: ProblemSpec) -> ProblemSpec:
    report = validate(spec)
    if not report.passed:
        raise InvalidSpecError(report)
    return spec


def solution_row(spec: ProblemSpec, outcome) -> dict:
    """Outcome plus the derived table columns."""
    row = outcome.to_dict()
    if isinstance(outcome, PolicyTriple):
        vf = value_function(build(spec), outcome)
        row.update(
            spread=outcome.S - outcome.s,
            v0=vf.value_at_zero,
            vs=float(vf.eval(outcome.s)),
            vS=vf.value_at_target,
        )
    return row


def _fmt4(x: float) -> str:
    return "NA" if x is None or not math.isfinite(x) else f"{x:.4f}"


def _fmt(x: float) -> str:
    return "NA" if not math.isfinite(x) else repr(float(x))


def _csv_writer(out):
    return csv.writer(out, lineterminator="\n")


def cmd_validate(args) -> int:
    spec = _spec_from_args(args)
    report = validate(spec)
    print(json.dumps(report.to_dict(), indent=None if args.json else 2))
    return EXIT_OK if report.passed else EXIT_INVALID


def cmd_solve(args) -> int:
    spec = _validated(_spec_from_args(args))
    outcome = solve(spec)
    row = solution_row(spec, outcome)
    if args.csv:
        w = _csv_writer(sys.stdout)
        w.writerow(("kind",) + TABLE_COLUMNS)
        w.writerow([row["kind"]] + [_fmt4(row.get(c)) for c in TABLE_COLUMNS])
    else:
        print(json.dumps(row))
    return EXIT_OK


def _parse_values(text: str) -> list[float]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"bad --values list: {exc}") from None


def sweep_rows(base: ProblemSpec, param: str, values: list[float]):
    """One result dict per value; failures carry ``error`` instead of numbers."""
    for val in values:
        spec = base.replace(**{param: val})
        report = validate(spec)
        if not report.passed:
            detail = "; ".join(f"{n}: {d}" for n, d in report.violations)
            yield {"param": val, "kind": "skipped", "error": detail}
            continue
        try:
            yield {"param": val, **solution_row(spec, solve(spec))}
        except (SolverError, ConsistencyError) as exc:
            yield {"param": val, "kind": "failed", "error": str(exc)}


def cmd_sweep(args) -> int:
    values = _parse_values(args.values)
    if getattr(args, args.param) is None and values:
        setattr(args, args.param, values[0])  # base value is irrelevant for the swept field
    rows = list(sweep_rows(_spec_from_args(args), args.param, values)) if values else []
    for r in rows:
        if "error" in r:
            _err(f"{args.param}={r['param']}: {r['error']}")
    if args.json:
        print(json.dumps(rows))
        return EXIT_OK
    buf = io.StringIO()
    w = _csv_writer(buf)
    w.writerow(("param",) + TABLE_COLUMNS)
    for r in rows:
        w.writerow([f"{r['param']:g}"] + [_fmt4(r.get(c)) for c in TABLE_COLUMNS])
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _value_function(args):
    spec = _validated(_spec_from_args(args))
    outcome = solve(spec)
    if args.override_B is not None:
        if not isinstance(outcome, PolicyTriple):
            raise UsageError("--override-B needs an investing solution")
        outcome = PolicyTriple(args.override_B, outcome.s, outcome.S)
    return spec, value_function(build(spec), outcome)


def cmd_check(args) -> int:
    _, vf = _value_function(args)
    results = run_checks(vf, log_grid(args.xmin, args.xmax, args.n))
    failed = any(r.passed is False for r in results)
    if args.json:
        print(json.dumps({"passed": not failed, "checks": [r.to_dict() for r in results]}))
    else:
        for r in results:
            status = "SKIP" if r.passed is None else ("PASS" if r.passed else "FAIL")
            print(f"{status} {r.name} worst={_fmt(r.worst)} at x={_fmt(r.where)}")
    return EXIT_CHECK if failed else EXIT_OK


def cmd_dump_grid(args) -> int:
    _, vf = _value_function(args)
    buf = io.StringIO()
    w = _csv_writer(buf)
    w.writerow(("x", "v", "v_prime", "Mv", "lv_minus_f", "v_minus_Mv"))
    for row in vf.grid_rows(log_grid(args.xmin, args.xmax, args.n)):
        w.writerow([_fmt(v) for v in row])
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulate import NullPolicy, SimConfig, SsRule, configure_threads, simulate, trace

    spec = _validated(_spec_from_args(args))
    outcome = solve(spec)
    p = build(spec)
    vf = value_function(p, outcome)
    cfg = SimConfig(
        x0=args.x0, n_paths=args.paths, dt=args.dt, horizon=args.horizon,
        seed=args.seed, scheme=args.scheme, max_block=args.max_block,
    )
    configure_threads()
    optimal = SsRule(outcome.s, outcome.S) if isinstance(outcome, PolicyTriple) else NullPolicy()
    opt = simulate(spec, optimal, cfg)
    null = simulate(spec, NullPolicy(), cfg)
    v_x0 = float(vf.eval(args.x0))
    vhat_x0 = float(p.vhat(args.x0))
    report = {
        "x0": args.x0,
        "outcome": outcome.to_dict(),
        "optimal": opt.estimate.to_dict(),
        "value": v_x0,
        "optimal_gap": opt.estimate.mean - v_x0,
        "null": null.estimate.to_dict(),
        "vhat": vhat_x0,
        "null_gap": null.estimate.mean - vhat_x0,
    }
    print(json.dumps(report, indent=None if args.json else 2))
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = _csv_writer(fh)
            w.writerow(("path", "t", "x", "impulse_flag"))
            for path, t, x, flag in trace(spec, optimal, cfg, args.trace_paths, args.trace_every):
                w.writerow((path, repr(t), repr(x), flag))
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    for name in FIELD_NAMES:
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--spec", metavar="FILE", help="flat JSON object with the six parameters; flags override it")
    p.add_argument("--json", action="store_true", help="machine-readable full-precision output")
    p.add_argument("--seed", type=int, default=42)


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--xmin", type=float, default=1e-2)
    p.add_argument("--xmax", type=float, default=1e4)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--override-B", dest="override_B", type=float, default=None,
                   help="replace the solved B (keeps s and S) to probe the checks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="impulse-ss", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the standing assumptions")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve for (B, s, S)")
    _add_common(p)
    p.add_argument("--csv", action="store_true", help="4-decimal table row instead of JSON")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve over a list of values of one parameter")
    _add_common(p)
    p.add_argument("--param", required=True, choices=FIELD_NAMES)
    p.add_argument("--values", required=True, help="comma-separated values (may be empty)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="QVI, smooth-fit and shape checks on a log grid")
    _add_common(p)
    _add_grid(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("dump-grid", help="value function and QVI residuals as CSV")
    _add_common(p)
    _add_grid(p)
    p.set_defaults(func=cmd_dump_grid)

    p = sub.add_parser("simulate", help="Monte-Carlo payoff of the optimal and null policies")
    _add_common(p)
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=60.0)
    p.add_argument("--scheme", choices=("exact", "euler"), default="exact")
    p.add_argument("--max-block", dest="max_block", type=int, default=1024,
                   help="longest exact block in grid steps (1 = plain grid stepping)")
    p.add_argument("--trace", metavar="FILE", help="write fine-grid paths of the optimal policy as CSV")
    p.add_argument("--trace-paths", type=int, default=1)
    p.add_argument("--trace-every", type=int, default=1)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InvalidSpecError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    except (SolverError, ConsistencyError) as exc:
        _err(f"solver failure: {exc}")
        return EXIT_SOLVER
    except SimulationError as exc:
        _err(f"simulation error: {exc}")
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
