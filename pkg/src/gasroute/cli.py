"""Command-line interface.

Subcommands:

* ``solve``         solve one instance (relaxed by default, --exact for the
                    integer problem) and print the plan as JSON
* ``kkt-check``     solve the relaxed problem and verify first-order
                    optimality of the returned plan
* ``no-trade-map``  evaluate a sweep spec and write the map as CSV
* ``compare``       sweep the relaxed, rounded, and exact objectives and
                    write them with the rounding-gap bound as CSV
* ``examples``      print the built-in demonstrations (spot prices,
                    normalized utility, zero-trade checks)

Exit codes: 0 success, 2 bad usage or malformed input, 3 a solve finished
without convergence (outputs are still written).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import no_trade_certificates
from .examples import example1_gm, example1_qm, example2
from .model import InstanceParseError, RoutingInstance, instance_from_dict
from .optimality import verify_kkt
from .solver import (
    CONVERGED,
    SolveOptions,
    SolveResult,
    solve_exact_enumeration,
    solve_relaxed,
)
from .sweeps import (
    MODE_CERTIFICATES,
    SweepAxis,
    SweepParseError,
    SweepSpec,
    run_compare,
    run_sweep,
    sweep_from_dict,
    write_compare_csv,
    write_csv,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed")
    parser.add_argument(
        "--tol",
        type=float,
        default=None,
        help="stationarity tolerance (constraint tolerance is tol/10)",
    )
    parser.add_argument("--restarts", type=int, default=None, help="solver starts")


def _options_from_args(args: argparse.Namespace) -> SolveOptions:
    kwargs: dict = {"seed": args.seed}
    if args.tol is not None:
        kwargs["tol_stationarity"] = args.tol
        kwargs["tol_constraint"] = args.tol / 10.0
    if args.restarts is not None:
        kwargs["restarts"] = args.restarts
    return SolveOptions(**kwargs)


def _load_instance(path: str) -> RoutingInstance:
    with open(path) as handle:
        return instance_from_dict(json.load(handle))


def _result_to_dict(result: SolveResult) -> dict:
    return {
        "status": result.status,
        "objective": result.objective,
        "eta": [float(v) for v in result.plan.eta],
        "x": [[float(v) for v in xs] for xs in result.plan.x],
        "y": [[float(v) for v in ys] for ys in result.plan.y],
        "lambdas": [float(v) for v in result.lambdas],
        "inner_iterations": result.inner_iterations,
    }


def _emit(payload: str, out: str | None) -> None:
    if out is None:
        print(payload)
    else:
        Path(out).write_text(payload + "\n")


def _cmd_solve(args: argparse.Namespace) -> int:
    instance = _load_instance(args.instance)
    options = _options_from_args(args)
    if args.exact:
        result = solve_exact_enumeration(instance, options)
    else:
        result = solve_relaxed(instance, options)
    payload = _result_to_dict(result)
    # The first-order verdict applies to the relaxed problem; an integer
    # optimum need not satisfy the relaxed conditions at its binary point.
    payload["kkt_passed"] = (
        verify_kkt(instance, result.plan).passed if not args.exact else None
    )
    _emit(json.dumps(payload, indent=2), args.out)
    return EXIT_OK if result.status == CONVERGED else EXIT_NOT_CONVERGED


def _cmd_kkt_check(args: argparse.Namespace) -> int:
    instance = _load_instance(args.instance)
    options = _options_from_args(args)
    result = solve_relaxed(instance, options)
    report = verify_kkt(instance, result.plan)
    payload = {
        "solve": _result_to_dict(result),
        "kkt": report.to_dict(),
    }
    if args.out is not None:
        _emit(json.dumps(payload, indent=2), args.out)
    else:
        print(report.to_text())
    return EXIT_OK if result.status == CONVERGED else EXIT_NOT_CONVERGED


def _cmd_no_trade_map(args: argparse.Namespace) -> int:
    with open(args.sweep) as handle:
        spec = sweep_from_dict(json.load(handle))
    options = _options_from_args(args)
    rows = run_sweep(spec, options, threads=args.threads)
    write_csv(spec, rows, args.out)
    bad = sum(1 for row in rows if not row.converged)
    if bad:
        print(f"{bad} of {len(rows)} rows did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    with open(args.sweep) as handle:
        spec = sweep_from_dict(json.load(handle))
    options = _options_from_args(args)
    rows = run_compare(spec, options, threads=args.threads)
    write_compare_csv(spec, rows, args.out)
    bad = sum(1 for row in rows if not row.converged)
    if bad:
        print(f"{bad} of {len(rows)} rows did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _print_price_table() -> None:
    instance = example2(t=1.0)
    print("example2 spot prices (gamma = 0.9):")
    for mk in instance.markets:
        price = ", ".join(f"{p:.8f}" for p in mk.spot_price())
        print(f"  market {mk.id}: ({price})")
    pi = ", ".join(f"{p:.8f}" for p in instance.utility.pi)
    print(f"  utility at t=1: ({pi})")


def _print_normalized_spots() -> None:
    for label, builder in (("example1-gm", example1_gm), ("example1-qm", example1_qm)):
        instance = builder(t=1.0, s=1.0)
        pi = ", ".join(f"{p:.8f}" for p in instance.utility.pi)
        print(f"{label} normalized spot price: ({pi})")


def _zero_trade_demo(options: SolveOptions) -> bool:
    ok = True
    for label, builder in (("example1-gm", example1_gm), ("example1-qm", example1_qm)):
        instance = builder(t=1.0, s=1.0, fee=0.0)
        result = solve_relaxed(instance, options)
        certs = no_trade_certificates(instance)
        print(
            f"{label} at (t, s) = (1, 1), zero gas: relaxed objective "
            f"{result.objective:.3g}, certificate member={certs[0].member}"
        )
        ok = ok and result.status == CONVERGED
    return ok


def _write_example_maps(out_dir: str, grid: int) -> None:
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    for label, template in (("example1-gm", "example1-gm"), ("example1-qm", "example1-qm")):
        spec = SweepSpec(
            template=template,
            axes=(
                SweepAxis("t", 0.0, 2.0, grid),
                SweepAxis("s", 0.0, 2.0, grid),
            ),
            fees=(0.05, 0.2),
            mode=MODE_CERTIFICATES,
        )
        path = directory / f"{label}-map.csv"
        write_csv(spec, run_sweep(spec), path)
        print(f"wrote {path}")
    spec = SweepSpec(
        template="example2",
        axes=(SweepAxis("t", 0.2, 9.0, grid),),
        fees=(0.01,),
        mode=MODE_CERTIFICATES,
    )
    path = directory / "example2-map.csv"
    write_csv(spec, run_sweep(spec), path)
    print(f"wrote {path}")


def _cmd_examples(args: argparse.Namespace) -> int:
    _print_price_table()
    _print_normalized_spots()
    options = _options_from_args(args)
    ok = _zero_trade_demo(options)
    if args.out is not None:
        _write_example_maps(args.out, args.grid)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gasroute",
        description="Gas-aware routing across constant-function markets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one instance")
    solve.add_argument("--instance", required=True, help="instance JSON file")
    solve.add_argument("--exact", action="store_true", help="solve the integer problem")
    solve.add_argument("--out", default=None, help="write JSON here instead of stdout")
    _add_solver_flags(solve)
    solve.set_defaults(func=_cmd_solve)

    kkt = sub.add_parser("kkt-check", help="verify optimality of the relaxed solution")
    kkt.add_argument("--instance", required=True, help="instance JSON file")
    kkt.add_argument("--out", default=None, help="write JSON here instead of text")
    _add_solver_flags(kkt)
    kkt.set_defaults(func=_cmd_kkt_check)

    sweep = sub.add_parser(
        "no-trade-map",
        help="evaluate a sweep and write CSV",
        epilog=(
            "CSV columns: one per axis, fee, member_i and min_gas_i per market, "
            "member_all; full mode adds eta_i per market, objective_relaxed, "
            "objective_integer, no_trade_relaxed, no_trade, converged."
        ),
    )
    sweep.add_argument("--sweep", required=True, help="sweep spec JSON file")
    sweep.add_argument("--out", required=True, help="output CSV path")
    sweep.add_argument("--threads", type=int, default=1, help="worker processes")
    _add_solver_flags(sweep)
    sweep.set_defaults(func=_cmd_no_trade_map)

    compare = sub.add_parser(
        "compare",
        help="sweep relaxed vs rounded vs exact objectives",
        epilog=(
            "CSV columns: one per axis, fee, eta_i per market, objective_relaxed, "
            "objective_rounded, objective_integer, epsilon, sandwich_ok, gap_ok, "
            "no_trade, kkt_passed, converged."
        ),
    )
    compare.add_argument("--sweep", required=True, help="sweep spec JSON file")
    compare.add_argument("--out", required=True, help="output CSV path")
    compare.add_argument("--threads", type=int, default=1, help="worker processes")
    _add_solver_flags(compare)
    compare.set_defaults(func=_cmd_compare)

    examples = sub.add_parser("examples", help="built-in demonstrations")
    examples.add_argument("--out", default=None, help="directory for example maps")
    examples.add_argument("--grid", type=int, default=25, help="map grid size")
    _add_solver_flags(examples)
    examples.set_defaults(func=_cmd_examples)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InstanceParseError, SweepParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
