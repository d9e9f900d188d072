"""Command-line entry point.

Exit status: 0 on success, 1 on validation or parse errors, 2 on solver
failure, 3 on I/O errors. Log verbosity comes from ``GASEQ_LOG``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence

import pandas as pd

from .analytics import market_shares_and_hhi
from .calibration import CalibrationOptions, apply_calibration, calibrate
from .equilibrium import check_equilibrium, solve_model
from .exceptions import GasEqError, ModelFileError, SolverFailedError, ValidationError
from .lcp import SolverOptions, SolveStatus
from .modelfile import load_calibration_data, load_model, load_updates, model_to_dict
from .report import AGGREGATE_COLUMNS, aggregate_discrepancy, read_report, write_report
from .scenarios import build_plan, run_horizon
from .types import DEFAULT_CONSUMPTION_TARGET

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2
EXIT_IO = 3

AGGREGATE_TOL = 1e-9


def configure_logging() -> None:
    level = os.environ.get("GASEQ_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _solver_options(args: argparse.Namespace) -> SolverOptions:
    return SolverOptions(method=args.method)


def cmd_solve(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    solution = solve_model(model, _solver_options(args))
    print(f"model: {model.name}")
    print(f"status: {solution.status.value}")
    if not solution.solved:
        return EXIT_SOLVER

    rows = []
    for node in model.consumer_nodes():
        volume = sum(solution.consumption[(node.id, p.id)] * p.duration for p in model.periods)
        spend = sum(
            solution.price[(node.id, p.id)] * solution.consumption[(node.id, p.id)] * p.duration
            for p in model.periods
        )
        hhi = market_shares_and_hhi(model, solution, node.id).hhi
        rows.append(
            {
                "node": node.id,
                "price": spend / volume if volume > 0.0 else solution.price[(node.id, model.periods[0].id)],
                "consumption": volume / sum(p.duration for p in model.periods),
                "hhi": hhi,
            }
        )
    print(pd.DataFrame(rows).to_string(index=False, float_format=lambda v: f"{v:.3f}"))

    if args.period_detail:
        detail = [
            {
                "node": node.id,
                "period": period.id,
                "price": solution.price[(node.id, period.id)],
                "consumption": solution.consumption[(node.id, period.id)],
            }
            for node in model.consumer_nodes()
            for period in model.periods
        ]
        print()
        print(pd.DataFrame(detail).to_string(index=False, float_format=lambda v: f"{v:.3f}"))

    findings = check_equilibrium(model, solution)
    for finding in findings:
        print(f"warning: {finding}", file=sys.stderr)
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    data = load_calibration_data(args.data)
    opts = CalibrationOptions(
        target=args.target,
        seed=args.seed if args.seed is not None else 0,
        initial_theta="random" if args.seed is not None else "model",
        solver=_solver_options(args),
    )
    result = calibrate(model, data, opts=opts)
    print(result.metrics.to_frame().to_string(float_format=lambda v: f"{v:.6f}"), file=sys.stderr)
    if result.metrics.status is not SolveStatus.SOLVED:
        print(f"error: calibrated model did not solve ({result.metrics.status.value})", file=sys.stderr)
        return EXIT_SOLVER
    if not result.converged:
        print(f"warning: {result.message}", file=sys.stderr)

    text = json.dumps(model_to_dict(apply_calibration(model, result.params)), indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    updates = load_updates(args.updates)
    rows = []
    for update in updates:
        plan = build_plan(model, update)
        for run in plan.runs:
            labels = [plan.update.expansions[i].label() for i in run.expansions]
            rows.append(
                {
                    "year": run.year,
                    "id": run.id,
                    "type": run.type_code,
                    "reference": "-" if run.reference is None else str(run.reference),
                    "expansions": " ".join(labels) if len(labels) == 1 else f"{len(labels)}",
                }
            )
    print(pd.DataFrame(rows).to_string(index=False))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    updates = load_updates(args.updates)
    outcomes = run_horizon(model, updates, _solver_options(args), parallel=args.parallel)
    reports = [report for outcome in outcomes for report in outcome.reports()]
    metadata = {"seed": args.seed} if args.seed is not None else None
    written = write_report(reports, args.out, metadata)
    print(f"wrote {len(written.frame)} rows to {args.out}")

    failed = [r for r in reports if r.summary is None]
    for r in failed:
        print(f"error: run {r.year}/{r.simulation_id} {r.status}", file=sys.stderr)
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    report = read_report(args.results)
    frame = report.frame
    print(frame[["year", "simulation_id", "simulation_type", *AGGREGATE_COLUMNS]].to_string(index=False))
    gap = aggregate_discrepancy(report)
    scale = max(1.0, float(frame[AGGREGATE_COLUMNS].abs().max().max()))
    if gap > AGGREGATE_TOL * scale:
        print(f"error: aggregates differ from the country columns by {gap:.3g}", file=sys.stderr)
        return EXIT_INVALID
    print(f"aggregates re-derived from country columns (max gap {gap:.3g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaseq", description="Spatial gas market equilibrium model")
    parser.add_argument(
        "--method", choices=("auto", "lemke", "newton"), default="auto", help="LCP solver"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve a model and print prices and consumption")
    solve.add_argument("model")
    solve.add_argument("--period-detail", action="store_true", help="print every period")
    solve.set_defaults(handler=cmd_solve)

    cal = sub.add_parser("calibrate", help="calibrate a model to reference data")
    cal.add_argument("model")
    cal.add_argument("data")
    cal.add_argument("--target", type=float, default=DEFAULT_CONSUMPTION_TARGET)
    cal.add_argument("--seed", type=int, default=None, help="start from random market power")
    cal.add_argument("--out", default=None, help="calibrated model file (default: stdout)")
    cal.set_defaults(handler=cmd_calibrate)

    plan = sub.add_parser("plan", help="print the simulation runs of each year")
    plan.add_argument("model")
    plan.add_argument("updates")
    plan.set_defaults(handler=cmd_plan)

    run = sub.add_parser("run", help="run every year and write the report")
    run.add_argument("model")
    run.add_argument("updates")
    run.add_argument("--out", default="report.csv")
    run.add_argument("--parallel", type=int, default=1)
    run.add_argument("--seed", type=int, default=None, help="recorded in the report header")
    run.set_defaults(handler=cmd_run)

    rep = sub.add_parser("report", help="re-derive aggregates of a report file")
    rep.add_argument("results")
    rep.set_defaults(handler=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return int(args.handler(args))
    except (ValidationError, ModelFileError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except SolverFailedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except GasEqError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
