"""
Command-line entry point.

Exit codes: 0 success, 2 input error, 3 collision, 4 timeout,
5 infeasible alpha, 6 bound violation.
"""

import argparse
import asyncio
import logging
import math
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from . import report, scenario as scenario_io
from .batch import DEFAULT_WORKERS, boundcheck, compare_controllers
from .bounds import DoubleIntegratorGains, StateVec, prediction_series
from .controllers import Controller
from .errors import GovernorError
from .planner import export_png
from .simulator import RunStatus, Scenario, TrajectoryLog, run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COLLISION = 3
EXIT_TIMEOUT = 4
EXIT_NO_FEASIBLE_ALPHA = 5
EXIT_BOUND_VIOLATION = 6

EXIT_BY_STATUS = {
    RunStatus.GOAL_REACHED: EXIT_OK,
    RunStatus.COLLISION: EXIT_COLLISION,
    RunStatus.TIMEOUT: EXIT_TIMEOUT,
    RunStatus.NO_FEASIBLE_ALPHA: EXIT_NO_FEASIBLE_ALPHA,
}

# robot released with a sideways push next to a governor at the origin
PREDICTION_GAINS = DoubleIntegratorGains(k=1.0, zeta=2.0 * math.sqrt(2.0))
PREDICTION_STATE = StateVec(pos_err=(-2.0, 0.0), vel=(0.0, 2.0))
PREDICTION_WEIGHTS = (1.0, 4.0)


def _scenario(args: argparse.Namespace) -> Scenario:
    """A scenario file, or the name of a bundled one, with command-line overrides applied."""
    seed = getattr(args, "seed", None)
    source = Path(args.scenario)
    if not source.exists() and args.scenario in scenario_io.bundled_names():
        loaded = scenario_io.bundled(args.scenario, seed)
    else:
        loaded = scenario_io.load(source, seed)
    overrides = {}
    if getattr(args, "dt", None) is not None:
        overrides["dt"] = args.dt
    if getattr(args, "controller", None) is not None:
        overrides["controller"] = Controller(args.controller)
    return loaded.replace(**overrides) if overrides else loaded


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_grid(log: TrajectoryLog, out: Path, suffix: str = "") -> None:
    if log.grid is None:
        return
    (out / f"grid{suffix}.txt").write_text(log.grid.to_text())
    export_png(log.grid, out / f"grid{suffix}.png")


def cmd_run(args: argparse.Namespace) -> int:
    loaded = _scenario(args)
    log = run(loaded)
    out = _outdir(args.out)
    summary = report.format_reports([report.summarize(log)])
    report.write_trajectory_csv(log, out / "trajectory.csv")
    (out / "report.txt").write_text(summary)
    report.write_run_svg(loaded.env, loaded.path, [log], out / "plot.svg")
    _write_grid(log, out)
    sys.stdout.write(summary)
    return EXIT_BY_STATUS[log.status]


def cmd_compare(args: argparse.Namespace) -> int:
    loaded = _scenario(args)
    logs = asyncio.run(compare_controllers(loaded))
    out = _outdir(args.out)
    reports = [report.summarize(log) for log in logs]
    ratio = report.completion_ratio(*reports)
    summary = report.format_reports(reports)
    summary += "completion time ratio sddm/euclid: " + ("-" if ratio is None else f"{ratio:.4f}") + "\n"
    for log in logs:
        report.write_trajectory_csv(log, out / f"trajectory_{log.controller}.csv")
        _write_grid(log, out, f"_{log.controller}")
    (out / "report.txt").write_text(summary)
    report.write_run_svg(loaded.env, loaded.path, logs, out / "plot.svg")
    sys.stdout.write(summary)
    for log in logs:
        if code := EXIT_BY_STATUS[log.status]:
            return code
    return EXIT_OK


def cmd_boundcheck(args: argparse.Namespace) -> int:
    result = asyncio.run(boundcheck(args.count, args.seed, workers=args.workers))
    out = _outdir(args.out)
    report.write_boundcheck_csv([row.as_list() for row in result.rows], out / "boundcheck.csv")
    violations = result.violations
    sys.stdout.write(
        f"cases={len(result.rows)} violations={len(violations)} median_ratio={result.median_ratio:.4f}\n"
    )
    for row in violations:
        sys.stderr.write(
            f"violation case={row.case} k={row.k!r} c1={row.c1!r} c2={row.c2!r} "
            f"oracle={row.oracle!r} eta={row.eta!r} delta={row.delta!r}\n"
        )
    if not result.passed:
        if not violations:
            sys.stderr.write(f"median delta/eta {result.median_ratio:.4f} above gate\n")
        return EXIT_BOUND_VIOLATION
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    c1, c2 = PREDICTION_WEIGHTS
    times = np.linspace(0.0, args.t_end, args.samples)
    samples = prediction_series(PREDICTION_GAINS, PREDICTION_STATE, c1, c2, times)
    out = _outdir(args.out)
    report.write_prediction_csv(samples, out / "prediction.csv")
    report.write_prediction_svg(samples, c1, out / "prediction.svg")
    first = samples[0]
    sys.stdout.write(
        f"t=0 area_euclid={first.area_euclid:.4f} area_directional={first.area_directional:.4f}\n"
    )
    return EXIT_OK


def _positive_float(text: str) -> float:
    value = float(text)
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"{text} is not a positive number")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="governor", description="Directional-metric reference governor")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="simulate one scenario")
    run_parser.add_argument("scenario", help="scenario file or bundled scenario name")
    run_parser.add_argument("--out", required=True, help="output directory")
    run_parser.add_argument("--dt", type=_positive_float, help="override the integration step")
    run_parser.add_argument("--controller", choices=[c.value for c in Controller])
    run_parser.add_argument("--seed", type=int, help="override the scenario seed")
    run_parser.set_defaults(handler=cmd_run)

    compare_parser = commands.add_parser("compare", help="run both controllers on one scenario")
    compare_parser.add_argument("scenario", help="scenario file or bundled scenario name")
    compare_parser.add_argument("--out", required=True, help="output directory")
    compare_parser.add_argument("--dt", type=_positive_float, help="override the integration step")
    compare_parser.add_argument("--seed", type=int, help="override the scenario seed")
    compare_parser.set_defaults(handler=cmd_compare)

    check_parser = commands.add_parser("boundcheck", help="check eta <= delta on random cases")
    check_parser.add_argument("--count", type=_positive_int, default=500)
    check_parser.add_argument("--seed", type=int, default=0)
    check_parser.add_argument("--out", required=True, help="output directory")
    check_parser.add_argument("--workers", type=_positive_int, default=DEFAULT_WORKERS)
    check_parser.set_defaults(handler=cmd_boundcheck)

    predict_parser = commands.add_parser("predict", help="compare Euclidean and directional peak bounds")
    predict_parser.add_argument("--out", required=True, help="output directory")
    predict_parser.add_argument("--t-end", type=_positive_float, default=6.0)
    predict_parser.add_argument("--samples", type=_positive_int, default=25)
    predict_parser.set_defaults(handler=cmd_predict)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except GovernorError as exc:
        sys.stderr.write(f"error: {exc.message}\n")
        return EXIT_INPUT
    except TimeoutError as exc:
        logger.error("job timed out reason=%s", exc)
        return EXIT_TIMEOUT


if __name__ == "__main__":
    sys.exit(main())
