"""``experiment`` subcommands: thin wrappers that run an analysis and write its report."""
from __future__ import annotations

import math
import sys

from fastrpe.cli import config
from fastrpe.cli.reports import approx_to_csv, tail_to_csv, to_json, write_report
from fastrpe.core.analysis import (
    approx_error_experiment, rpe_expressiveness_demo, sample_complexity_experiment, variance_validation,
)
from fastrpe.core.tensor import RngState
from fastrpe.shared.errors import ShapeError
from fastrpe.shared.protocol import (
    EXIT_OK, EXPERIMENT_APPROX, EXPERIMENT_COMPLEXITY, EXPERIMENT_RANK, EXPERIMENT_VARIANCE,
)
from fastrpe.shared.utils import log, now_s

# unit pair with x . y = -1/2, so |x + y| = 1
DEFAULT_VARIANCE_X = (1.0, 0.0)
DEFAULT_VARIANCE_Y = (-0.5, math.sqrt(3.0) / 2.0)


def _wants_csv(args) -> bool:
    if args.json:
        return False
    return not args.out or str(args.out).endswith(".csv")


def emit(args, text: str) -> None:
    """Report text to ``--out`` when given, standard output otherwise."""
    out = config.resolve_out(args.out)
    if out is None:
        sys.stdout.write(text)
    else:
        write_report(out, text)


def run_approx(args) -> str:
    report = approx_error_experiment(args.d, args.keys, args.R, args.m, args.trials, RngState(args.seed), args.kind)
    for cell in report.grid:
        log("EXPERIMENT", f"R={cell.R:g} m={cell.m} mean_l1={cell.mean_l1:.4f} se={cell.standard_error:.4f}")
    return approx_to_csv(report) if _wants_csv(args) else to_json(report)


def run_variance(args) -> str:
    if len(args.x) != len(args.y):
        raise ShapeError(f"--x and --y differ in dimension: {len(args.x)} vs {len(args.y)}")
    result = variance_validation(args.x, args.y, args.m, args.samples, RngState(args.seed))
    log("EXPERIMENT", f"empirical={result.empirical:.6g} closed_form={result.closed_form:.6g} "
                      f"rel_err={result.rel_err:.4f}")
    return to_json(result)


def run_complexity(args) -> str:
    report = sample_complexity_experiment(args.n, args.R, args.epsilon, args.delta, args.m, args.trials,
                                          RngState(args.seed), d=args.d, kind=args.kind)
    log("EXPERIMENT", f"m_bound={report.m_bound} for n={report.n} R={report.R:g} "
                      f"eps={report.epsilon:g} delta={report.delta:g}")
    for cell in report.empirical_tail:
        log("EXPERIMENT", f"m={cell.m} failure_rate={cell.failure_rate:.3f} 4eps={cell.failure_rate_4eps:.3f}")
    return tail_to_csv(report) if _wants_csv(args) else to_json(report)


def run_rank(args) -> str:
    result = rpe_expressiveness_demo(args.n, args.d, RngState(args.seed))
    log("EXPERIMENT", f"rank_B={result.rank_B} bound={result.bound} exceeds={result.exceeds}")
    return to_json(result)


RUNNERS = {
    EXPERIMENT_APPROX: run_approx,
    EXPERIMENT_VARIANCE: run_variance,
    EXPERIMENT_COMPLEXITY: run_complexity,
    EXPERIMENT_RANK: run_rank,
}


def cmd_experiment(args) -> int:
    start = now_s()
    text = RUNNERS[args.experiment](args)
    log("EXPERIMENT", f"{args.experiment} done in {now_s() - start:.2f}s")
    emit(args, text)
    return EXIT_OK
