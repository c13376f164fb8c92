import argparse

from fastrpe.cli import config
from fastrpe.cli.bench import DEFAULT_D, DEFAULT_MS, DEFAULT_NS, DEFAULT_VARIANTS, cmd_bench
from fastrpe.cli.experiments import DEFAULT_VARIANCE_X, DEFAULT_VARIANCE_Y, cmd_experiment
from fastrpe.cli.selftest import cmd_selftest
from fastrpe.core.features import FeatureKind
from fastrpe.shared import utils
from fastrpe.shared.errors import FastRpeError
from fastrpe.shared.protocol import (
    EXIT_CHECK_FAILED, EXIT_USAGE, EXPERIMENT_APPROX, EXPERIMENT_COMPLEXITY, EXPERIMENT_RANK, EXPERIMENT_VARIANCE,
    VARIANTS,
)
from fastrpe.shared.utils import log
from fastrpe.shared.version import VERSION

RANDOMIZED_KINDS = [k.value for k in FeatureKind if k.randomized]


def _list_of(cast, name: str):
    def parse(text: str):
        try:
            values = [cast(part) for part in text.split(",") if part.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list of {name}, got {text!r}")
        if not values:
            raise argparse.ArgumentTypeError(f"empty {name} list")
        return values
    return parse


int_list = _list_of(int, "integers")
float_list = _list_of(float, "numbers")
str_list = _list_of(str.strip, "names")


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=config.DEFAULT_SEED, help="root seed (FASTRPE_SEED)")
    common.add_argument("--out", default=None, help="report path, relative to FASTRPE_OUT_DIR")
    common.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    common.add_argument("--quiet", action="store_true", help="no status lines on stderr")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="fastrpe", description="FFT-accelerated RPE kernelized attention")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", parents=[common], help="forward-pass timing grid")
    bench.add_argument("--variant", type=str_list, default=list(DEFAULT_VARIANTS),
                       help=f"comma list from {', '.join(VARIANTS)}")
    bench.add_argument("--n", type=int_list, default=list(DEFAULT_NS))
    bench.add_argument("--m", type=int_list, default=list(DEFAULT_MS))
    bench.add_argument("--d", type=int, default=DEFAULT_D)
    bench.add_argument("--repeats", type=int, default=5)
    bench.add_argument("--warmup", type=int, default=1)
    bench.add_argument("--float32", action="store_true", help="time 32-bit inputs")
    bench.add_argument("--max-quadratic-n", type=int, default=DEFAULT_NS[-1],
                       help="skip quadratic variants above this length")
    bench.set_defaults(handler=cmd_bench)

    selftest = sub.add_parser("selftest", parents=[common], help="oracle-equivalence suite")
    selftest.add_argument("--perturb-fft", action="store_true", help="flip one twiddle sign per FFT stage")
    selftest.set_defaults(handler=cmd_selftest)

    experiment = sub.add_parser("experiment", help="numerical studies")
    studies = experiment.add_subparsers(dest="experiment", required=True)

    approx = studies.add_parser(EXPERIMENT_APPROX, parents=[common], help="attention L1 error over (R, m)")
    approx.add_argument("--d", type=int, default=64)
    approx.add_argument("--keys", type=int, default=1024)
    approx.add_argument("--R", type=float_list, default=[1.0, 2.0, 4.0, 8.0, 16.0])
    approx.add_argument("--m", type=int_list, default=[4, 16, 64, 256, 1024])
    approx.add_argument("--trials", type=int, default=100)
    approx.add_argument("--kind", choices=RANDOMIZED_KINDS, default=FeatureKind.PRF.value)

    variance = studies.add_parser(EXPERIMENT_VARIANCE, parents=[common], help="PRF variance vs closed form")
    variance.add_argument("--x", type=float_list, default=list(DEFAULT_VARIANCE_X))
    variance.add_argument("--y", type=float_list, default=list(DEFAULT_VARIANCE_Y))
    variance.add_argument("--m", type=int, default=1)
    variance.add_argument("--samples", type=int, default=1_000_000)

    complexity = studies.add_parser(EXPERIMENT_COMPLEXITY, parents=[common], help="feature-count bound and tail")
    complexity.add_argument("--n", type=int, default=16)
    complexity.add_argument("--R", type=float, default=1.0)
    complexity.add_argument("--epsilon", type=float, default=0.5)
    complexity.add_argument("--delta", type=float, default=0.1)
    complexity.add_argument("--m", type=int_list, default=[4, 16, 64, 256])
    complexity.add_argument("--trials", type=int, default=200)
    complexity.add_argument("--d", type=int, default=16)
    complexity.add_argument("--kind", choices=RANDOMIZED_KINDS, default=FeatureKind.PRF.value)

    rank = studies.add_parser(EXPERIMENT_RANK, parents=[common], help="rank of a random RPE logit matrix")
    rank.add_argument("--n", type=int, default=16)
    rank.add_argument("--d", type=int, default=4)

    experiment.set_defaults(handler=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    utils.QUIET = args.quiet
    log("CONFIG", f"fastrpe {VERSION} command={args.command} seed={args.seed} out_dir={config.OUT_DIR} "
                  f"threads={config.THREADS or 'default'}")
    try:
        return args.handler(args)
    except FastRpeError as e:
        log("WARN", f"{type(e).__name__}: {e}")
        return EXIT_USAGE
    except OSError as e:
        log("WARN", str(e))
        return EXIT_CHECK_FAILED
