import argparse
import csv
import logging
import sys
from typing import List, Optional

import numpy as np

import config
from errors import (CausalityError, DelayNormError, ModelError, PoleProximityError,
                    StabilityViolationError, SystemFileError)
from extrema import ExtremaOptions, run_extrema
from model import nullspace_bases
from strongnorm import GridOptions, NormOptions, strong_hinf_norm
from system_files import ddae_document, dumps, extrema_document, load_system, norm_document
from transfer import eval_Ga, eval_transfer

# Configure logging; standard output is reserved for results
logging.basicConfig(
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    level=config.LOG_LEVEL,
    stream=sys.stderr,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CAUSALITY = 2
EXIT_STABILITY = 3
EXIT_INPUT = 4


class UsageError(DelayNormError):
    """Invalid command-line arguments"""


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that reports usage errors with the input error exit code"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _add_numerical_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("file", help="System description (JSON)")
    parser.add_argument("--N", type=int, default=config.DEFAULT_N, help="Chebyshev intervals of the discretization")
    parser.add_argument("--axis-tol", type=float, default=config.AXIS_TOL,
                        help="Relative distance to the imaginary axis accepted for predicted frequencies")
    parser.add_argument("--corrector-tol", type=float, default=config.CORRECTOR_TOL,
                        help="Gauss-Newton residual tolerance factor")
    parser.add_argument("--rank-tol", type=float, default=config.RANK_TOL, help="Rank threshold for E")
    parser.add_argument("--max-iter", type=int, default=config.MAX_ITERATIONS, help="Gauss-Newton iterations")
    parser.add_argument("--include-unconverged", action="store_true",
                        help="Also list candidates whose correction did not converge")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="delaynorm", description="Strong H-infinity norms of time-delay systems")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    norm = commands.add_parser("norm", help="Strong H-infinity norm")
    _add_numerical_flags(norm)
    norm.add_argument("--grid-density", type=int, default=None, help="Points per active delay angle")
    norm.add_argument("--allow-high-dimension", action="store_true",
                      help=f"Grid more than {config.MAX_GRID_DIMENSION} active delays (needs --grid-density)")
    norm.add_argument("--asymptotic-override", type=float, default=None,
                      help="Use this value as the asymptotic norm")
    norm.set_defaults(handler=cmd_norm)

    extrema = commands.add_parser("extrema", help="All extrema of |G(j omega)|")
    _add_numerical_flags(extrema)
    extrema.set_defaults(handler=cmd_extrema)

    bode = commands.add_parser("bode", help="Magnitude samples as CSV")
    bode.add_argument("file", help="System description (JSON)")
    bode.add_argument("--wmin", type=float, required=True)
    bode.add_argument("--wmax", type=float, required=True)
    bode.add_argument("--points", type=int, required=True)
    bode.add_argument("--log", action="store_true", help="Logarithmic frequency spacing")
    bode.add_argument("--asymptotic", action="store_true", help="Add a |G_a(j omega)| column")
    bode.add_argument("--rank-tol", type=float, default=config.RANK_TOL, help="Rank threshold for E")
    bode.set_defaults(handler=cmd_bode)

    convert = commands.add_parser("convert", help="Rewrite a system file in DDAE form")
    convert.add_argument("file", help="System description (JSON)")
    convert.set_defaults(handler=cmd_convert)
    return parser


def options_from_args(args: argparse.Namespace) -> NormOptions:
    """Collect the numerical flags into NormOptions"""
    if args.N < 1:
        raise UsageError(f"--N must be positive, got {args.N}")
    extrema = ExtremaOptions(
        N=args.N,
        axis_tol=args.axis_tol,
        corrector_tol=args.corrector_tol,
        max_iter=args.max_iter,
        rank_tol=args.rank_tol,
    )
    grid = GridOptions(
        density=getattr(args, "grid_density", None),
        allow_high_dimension=getattr(args, "allow_high_dimension", False),
    )
    return NormOptions(extrema=extrema, grid=grid,
                       asymptotic_override=getattr(args, "asymptotic_override", None))


def cmd_norm(args: argparse.Namespace) -> int:
    opts = options_from_args(args)
    system = load_system(args.file)
    result = strong_hinf_norm(system, opts)
    sys.stdout.write(dumps(norm_document(result, opts, args.include_unconverged)))
    return EXIT_OK


def cmd_extrema(args: argparse.Namespace) -> int:
    opts = options_from_args(args)
    system = load_system(args.file)
    report = run_extrema(system, opts.extrema)
    logger.info(f"Descriptor order {report.order} (nominal {report.nominal_order}), "
                f"Delta pencil size {report.delta_size}")
    sys.stdout.write(dumps(extrema_document(report.extrema, report.predicted, opts, args.include_unconverged)))
    return EXIT_OK


def cmd_bode(args: argparse.Namespace) -> int:
    if args.points < 2:
        raise UsageError(f"--points must be at least 2, got {args.points}")
    if not 0 <= args.wmin < args.wmax:
        raise UsageError(f"need 0 <= wmin < wmax, got {args.wmin} and {args.wmax}")
    if args.log and args.wmin <= 0:
        raise UsageError("--log needs wmin > 0")

    system = load_system(args.file)
    bases = nullspace_bases(system, args.rank_tol) if args.asymptotic else None
    if args.log:
        omegas = np.geomspace(args.wmin, args.wmax, args.points)
    else:
        omegas = np.linspace(args.wmin, args.wmax, args.points)

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["omega", "magnitude"] + (["asymptotic"] if args.asymptotic else []))
    for omega in omegas:
        s = 1j * float(omega)
        try:
            magnitude = abs(eval_transfer(system, s))
        except PoleProximityError as e:
            logger.warning(f"Pole hit in the frequency sweep: {e}")
            magnitude = float("nan")
        row = [float(omega), float(magnitude)]
        if args.asymptotic:
            try:
                row.append(float(abs(eval_Ga(system, bases, s))))
            except StabilityViolationError as e:
                logger.warning(f"Asymptotic transfer function undefined at omega = {omega}: {e}")
                row.append(float("nan"))
        writer.writerow(row)
    return EXIT_OK


def cmd_convert(args: argparse.Namespace) -> int:
    system = load_system(args.file)
    sys.stdout.write(dumps(ddae_document(system)))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code"""
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CausalityError as e:
        logger.error(f"Causality check failed: {e}")
        return EXIT_CAUSALITY
    except StabilityViolationError as e:
        logger.error(f"Stability violated: {e}")
        return EXIT_STABILITY
    except (SystemFileError, ModelError, UsageError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_INPUT
    except DelayNormError as e:
        logger.error(f"Computation failed: {e}", exc_info=True)
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
