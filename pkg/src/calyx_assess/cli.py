from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from calyx_assess import __version__
from calyx_assess.config import AssessConfig
from calyx_assess.constants import (
    DEFAULT_CV_FOLDS,
    DEFAULT_CV_REPEATS,
    DEFAULT_ICP_CONVERGENCE_DELTA_MM,
    DEFAULT_ICP_CORRESPONDENCE_CUTOFF_MM,
    DEFAULT_ICP_MAX_ITERATIONS,
    DEFAULT_RNG_SEED,
)
from calyx_assess.exceptions import CalyxAssessError, ConfigError
from calyx_assess.registration import IcpParams
from calyx_assess.runner import run_assess, run_crossval, run_localize, run_metrics, run_register, run_simulate
from calyx_assess.utils import add_error_note

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calyx-assess",
        description="Localize endoscope videos against a reference model and assess which calyces were visited. "
        "All distances are in mm, times in seconds and angles in degrees.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO (default), -vv for DEBUG")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Only log warnings and errors")
    parser.add_argument(
        "--progress",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="Show progress bars (default: when stderr is a terminal)",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="Generate a synthetic phantom, reference model and query video")
    p.add_argument("--spec", type=Path, required=True, help="Simulator spec (TOML)")
    p.add_argument("--out", type=Path, required=True, help="Output directory")

    p = sub.add_parser("register", help="Register a reconstruction point cloud to a CT mesh with ICP")
    p.add_argument("--source", type=Path, required=True, help="Reconstruction point cloud (PLY)")
    p.add_argument("--target", type=Path, required=True, help="CT mesh or point cloud (PLY)")
    init = p.add_mutually_exclusive_group(required=True)
    init.add_argument("--init", type=Path, help="Initial transform (JSON with rotation and translation)")
    init.add_argument("--fiducials", type=Path, help="Fiducial pairs (CSV) to derive the initial transform from")
    p.add_argument("--out", type=Path, required=True, help="Output registration document (JSON)")
    p.add_argument("--max-iterations", type=int, default=DEFAULT_ICP_MAX_ITERATIONS)
    p.add_argument("--cutoff-mm", type=float, default=DEFAULT_ICP_CORRESPONDENCE_CUTOFF_MM)
    p.add_argument("--convergence-delta-mm", type=float, default=DEFAULT_ICP_CONVERGENCE_DELTA_MM)

    for name, help_text in (
        ("localize", "Localize a query video and write its trajectory"),
        ("assess", "Localize a query video and classify every calyx as visited or missed"),
        ("metrics", "Evaluate the reference reconstruction against the CT mesh"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, required=True, help="Assessment config (TOML)")

    p = sub.add_parser("crossval", help="Cross-validate the visitation threshold on annotated videos")
    p.add_argument("--videos", type=Path, required=True, help="Annotated videos (JSON)")
    p.add_argument("--out", type=Path, required=True, help="Output cross-validation document (JSON)")
    p.add_argument("--k", type=int, default=DEFAULT_CV_FOLDS, help="Number of folds")
    p.add_argument("--repeats", type=int, default=DEFAULT_CV_REPEATS, help="Number of repeats")
    p.add_argument("--seed", type=int, default=DEFAULT_RNG_SEED, help="Shuffling seed")
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    if args.quiet:
        level = logging.WARNING
    elif args.verbose >= 2:
        level = logging.DEBUG
    else:
        level = logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _run(args: argparse.Namespace) -> None:
    progress = sys.stderr.isatty() if args.progress is None else args.progress
    if args.command == "simulate":
        outputs = run_simulate(args.spec, args.out)
        print(outputs.config_path)
    elif args.command == "register":
        try:
            params = IcpParams(
                max_iterations=args.max_iterations,
                correspondence_cutoff_mm=args.cutoff_mm,
                convergence_delta_mm=args.convergence_delta_mm,
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        result = run_register(
            args.source, args.target, args.out, init=args.init, fiducials=args.fiducials, params=params
        )
        print(f"mean residual {result.mean_residual_mm:.4f} mm after {result.iterations_used} iteration(s)")
    elif args.command == "localize":
        run_localize(AssessConfig.from_file(args.config), progress=progress)
    elif args.command == "assess":
        report = run_assess(AssessConfig.from_file(args.config), progress=progress)
        for c in report.calyces:
            print(f"calyx {c.calyx_id} ({c.name}): {c.classification} (score {c.score:.3f})")
    elif args.command == "metrics":
        metrics = run_metrics(AssessConfig.from_file(args.config))
        print(f"chamfer {metrics.chamfer.mean:.3f} +- {metrics.chamfer.std:.3f} mm")
        print(f"coverage {metrics.coverage_percent:.1f} %")
    elif args.command == "crossval":
        result = run_crossval(args.videos, args.out, k=args.k, repeats=args.repeats, seed=args.seed)
        print(f"accuracy {result.mean_accuracy:.3f}, threshold {result.mean_threshold:.3f}")


def format_error(e: BaseException) -> str:
    """Render an error as 'error: <Name>: <message>' followed by its notes, one per line"""
    lines = [f"error: {type(e).__name__}: {e}"]
    lines += [f"  {note}" for note in getattr(e, "__notes__", ())]
    return "\n".join(lines)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        _run(args)
    except (CalyxAssessError, OSError, ValueError) as e:
        add_error_note(e, f"While running the {args.command!r} subcommand")
        logger.debug("Traceback", exc_info=e)
        print(format_error(e), file=sys.stderr)
        return EXIT_USAGE if isinstance(e, ConfigError) else EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
