"""
Command-line entry point.

    kinspec [-v] <command> --config <path> [--out <dir>] [--no-cache]

Every command writes its CSV tables and summary.json into the output
directory. Failures map to exit codes: config 2, precondition 3,
divergence 4, tolerance 5. A run whose certificates fail exits with 5
after its artifacts are written.
"""

import argparse
import logging
import sys
from pathlib import Path

from .cache import OperatorCache
from .commands import COMMANDS
from .config import load_config
from .errors import KinspecError, ToleranceError
from .pipeline import CommandContext, write_result
from .utils import thread_count

logger = logging.getLogger(__name__)

DESCRIPTIONS = {
    "kernel-check": "certify the kernel bounds, the nu band and the auxiliary integrals",
    "assemble": "build and cache nu, K and L and certify their structure",
    "spectrum": "report the near-zero cluster of L and the origin dispersion data",
    "branches": "trace the eigenvalue branches, fit tau1 and sigma2, compare with dense eigenvalues",
    "decay": "semigroup invariants and certified decay ratios per frequency",
    "xspace": "whole-space decay synthesized over frequency",
    "solve": "small-data Cauchy problem on the torus",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinspec", description="Linearized Boltzmann spectral toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="<command>")
    for name, text in DESCRIPTIONS.items():
        cmd = sub.add_parser(name, help=text, description=text)
        cmd.add_argument("--config", required=True, type=Path, help="flat key = value config file")
        cmd.add_argument("--out", type=Path, default=None, help="output directory (overrides `out`)")
        cmd.add_argument("--no-cache", action="store_true", help="ignore and do not write the operator cache")
    return parser


def run(command: str, config_path: Path, out: Path | None = None, use_cache: bool = True) -> int:
    """Run one command and write its artifacts.

    Returns:
        Process exit status
    """
    try:
        config = load_config(config_path, command)
        context = CommandContext(
            out_dir=out or Path(config.out),
            cache=OperatorCache(config.cache_dir, enabled=use_cache and config.cache),
            threads=thread_count(),
        )
        result = COMMANDS[command](config, context)
        summary = write_result(command, config, context, result)
        failed = [c.tag for c in result.checks if not c.passed]
        if failed:
            raise ToleranceError(f"{len(failed)} check(s) failed: {', '.join(failed)} (see {summary})")
    except KinspecError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    logger.info("%s passed; summary in %s", command, summary)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command is None:
        parser.print_help()
        return 0
    return run(args.command, args.config, args.out, not args.no_cache)


if __name__ == "__main__":
    sys.exit(main())
