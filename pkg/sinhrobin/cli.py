"""Command-line interface for sinhrobin."""

import argparse
import logging
import sys
from typing import List

from .core.config import RunConfig
from .core.errors import ConfigError, SinhRobinError, exit_code_for
from .core.processor import SUBCOMMANDS, SinhRobinProcessor

_HELP = {
    "theta0": "Locate the minimizer of the boundary-layer profile h",
    "green-table": "Tabulate the Robin Green function and check its symmetry",
    "robin-profile": "Compare the numerical Robin function with its boundary-layer expansion",
    "hamiltonian-min": "Minimize the signed Hamiltonian over the feasible set",
    "ansatz-check": "Measure the weighted residual of the multi-bubble ansatz",
    "solve": "Newton solve seeded by the ansatz",
    "sweep": "Solve over every (eps, lambda) pair and summarize",
}


def setup_logging(debug: bool = False):
    """Setup logging configuration."""
    level = logging.DEBUG if debug else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s'
    )


def create_parser() -> argparse.ArgumentParser:
    """Create CLI argument parser."""
    parser = argparse.ArgumentParser(
        description="sinhrobin - concentrating solutions of the sinh-Poisson equation with Robin boundary",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  sinhrobin theta0 --config configs/theta0.env                 # Profile minimizer
  sinhrobin hamiltonian-min --config configs/disk_axis.env     # Two-point minimizer on the disk
  sinhrobin sweep --config configs/sweep.env --out runs/sweep  # eps x lambda sweep
        """
    )

    parser.add_argument("--debug", action="store_true",
                        help="Enable debug logging")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name, help=_HELP[name])
        sub.add_argument("--config", required=True,
                         help="KEY=VALUE run configuration file")
        sub.add_argument("--out", default=None,
                         help="Output directory (overrides OUTPUT_DIR)")
        sub.add_argument("--seed", type=int, default=None,
                         help="Seed of the optimizer start jitter (overrides SEED)")
        sub.add_argument("--workers", type=int, default=None,
                         help="Worker threads (overrides WORKERS)")

    return parser


def handle_run_command(args: argparse.Namespace) -> int:
    """Handle one computation subcommand."""
    try:
        config = RunConfig.from_file(args.config)

        # Apply command-line overrides
        if args.out is not None:
            config.output_dir = args.out
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(f"seed must be non-negative, got {args.seed}", field="SEED")
            config.seed = args.seed
        if args.workers is not None:
            config.workers = max(1, args.workers)
    except SinhRobinError as e:
        print(f"❌ Configuration error: {e}")
        return exit_code_for(e)

    try:
        processor = SinhRobinProcessor(config)
        results = processor.run(args.command)
    except Exception as e:
        logging.error(f"Command failed: {e}")
        return 1

    if results["success"]:
        print(f"✅ {args.command} completed successfully")
    elif "error" in results:
        print(f"❌ {args.command} failed: {results['error']}")
    else:
        print(f"⚠️  {args.command} finished with non-converged or inconsistent results")
    print(f"🔑 Config hash: {config.config_hash()[:16]}")
    print(f"⏱️  Processing time: {results['processing_time']}")
    if results["files_created"]:
        print(f"📂 Files created:")
        for file in results["files_created"]:
            print(f"   • {file}")
    return results["exit_code"]


def main(argv: List[str] = None) -> int:
    """Main CLI entry point."""
    parser = create_parser()
    args = parser.parse_args(argv)

    # Setup logging
    setup_logging(args.debug)

    # Handle commands
    if args.command in SUBCOMMANDS:
        return handle_run_command(args)
    else:
        parser.print_help()
        return 1


if __name__ == "__main__":
    sys.exit(main())
