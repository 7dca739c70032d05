#!/usr/bin/env python3
"""
sinhrobin CLI entry point.

Usage: uv run sinhrobin_cli.py <subcommand> --config <path> [--out DIR] [--seed N]
"""

import sys
from sinhrobin.cli import main

if __name__ == "__main__":
    sys.exit(main())
