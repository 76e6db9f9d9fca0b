#!/usr/bin/env python3
"""
Runner for the sparse tree spectral lab commands

Usage:
    python run_sptree.py tree-info --config run.json --out results/
    python run_sptree.py verify --config run.json
    python run_sptree.py dynamics --config run.json --workers 4
    python run_sptree.py config-schema

The exit code of the command is passed through (0 pass, 1 violation,
2 config error, 3 resource limit, 130 interrupted).
"""

import sys
import logging
from datetime import datetime

logger = logging.getLogger(__name__)


def print_banner(command: str):
    """Print a banner for the run"""
    print("=" * 60)
    print(f"🌳 Sparse Tree Spectral Lab: {command}")
    print("=" * 60)
    print(f"Started at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print()


def print_footer(code: int, duration: float):
    """Print completion banner"""
    print()
    print("=" * 60)
    if code == 0:
        print("✅ Command completed successfully!")
    else:
        print(f"❌ Command failed with exit code {code}")
    print(f"Duration: {duration:.2f} seconds")
    print(f"Finished at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print("=" * 60)


def main(argv) -> int:
    # schema output stays machine-readable
    if argv[:1] == ["config-schema"] or not argv or argv[0].startswith("-"):
        from sptree.cli import main as cli_main
        return cli_main(argv)

    start_time = datetime.now()
    code = 1
    try:
        print_banner(argv[0])
        from sptree.cli import main as cli_main
        code = cli_main(argv)
    except ImportError as e:
        logger.error(f"Failed to import the lab package: {e}")
        logger.error("Make sure you're running from the project root directory")
        logger.error("and that the virtual environment is activated")
    finally:
        duration = (datetime.now() - start_time).total_seconds()
        print_footer(code, duration)
    return code


if __name__ == "__main__":
    try:
        sys.exit(main(sys.argv[1:]))
    except KeyboardInterrupt:
        print("\n🛑 Run interrupted by user")
        sys.exit(130)  # Standard exit code for Ctrl+C
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        sys.exit(1)
