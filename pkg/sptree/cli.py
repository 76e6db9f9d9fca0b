"""
Command-line front-end for the sparse tree spectral lab

Usage:
    python run_sptree.py tree-info --config run.json --out results/
    python run_sptree.py verify --config run.json --seed 7
    python run_sptree.py dynamics --config run.json --workers 4
    python run_sptree.py config-schema

Exit codes: 0 pass, 1 assertion violation, 2 config error, 3 resource limit.
"""
import argparse
import json
import logging
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from sptree.core.config import settings
from sptree.core.database import init_db
from sptree.core.exceptions import ConfigError, EXIT_OK, EXIT_VIOLATION, exit_code_for
from sptree.core.logging import setup_logging
from sptree.schemas.run_config import RunConfig
from sptree.tasks.dynamics_task import run_dynamics
from sptree.tasks.tree_info_task import run_tree_info
from sptree.tasks.utils import create_run_log, load_run_config, update_run_log
from sptree.tasks.verify_task import run_verify

logger = logging.getLogger(__name__)

COMMANDS = ("tree-info", "verify", "dynamics", "config-schema")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sptree",
        description="Spectral and transport experiments on sparse spherically homogeneous trees"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("tree-info", "Branching numbers, block counts and sparse shells as JSON"),
        ("verify", "Run the identity and bound checks and write verify.json"),
        ("dynamics", "Time-averaged profiles, moment curves and exponent estimates"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=str, default=None, help="Run configuration (JSON)")
        cmd.add_argument("--out", type=str, default=None, help="Output directory (overrides output_dir)")
        cmd.add_argument("--workers", type=int, default=settings.DEFAULT_WORKERS,
                         help="Worker threads for T-grid sweeps")
        cmd.add_argument("--seed", type=int, default=None, help="Seed for randomized sweeps (u64)")
        if name == "dynamics":
            cmd.add_argument("--no-cache", action="store_true", help="Do not read or write the sweep cache")

    sub.add_parser("config-schema", help="Print the RunConfig JSON schema")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Load the run config and apply the command-line overrides"""
    try:
        config = load_run_config(args.config)
        updates = {}
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.out is not None:
            updates["output_dir"] = args.out
        if updates:
            config = RunConfig.model_validate({**config.model_dump(), **updates})
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {str(e)}")
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    return config


def execute(command: str, config: RunConfig, args: argparse.Namespace) -> int:
    out_dir = Path(config.output_dir)
    if command == "tree-info":
        run_tree_info(config, out_dir)
        return EXIT_OK
    if command == "verify":
        report = run_verify(config, out_dir)
        return EXIT_OK if report.passed else EXIT_VIOLATION
    summary = run_dynamics(config, out_dir, workers=args.workers, use_cache=not args.no_cache)
    return EXIT_OK if summary.get("status") == "complete" else EXIT_VIOLATION


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "config-schema":
        print(json.dumps(RunConfig.model_json_schema(), indent=2, sort_keys=True))
        return EXIT_OK

    setup_logging()
    run_log_id = None
    try:
        config = resolve_config(args)
        if settings.RUN_LEDGER_ENABLED:
            try:
                init_db()
            except Exception as e:
                logger.error(f"Error initializing run ledger: {str(e)}")
        run_log_id = create_run_log(args.command, config)

        logger.info(f"Running {args.command} (operator={config.operator}, seed={config.seed})")
        code = execute(args.command, config, args)
        update_run_log(
            run_log_id,
            status="completed" if code == EXIT_OK else "failed",
            result=json.dumps({"exit_code": code, "output_dir": config.output_dir}),
            is_successful=code == EXIT_OK,
            exit_code=code
        )
        return code
    except ValidationError as e:
        logger.error(f"Invalid configuration: {str(e)}")
        message, code = str(e), exit_code_for(e)
    except Exception as e:
        logger.error(f"Error running {args.command}: {str(e)}")
        message, code = str(e), exit_code_for(e)
    update_run_log(run_log_id, status="failed", result=message, is_successful=False, exit_code=code)
    return code
