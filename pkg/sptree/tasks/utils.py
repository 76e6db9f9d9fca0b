from datetime import datetime
import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Tuple

import numpy as np

from sptree.core.config import settings
from sptree.core.database import SessionLocal
from sptree.core.exceptions import ConfigError
from sptree.models.run_log import RunLog
from sptree.schemas.jacobi import JacobiCoeffs
from sptree.schemas.run_config import RunConfig, TreeConfig
from sptree.schemas.tree import TreeParams, ShTree, tower_positions
from sptree.services.decompose_service import decompose_service
from sptree.services.hsfc_service import hsfc_service
from sptree.services.jacobi_service import jacobi_service
from sptree.services.tree_service import tree_service, geometric_positions

logger = logging.getLogger(__name__)


def config_hash(config: RunConfig) -> str:
    return hashlib.blake2b(config.model_dump_json().encode(), digest_size=8).hexdigest()


def create_run_log(command: str, config: Optional[RunConfig] = None) -> Optional[int]:
    """
    Create a run ledger entry with status 'started'
    """
    if not settings.RUN_LEDGER_ENABLED:
        return None
    try:
        with SessionLocal() as db:
            run_log = RunLog(
                command=command,
                status="started",
                started_at=datetime.now(),
                config_hash=config_hash(config) if config is not None else None
            )
            db.add(run_log)
            db.commit()
            db.refresh(run_log)
            return run_log.id
    except Exception as e:
        logger.error(f"Error creating run log for {command}: {str(e)}")
        return None


def update_run_log(run_log_id: Optional[int], status: str, result: str, is_successful: bool,
                   exit_code: Optional[int] = None):
    """
    Update run log with completion status
    """
    if run_log_id is None:
        return
    try:
        with SessionLocal() as db:
            run_log = db.query(RunLog).filter(RunLog.id == run_log_id).first()
            if run_log:
                run_log.status = status
                run_log.completed_at = datetime.now()
                run_log.result = result
                run_log.is_successful = is_successful
                run_log.exit_code = exit_code
                if not is_successful:
                    run_log.error_message = result
                db.commit()
    except Exception as e:
        logger.error(f"Error updating run log {run_log_id}: {str(e)}")


def _json_default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _finite(value: Any):
    """Replace non-finite floats by strings so the JSON stays standard"""
    if isinstance(value, float) and not np.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def write_json(path: Path, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_finite(json.loads(json.dumps(data, default=_json_default))), fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info(f"Wrote {path}")
    return path


def format_float(value: float) -> str:
    return "%.17g" % value


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """CSV with a header row; floats as %.17g"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    logger.info(f"Wrote {path}")
    return path


def load_run_config(path: Optional[str]) -> RunConfig:
    """RunConfig from a JSON file, or the defaults when no path is given"""
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return RunConfig.model_validate_json(fh.read())


def tree_params(tree: TreeConfig) -> TreeParams:
    if tree.rule == "tower":
        positions = tower_positions(tree.depth)
    elif tree.rule == "geometric":
        positions = geometric_positions(tree.geometric_first, tree.geometric_ratio, tree.depth)
    else:
        positions = tuple(tree.sparse_positions)
    return TreeParams(gamma=tree.gamma, depth=tree.depth, sparse_positions=positions)


def build_operator(config: RunConfig) -> Tuple[JacobiCoeffs, Optional[TreeParams], Optional[ShTree]]:
    """The block the run works on, with its tree when there is one"""
    if config.operator == "free":
        return jacobi_service.free_coeffs(config.length, k=config.k), None, None
    if config.operator == "diagonal":
        return jacobi_service.diagonal_coeffs(np.arange(1, config.length + 1, dtype=float)), None, None

    params = tree_params(config.tree)
    tree = tree_service.build_tree(params)
    coeffs = decompose_service.jacobi_coeffs(tree, config.k, config.length)
    return coeffs, params, tree


def build_state(config: RunConfig, coeffs: JacobiCoeffs) -> np.ndarray:
    """psi = delta_site, or f(H) delta_site for a first or second kind f"""
    state = config.state
    if state.site > coeffs.N:
        raise ConfigError(f"state site {state.site} outside the block of length {coeffs.N}")
    if state.kind == "delta1":
        psi = np.zeros(coeffs.N)
        psi[state.site - 1] = 1.0
        return psi
    if state.kind == "first_kind":
        f = hsfc_service.make_test_function("first", state.nu, center=state.center)
    else:
        f = hsfc_service.make_test_function("second", state.nu, E0=state.E0, c=state.c)
    return hsfc_service.state_vector(f, coeffs, state.site)


def time_grid(config: RunConfig) -> np.ndarray:
    grid = config.time_grid
    if grid.geometric:
        return np.geomspace(grid.t_min, grid.t_max, grid.points)
    return np.linspace(grid.t_min, grid.t_max, grid.points)
