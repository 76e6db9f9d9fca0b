import logging
from pathlib import Path
from typing import Any, Dict

from sptree.schemas.run_config import RunConfig
from sptree.services.decompose_service import decompose_service
from sptree.services.tree_service import tree_service
from sptree.tasks.utils import tree_params, write_json

logger = logging.getLogger(__name__)


def run_tree_info(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    """
    Emit g, alpha, vertex_count and the sparse positions within depth as tree_info.json
    """
    params = tree_params(config.tree)
    tree = tree_service.build_tree(params)
    report = {
        "gamma": params.gamma,
        "depth": params.depth,
        "rule": config.tree.rule,
        "sparse_positions": list(params.positions_within(params.depth)),
        "g": list(tree.g),
        "alpha": list(tree.alpha),
        "vertex_count": tree.vertex_count,
        "block_count": tree.alpha[-1],
        "block_lengths": decompose_service.block_lengths(tree) if tree.alpha[-1] <= 100000 else None,
    }
    write_json(Path(out_dir) / "tree_info.json", report)
    logger.info(f"Tree info: depth={params.depth}, alpha_D={tree.alpha[-1]}, vertex_count={tree.vertex_count}")
    return report
