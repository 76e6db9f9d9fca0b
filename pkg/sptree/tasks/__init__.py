from sptree.tasks.tree_info_task import run_tree_info
from sptree.tasks.verify_task import run_verify
from sptree.tasks.dynamics_task import run_dynamics

__all__ = ["run_tree_info", "run_verify", "run_dynamics"]
