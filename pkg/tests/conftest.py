import pytest
import tempfile
import os
import numpy as np
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from sptree.core.config import settings
from sptree.core.database import Base
from sptree.models.run_log import RunLog  # noqa: F401
from sptree.schemas.jacobi import JacobiCoeffs
from sptree.schemas.tree import TreeParams
from sptree.services.decompose_service import decompose_service
from sptree.services.jacobi_service import jacobi_service
from sptree.services.tree_service import tree_service


@pytest.fixture(scope="function")
def test_db():
    """Create a temporary SQLite run ledger for testing"""
    # Create temporary database file
    db_fd, db_path = tempfile.mkstemp(suffix=".db")

    engine = create_engine(
        f"sqlite:///{db_path}",
        connect_args={"check_same_thread": False}
    )
    Base.metadata.create_all(bind=engine)
    TestSessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

    # Override the ledger's SessionLocal
    import sptree.core.database
    original_session = sptree.core.database.SessionLocal
    sptree.core.database.SessionLocal = TestSessionLocal

    # Also override in the task helpers
    import sptree.tasks.utils
    sptree.tasks.utils.SessionLocal = TestSessionLocal

    yield TestSessionLocal

    # Cleanup
    sptree.core.database.SessionLocal = original_session
    sptree.tasks.utils.SessionLocal = original_session

    engine.dispose()
    os.close(db_fd)
    os.unlink(db_path)


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    """Point the sweep cache at a temporary directory"""
    path = tmp_path / "cache"
    monkeypatch.setenv("SPTREE_CACHE_DIR", str(path))
    return path


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "out"


@pytest.fixture
def log_dir(tmp_path, monkeypatch):
    """Keep CLI log files out of the working tree"""
    monkeypatch.setattr(settings, "LOG_DIR", str(tmp_path / "logs"))
    return tmp_path / "logs"


@pytest.fixture
def half_tree():
    """Gamma = 1/2, depth 6: one branching shell (g_2 = 2), 11 vertices"""
    return tree_service.build_tree(TreeParams(gamma=0.5, depth=6))


@pytest.fixture
def third_tree():
    """Gamma = 1/3, depth 5: g_2 = 4"""
    return tree_service.build_tree(TreeParams(gamma=1 / 3, depth=5))


@pytest.fixture
def path_tree():
    """All g = 1 up to depth 3"""
    return tree_service.build_tree(TreeParams(gamma=0.5, depth=3, sparse_positions=(100,)))


@pytest.fixture
def free_block():
    return jacobi_service.free_coeffs(100, k=2)


@pytest.fixture
def surrogate_block():
    """Block k = 1 of a Gamma = 1/2 tree with barriers at shells 8, 32 and 128; 200 rows"""
    tree = tree_service.build_tree(TreeParams(gamma=0.5, depth=199, sparse_positions=(8, 32, 128)))
    return decompose_service.jacobi_coeffs(tree, 1)


@pytest.fixture
def random_block():
    """Seeded random Jacobi block with N = 200"""
    rng = np.random.default_rng(1234)
    N = 200
    return JacobiCoeffs(k=2, d=rng.uniform(0.0, 4.0, N), b=rng.uniform(0.5, 1.5, N - 1))


@pytest.fixture
def mild_block():
    """Small perturbation of the free block, N = 500"""
    rng = np.random.default_rng(99)
    N = 500
    return JacobiCoeffs(k=2, d=2.0 + 0.1 * rng.uniform(-1, 1, N), b=1.0 + 0.05 * rng.uniform(-1, 1, N - 1))
