import pytest
import numpy as np

from sptree.core.config import settings
from sptree.core.exceptions import RangeError, DenseLimitError, NumericalRankError
from sptree.schemas.jacobi import JacobiCoeffs
from sptree.schemas.tree import TreeParams
from sptree.services.decompose_service import decompose_service, _gram_schmidt
from sptree.services.jacobi_service import jacobi_service
from sptree.services.tree_service import tree_service


def test_level_index(half_tree):
    """Test N(k) from the shell-size sandwich"""
    assert decompose_service.level_index(half_tree, 1) == 0
    assert decompose_service.level_index(half_tree, 2) == 3
    assert decompose_service.level_index(half_tree, half_tree.alpha[-1]) <= half_tree.depth


def test_level_index_out_of_range(half_tree):
    """Test RangeError beyond alpha_D"""
    with pytest.raises(RangeError):
        decompose_service.level_index(half_tree, half_tree.alpha[-1] + 1)
    with pytest.raises(RangeError):
        decompose_service.level_index(half_tree, 0)


def test_jacobi_coeffs_first_block(half_tree):
    """Test block 1 of the Gamma = 1/2, D = 6 tree"""
    coeffs = decompose_service.jacobi_coeffs(half_tree, 1)

    assert coeffs.weights == (1, 1, 2, 1, 1, 1, 0)
    assert np.array_equal(coeffs.d, [1, 2, 3, 2, 2, 2, 1])
    assert np.allclose(coeffs.b, np.sqrt([1, 1, 2, 1, 1, 1]), rtol=0, atol=1e-15)


def test_jacobi_coeffs_at_large_branching():
    """Test d = g + 1 and b = sqrt(g) at a shell with g = 16"""
    tree = tree_service.build_tree(TreeParams(gamma=0.5, depth=17))
    coeffs = decompose_service.jacobi_coeffs(tree, 1)
    assert coeffs.d[16] == 17
    assert coeffs.b[16] == 4


def test_jacobi_coeffs_higher_block(half_tree):
    """Test d_k(1) = b_k(1)^2 + 1 for k >= 2"""
    coeffs = decompose_service.jacobi_coeffs(half_tree, 2)
    assert coeffs.offset == 3
    assert np.array_equal(coeffs.d, [2, 2, 2, 1])
    assert coeffs.d[0] == coeffs.b[0] ** 2 + 1


def test_jacobi_coeffs_truncation(half_tree):
    """Test explicit lengths and the truncation boundary"""
    coeffs = decompose_service.jacobi_coeffs(half_tree, 1, 4)
    assert coeffs.N == 4
    with pytest.raises(RangeError):
        decompose_service.jacobi_coeffs(half_tree, 2, 5)


def test_block_lengths_exhaust_tree(half_tree, third_tree):
    """Test that the block lengths sum to vertex_count"""
    for tree in (half_tree, third_tree):
        lengths = decompose_service.block_lengths(tree)
        assert len(lengths) == tree.alpha[-1]
        assert sum(lengths) == tree.vertex_count
        assert lengths == [decompose_service.jacobi_coeffs(tree, k).N for k in range(1, tree.alpha[-1] + 1)]


def test_coefficient_identity_every_block():
    """Test the integer identity on every block up to depth 20"""
    for gamma in (1 / 3, 0.5, 0.7):
        tree = tree_service.build_tree(TreeParams(gamma=gamma, depth=20))
        for coeffs in decompose_service.blocks(tree):
            assert decompose_service.coefficient_check(coeffs).passed


def test_coefficient_detects_sign_error(half_tree):
    """Test that a flipped diagonal entry is reported"""
    coeffs = decompose_service.jacobi_coeffs(half_tree, 1)
    d = np.array(coeffs.d)
    d[2] = -d[2]
    broken = JacobiCoeffs(k=coeffs.k, offset=coeffs.offset, d=d, b=coeffs.b, weights=coeffs.weights)

    report = decompose_service.coefficient_check(broken)
    assert not report.passed
    assert report.violations == [3]


def test_coefficient_needs_weights():
    """Test that blocks without integer weights are refused"""
    with pytest.raises(RangeError):
        decompose_service.coefficient_check(jacobi_service.diagonal_coeffs([1.0, 2.0, 3.0]))


def test_cons_unitary_path_is_identity(path_tree):
    """Test U = I when every shell has one vertex"""
    basis = decompose_service.build_cons_unitary(path_tree)
    assert np.allclose(basis.U, np.eye(path_tree.vertex_count), rtol=0, atol=1e-14)
    assert basis.block_index == [(1, n) for n in range(1, path_tree.vertex_count + 1)]


def test_cons_unitary_orthonormal():
    """Test U*U = I and shell supports for Gamma = 1/2, D = 4"""
    tree = tree_service.build_tree(TreeParams(gamma=0.5, depth=4))
    basis = decompose_service.build_cons_unitary(tree)
    U = basis.U

    assert U.shape == (7, 7)
    assert np.max(np.abs(U.T @ U - np.eye(7))) <= 1e-12

    offsets = tree.shell_offsets
    for column, (k, n) in enumerate(basis.block_index):
        shell = decompose_service.level_index(tree, k) + n - 1
        support = np.flatnonzero(np.abs(U[:, column]) > 1e-14)
        assert support.min() >= offsets[shell]
        assert support.max() < offsets[shell + 1]


def test_gram_schmidt_complement():
    """Test orthonormal output, positive leading coefficients and the rank check"""
    fixed = np.zeros((4, 1))
    fixed[:, 0] = 0.5
    seeds = np.eye(4)[:, :3]
    Q = _gram_schmidt(fixed, seeds, 1)

    assert np.max(np.abs(Q.T @ Q - np.eye(3))) <= 1e-14
    assert np.max(np.abs(fixed.T @ Q)) <= 1e-14
    assert np.all(np.diag(Q.T @ seeds) > 0)

    dependent = np.ones((4, 2))
    with pytest.raises(NumericalRankError):
        _gram_schmidt(fixed, dependent, 1)


def test_cons_unitary_at_larger_branching():
    """Test U*U = I on a tree with g = 16 at one shell"""
    tree = tree_service.build_tree(TreeParams(gamma=0.5, depth=18))
    U = decompose_service.build_cons_unitary(tree).U
    assert np.max(np.abs(U.T @ U - np.eye(tree.vertex_count))) <= 1e-12


def test_cons_unitary_dense_limit(half_tree, monkeypatch):
    """Test DenseLimitError above the configured limit"""
    monkeypatch.setattr(settings, "DENSE_LIMIT_TREE", 5)
    with pytest.raises(DenseLimitError):
        decompose_service.build_cons_unitary(half_tree)
    with pytest.raises(DenseLimitError):
        decompose_service.verify_equivalence(half_tree)


def test_verify_equivalence_path(path_tree):
    """Test machine-precision equivalence on a path"""
    report = decompose_service.verify_equivalence(path_tree)
    assert report.max_deviation <= 1e-12


@pytest.mark.parametrize("gamma,depth", [(0.5, 6), (1 / 3, 5), (0.5, 8), (1 / 3, 8)])
def test_verify_equivalence_sparse(gamma, depth):
    """Test unitary equivalence of the tree Laplacian and the block sum"""
    tree = tree_service.build_tree(TreeParams(gamma=gamma, depth=depth))
    report = decompose_service.verify_equivalence(tree)

    assert report.dimension == tree.vertex_count
    assert report.off_block <= 1e-10
    assert report.in_block <= 1e-10
    assert report.eigenvalue_distance <= 1e-10


def test_sign_gauge_leaves_spectrum(half_tree):
    """Test that conjugating a block by diag(+-1) keeps its eigenvalues"""
    rng = np.random.default_rng(5)
    for coeffs in decompose_service.blocks(half_tree):
        H = coeffs.todense()
        S = np.diag(rng.choice([-1.0, 1.0], size=coeffs.N))
        assert np.allclose(np.linalg.eigvalsh(S @ H @ S), np.linalg.eigvalsh(H), rtol=0, atol=1e-12)
