import pytest
import numpy as np

from sptree.schemas.tree import TreeParams, tower_positions
from sptree.services.tree_service import tree_service, branching_number, geometric_positions


def test_sparse_branching_values():
    """Test g_n at sparse and regular shells"""
    half = TreeParams(gamma=0.5, depth=20)
    third = TreeParams(gamma=1 / 3, depth=20)

    assert tree_service.sparse_branching(half, 16) == 16
    assert tree_service.sparse_branching(half, 3) == 1
    assert tree_service.sparse_branching(third, 2) == 4
    assert tree_service.sparse_branching(half, 0) == 1


def test_sparse_branching_only_at_sparse_positions():
    """Test that every shell outside the sparse set has a single child"""
    params = TreeParams(gamma=0.4, depth=40, sparse_positions=(3, 9, 27))
    for n in range(40):
        g = tree_service.sparse_branching(params, n)
        if n in (3, 9, 27):
            assert g == branching_number(0.4, n)
        else:
            assert g == 1


def test_sparse_branching_negative_shell():
    """Test that a negative shell index is rejected"""
    with pytest.raises(ValueError):
        tree_service.sparse_branching(TreeParams(gamma=0.5, depth=4), -1)


def test_branching_number_exact_powers():
    """Test integer-exact floors for rational exponents"""
    assert branching_number(1 / 3, 1000) == 1000000
    assert branching_number(2 / 3, 64) == 8
    assert branching_number(2 / 3, 63) == 7
    assert branching_number(0.5, 134217728) == 134217728


def test_build_tree_small():
    """Test shell sizes of the Gamma = 1/2, D = 4 tree"""
    tree = tree_service.build_tree(TreeParams(gamma=0.5, depth=4))

    assert tree.g == (1, 1, 2, 1)
    assert tree.alpha == (1, 1, 1, 2, 2)
    assert tree.vertex_count == 7


def test_build_tree_depth_one():
    """Test that D = 1 gives the root and one child"""
    for gamma in (0.2, 0.5, 0.9):
        tree = tree_service.build_tree(TreeParams(gamma=gamma, depth=1))
        assert tree.alpha == (1, 1)
        assert tree.vertex_count == 2


def test_build_tree_depth_seventeen():
    """Test alpha_17 = 2 * 16 for Gamma = 1/2"""
    tree = tree_service.build_tree(TreeParams(gamma=0.5, depth=17))
    assert tree.alpha[17] == 32
    for n, gn in enumerate(tree.g):
        assert tree.alpha[n + 1] == tree.alpha[n] * gn


def test_build_tree_overflow():
    """Test that shell sizes beyond int64 raise OverflowError"""
    params = TreeParams(gamma=0.1, depth=70, sparse_positions=(16, 32, 64))
    with pytest.raises(OverflowError):
        tree_service.build_tree(params)


def test_tower_positions():
    """Test the default rule L_m = 2^(m^m) capped at depth"""
    assert tower_positions(20) == (2, 16)
    assert tower_positions(1) == ()
    assert tower_positions(2 ** 27) == (2, 16, 134217728)
    assert TreeParams(gamma=0.5, depth=20).sparse_positions == (2, 16)


def test_geometric_positions():
    """Test the surrogate geometric rule"""
    assert geometric_positions(8, 4, 200) == (8, 32, 128)
    assert tree_service.geometric_positions(2, 2, 16) == (2, 4, 8, 16)


def test_tree_params_validation():
    """Test rejection of invalid parameters"""
    with pytest.raises(ValueError):
        TreeParams(gamma=1.2, depth=4)
    with pytest.raises(ValueError):
        TreeParams(gamma=0.5, depth=0)
    with pytest.raises(ValueError):
        TreeParams(gamma=0.5, depth=10, sparse_positions=(4, 4))


def test_laplacian_two_vertices():
    """Test the P2 Laplacian for D = 1"""
    tree = tree_service.build_tree(TreeParams(gamma=0.5, depth=1))
    H = tree_service.assemble_laplacian(tree).toarray()
    assert np.array_equal(H, np.array([[1.0, -1.0], [-1.0, 1.0]]))


def test_laplacian_path_three():
    """Test the P3 Laplacian for D = 2 with all g = 1"""
    tree = tree_service.build_tree(TreeParams(gamma=0.5, depth=2))
    assert tree.g == (1, 1)
    H = tree_service.assemble_laplacian(tree).toarray()
    expected = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
    assert np.array_equal(H, expected)


def test_laplacian_symmetry_and_degrees(half_tree):
    """Test symmetry and degree consistency of H = D - A"""
    lap = tree_service.assemble_laplacian(half_tree)
    H = lap.toarray()
    A = lap.adjacency.toarray()

    assert np.array_equal(H, H.T)
    assert np.array_equal(A.sum(axis=1), lap.degree)
    assert np.array_equal(np.diag(H), lap.degree)
    offsets = half_tree.shell_offsets
    for n in range(half_tree.depth + 1):
        for v in range(offsets[n], offsets[n + 1]):
            assert lap.degree[v] == half_tree.degree(n)


def test_vertex_index_round_trip(half_tree):
    """Test shell-major index arithmetic"""
    assert tree_service.vertex_location(half_tree, 0) == (0, 0)
    v = tree_service.vertex_index(half_tree, 3, 1)
    assert tree_service.vertex_location(half_tree, v) == (3, 1)


def test_vertex_location_out_of_range(half_tree):
    """Test IndexError for vertices outside the tree"""
    with pytest.raises(IndexError):
        tree_service.vertex_location(half_tree, half_tree.vertex_count)
    with pytest.raises(IndexError):
        tree_service.vertex_index(half_tree, 2, 1)


def test_tree_distance(half_tree):
    """Test distances through the lowest common ancestor"""
    root = 0
    for n in range(half_tree.depth + 1):
        v = tree_service.vertex_index(half_tree, n, half_tree.alpha[n] - 1)
        assert tree_service.tree_distance(half_tree, root, v) == n
        assert tree_service.tree_distance(half_tree, v, v) == 0

    left, right = tree_service.children(half_tree, 2, 0)
    assert tree_service.tree_distance(half_tree, left, right) == 2

    deep_left = tree_service.vertex_index(half_tree, 6, 0)
    deep_right = tree_service.vertex_index(half_tree, 6, 1)
    assert tree_service.tree_distance(half_tree, deep_left, deep_right) == 8


def test_tree_distance_matches_graph_distance(third_tree):
    """Test the index arithmetic against breadth-first search"""
    A = tree_service.assemble_laplacian(third_tree).adjacency.tolil()
    start = tree_service.vertex_index(third_tree, 5, 3)
    dist = {start: 0}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for v in A.rows[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt

    for v, d in dist.items():
        assert tree_service.tree_distance(third_tree, start, v) == d
