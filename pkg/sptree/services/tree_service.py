import logging
import math
from bisect import bisect_right
from fractions import Fraction
from typing import Tuple, List

import numpy as np
import scipy.sparse as sp

from sptree.schemas.tree import TreeParams, ShTree, SparseLaplacian, tower_positions

logger = logging.getLogger(__name__)

INT64_MAX = 2 ** 63 - 1


def _integer_root(x: int, q: int) -> int:
    """Largest r with r**q <= x"""
    if x < 2 or q == 1:
        return x
    r = int(math.exp(math.log(x) / q))
    while r ** q > x:
        r -= 1
    while (r + 1) ** q <= x:
        r += 1
    return r


def _rational_exponent(gamma: float):
    """(1-gamma)/gamma as a Fraction when gamma is a small-denominator rational, else None"""
    frac = Fraction(gamma).limit_denominator(1000)
    if abs(float(frac) - gamma) > 1e-15:
        return None
    return (1 - frac) / frac


def branching_number(gamma: float, n: int) -> int:
    """floor(n^((1-gamma)/gamma)), exact for rational exponents"""
    exponent = _rational_exponent(gamma)
    if exponent is not None:
        return _integer_root(n ** exponent.numerator, exponent.denominator)
    value = float(n) ** ((1 - gamma) / gamma)
    nearest = round(value)
    # snap values within a few ulps below an integer before flooring
    if nearest - value > 0 and nearest - value <= 4 * np.spacing(value):
        return int(nearest)
    return int(math.floor(value))


def geometric_positions(first: int, ratio: int, depth: int) -> Tuple[int, ...]:
    """Surrogate sparse shells first * ratio^(m-1) up to depth"""
    positions = []
    value = first
    while value <= depth:
        positions.append(value)
        value *= ratio
    return tuple(positions)


class TreeService:
    """Service for sparse spherically homogeneous trees"""

    def tower_positions(self, depth: int) -> Tuple[int, ...]:
        return tower_positions(depth)

    def geometric_positions(self, first: int, ratio: int, depth: int) -> Tuple[int, ...]:
        return geometric_positions(first, ratio, depth)

    def sparse_branching(self, params: TreeParams, n: int) -> int:
        """
        Forward branching number g_n of the sparse tree

        Args:
            params: Tree parameters
            n: Shell index (n >= 0)

        Returns:
            floor(n^((1-gamma)/gamma)) at sparse positions, 1 elsewhere
        """
        if n < 0:
            raise ValueError(f"shell index must be nonnegative, got {n}")
        if n == 0 or n not in set(params.sparse_positions):
            return 1
        return branching_number(params.gamma, n)

    def branching_sequence(self, params: TreeParams, length: int) -> Tuple[int, ...]:
        """g_0 .. g_{length-1}"""
        positions = set(params.sparse_positions)
        return tuple(
            branching_number(params.gamma, n) if n in positions and n > 0 else 1
            for n in range(length)
        )

    def build_tree(self, params: TreeParams) -> ShTree:
        """
        Build the truncation of the tree at depth D

        Args:
            params: Tree parameters

        Returns:
            ShTree with g_0..g_{D-1}, alpha_0..alpha_D and the vertex count
        """
        try:
            g = self.branching_sequence(params, params.depth)
            alpha = [1]
            for n, gn in enumerate(g):
                nxt = alpha[-1] * gn
                if nxt > INT64_MAX:
                    raise OverflowError(f"shell size alpha_{n + 1} exceeds the int64 range")
                alpha.append(nxt)
            vertex_count = sum(alpha)
            if vertex_count > INT64_MAX:
                raise OverflowError("vertex count exceeds the int64 range")

            tree = ShTree(params=params, g=g, alpha=tuple(alpha), vertex_count=vertex_count)
            logger.info(
                f"Built tree with gamma={params.gamma}, depth={params.depth}, "
                f"alpha_D={alpha[-1]}, vertex_count={vertex_count}"
            )
            return tree
        except Exception as e:
            logger.error(f"Error building tree: {str(e)}")
            raise

    def assemble_operators(self, tree: ShTree) -> Tuple[sp.csr_matrix, np.ndarray]:
        """
        Adjacency matrix and degree sequence in shell-major vertex order

        Returns:
            (A, degree) with A symmetric 0/1 and degree the row sums of A
        """
        offsets = tree.shell_offsets
        parents, children = [], []
        for n, gn in enumerate(tree.g):
            parents.append(offsets[n] + np.repeat(np.arange(tree.alpha[n], dtype=np.int64), gn))
            children.append(offsets[n + 1] + np.arange(tree.alpha[n + 1], dtype=np.int64))
        parents = np.concatenate(parents) if parents else np.zeros(0, dtype=np.int64)
        children = np.concatenate(children) if children else np.zeros(0, dtype=np.int64)

        rows = np.concatenate([parents, children])
        cols = np.concatenate([children, parents])
        size = tree.vertex_count
        A = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(size, size)).tocsr()
        degree = np.asarray(A.sum(axis=1)).ravel()
        return A, degree

    def assemble_laplacian(self, tree: ShTree) -> SparseLaplacian:
        """
        Graph Laplacian H = D - A of the truncated tree

        Returns:
            SparseLaplacian with the CSR matrix and both parts
        """
        try:
            A, degree = self.assemble_operators(tree)
            H = (sp.diags(degree) - A).tocsr()
            logger.info(f"Assembled Laplacian of dimension {tree.vertex_count} with {A.nnz // 2} edges")
            return SparseLaplacian(dimension=tree.vertex_count, matrix=H, adjacency=A, degree=degree)
        except Exception as e:
            logger.error(f"Error assembling Laplacian: {str(e)}")
            raise

    def vertex_location(self, tree: ShTree, v: int) -> Tuple[int, int]:
        """(shell, position within shell) of a shell-major vertex index"""
        if not 0 <= v < tree.vertex_count:
            raise IndexError(f"vertex {v} outside 0..{tree.vertex_count - 1}")
        offsets = tree.shell_offsets
        n = bisect_right(offsets, v) - 1
        return n, v - offsets[n]

    def vertex_index(self, tree: ShTree, n: int, position: int) -> int:
        if not 0 <= n <= tree.depth:
            raise IndexError(f"shell {n} outside 0..{tree.depth}")
        if not 0 <= position < tree.alpha[n]:
            raise IndexError(f"position {position} outside shell {n} of size {tree.alpha[n]}")
        return tree.shell_offsets[n] + position

    def ancestor(self, tree: ShTree, n: int, position: int, level: int) -> int:
        """Position on shell `level` of the ancestor of (n, position)"""
        return position // (tree.alpha[n] // tree.alpha[level])

    def tree_distance(self, tree: ShTree, u: int, v: int) -> int:
        """
        Graph distance between two vertices via their lowest common ancestor
        """
        nu, pu = self.vertex_location(tree, u)
        nv, pv = self.vertex_location(tree, v)
        top = min(nu, nv)
        au = self.ancestor(tree, nu, pu, top)
        av = self.ancestor(tree, nv, pv, top)

        # ancestors agree on a prefix of levels; find its deepest level
        lo, hi = 0, top
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.ancestor(tree, top, au, mid) == self.ancestor(tree, top, av, mid):
                lo = mid
            else:
                hi = mid - 1
        return (nu - lo) + (nv - lo)

    def children(self, tree: ShTree, n: int, position: int) -> List[int]:
        """Shell-major indices of the children of (n, position)"""
        if n >= tree.depth:
            return []
        gn = tree.g[n]
        start = tree.shell_offsets[n + 1] + position * gn
        return list(range(start, start + gn))


tree_service = TreeService()
