import logging
from bisect import bisect_left
from typing import List, Optional

import numpy as np
from scipy.linalg import eigvalsh, eigvalsh_tridiagonal

from sptree.core.config import settings
from sptree.core.exceptions import RangeError, DenseLimitError, NumericalRankError
from sptree.schemas.tree import ShTree
from sptree.schemas.jacobi import JacobiCoeffs, UnitaryBasis
from sptree.schemas.reports import EquivalenceReport, CoefficientReport
from sptree.services.tree_service import tree_service

logger = logging.getLogger(__name__)


def _gram_schmidt(fixed: np.ndarray, seeds: np.ndarray, shell: int) -> np.ndarray:
    """
    Orthonormalise the seed columns against the orthonormal columns of fixed and each other

    Each column is projected twice against everything accepted before it.

    Raises:
        NumericalRankError: If a projected seed falls below GS_RANK_TOL
    """
    out = np.zeros_like(seeds)
    for c in range(seeds.shape[1]):
        v = seeds[:, c].copy()
        done = out[:, :c]
        for _ in range(2):
            v -= fixed @ (fixed.T @ v)
            v -= done @ (done.T @ v)
        norm = np.linalg.norm(v)
        if norm < settings.GS_RANK_TOL:
            raise NumericalRankError(f"complement seed {c + 1} on shell {shell} is numerically dependent")
        out[:, c] = v / norm
    return out


class DecomposeService:
    """Service for the radial decomposition of tree Laplacians into Jacobi blocks"""

    def level_index(self, tree: ShTree, k: int) -> int:
        """
        Shell N(k) where block k starts: alpha_{N(k)-1} < k <= alpha_{N(k)}

        Raises:
            RangeError: If k is not a block of this truncation
        """
        if not 1 <= k <= tree.alpha[-1]:
            raise RangeError(f"block index {k} outside 1..{tree.alpha[-1]}")
        return bisect_left(tree.alpha, k)

    def block_length(self, tree: ShTree, k: int) -> int:
        return tree.depth - self.level_index(tree, k) + 1

    def block_lengths(self, tree: ShTree) -> List[int]:
        """Length of every block k = 1..alpha_D; the lengths sum to vertex_count"""
        lengths = []
        previous = 0
        for n, size in enumerate(tree.alpha):
            lengths.extend([tree.depth - n + 1] * (size - previous))
            previous = size
        return lengths

    def jacobi_coeffs(self, tree: ShTree, k: int, N: Optional[int] = None) -> JacobiCoeffs:
        """
        Coefficients of block k truncated to N rows

        Row n sits on shell j = N(k) + n - 1 and carries the squared coupling
        a(n)^2 = g_j (0 on the leaf shell). The diagonal is a(n)^2 + 1, minus one
        at the root row of block 1.

        Raises:
            RangeError: If the block does not reach N rows inside the truncation
        """
        start = self.level_index(tree, k)
        available = tree.depth - start + 1
        if N is None:
            N = available
        if not 1 <= N <= available:
            raise RangeError(f"block {k} has {available} rows in the truncation, {N} requested")

        weights = tuple(tree.g[start + n] if start + n < tree.depth else 0 for n in range(N))
        d = np.array([w + 1 for w in weights], dtype=float)
        if k == 1:
            d[0] -= 1
        b = np.sqrt(np.array(weights[:-1], dtype=float))
        return JacobiCoeffs(k=k, offset=start, d=d, b=b, weights=weights)

    def blocks(self, tree: ShTree) -> List[JacobiCoeffs]:
        return [self.jacobi_coeffs(tree, k) for k in range(1, tree.alpha[-1] + 1)]

    def coefficient_check(self, coeffs: JacobiCoeffs) -> CoefficientReport:
        """
        Exact check of d(n) = a(n)^2 + 1 - [k = 1][n = 1] and b(n) = sqrt(a(n)^2)
        """
        if coeffs.weights is None:
            raise RangeError("coefficient_check needs the integer coupling weights of a tree block")
        violations = []
        max_diag = 0.0
        for n, w in enumerate(coeffs.weights, start=1):
            expected = w + 1 - (1 if coeffs.k == 1 and n == 1 else 0)
            deviation = abs(coeffs.d[n - 1] - expected)
            max_diag = max(max_diag, float(deviation))
            if coeffs.d[n - 1] != expected:
                violations.append(n)
        inner = np.array(coeffs.weights[:-1], dtype=float)
        max_coupling = float(np.max(np.abs(coeffs.b - np.sqrt(inner)))) if inner.size else 0.0
        positive = all(w > 0 for w in coeffs.weights[:-1])
        return CoefficientReport(
            k=coeffs.k,
            violations=violations,
            max_diagonal_deviation=max_diag,
            max_coupling_deviation=max_coupling,
            positive_couplings=positive
        )

    def build_cons_unitary(self, tree: ShTree) -> UnitaryBasis:
        """
        Orthonormal basis adapted to the decomposition, columns in (k, n) order

        Shell vectors of the previous shell are lifted by pi_n f(child) = f(parent)
        and normalised by sqrt(g_n); the new directions on each shell come from the
        coordinate vectors of all children but the last of every parent, projected
        against the lifted span and orthonormalised column by column
        (Gram-Schmidt with one reorthogonalisation pass).

        Raises:
            DenseLimitError: Above DENSE_LIMIT_TREE vertices
            NumericalRankError: If a complement seed is numerically dependent
        """
        if tree.vertex_count > settings.DENSE_LIMIT_TREE:
            raise DenseLimitError(tree.vertex_count, settings.DENSE_LIMIT_TREE, "tree")

        try:
            shells = [np.ones((1, 1))]
            for n, gn in enumerate(tree.g):
                lifted = np.repeat(shells[-1], gn, axis=0) / np.sqrt(gn)
                extra = tree.alpha[n + 1] - tree.alpha[n]
                if extra == 0:
                    shells.append(lifted)
                    continue

                seeds_idx = (np.arange(tree.alpha[n])[:, None] * gn + np.arange(gn - 1)[None, :]).ravel()
                seeds = np.zeros((tree.alpha[n + 1], extra))
                seeds[seeds_idx, np.arange(extra)] = 1.0
                Q = _gram_schmidt(lifted, seeds, n + 1)
                shells.append(np.hstack([lifted, Q]))

            offsets = tree.shell_offsets
            U = np.zeros((tree.vertex_count, tree.vertex_count))
            block_index = []
            column = 0
            for k in range(1, tree.alpha[-1] + 1):
                start = self.level_index(tree, k)
                for n in range(1, tree.depth - start + 2):
                    j = start + n - 1
                    U[offsets[j]:offsets[j + 1], column] = shells[j][:, k - 1]
                    block_index.append((k, n))
                    column += 1

            logger.info(f"Built adapted orthonormal basis of dimension {tree.vertex_count}")
            return UnitaryBasis(U=U, block_index=block_index)
        except Exception as e:
            logger.error(f"Error building orthonormal basis: {str(e)}")
            raise

    def verify_equivalence(self, tree: ShTree) -> EquivalenceReport:
        """
        Compare U*HU with the direct sum of the Jacobi blocks

        Returns:
            Off-pattern mass, in-pattern deviation and sorted eigenvalue distance
        """
        basis = self.build_cons_unitary(tree)
        H = tree_service.assemble_laplacian(tree).toarray()
        M = basis.U.T @ H @ basis.U

        target = np.zeros_like(M)
        pattern = np.zeros(M.shape, dtype=bool)
        block_eigs = []
        start = 0
        for coeffs in self.blocks(tree):
            N = coeffs.N
            sl = slice(start, start + N)
            target[sl, sl] = coeffs.todense()
            idx = np.arange(start, start + N)
            pattern[idx, idx] = True
            pattern[idx[:-1], idx[1:]] = True
            pattern[idx[1:], idx[:-1]] = True
            block_eigs.append(
                eigvalsh_tridiagonal(coeffs.d, -coeffs.b) if N > 1 else np.array(coeffs.d)
            )
            start += N

        deviation = np.abs(M - target)
        off_block = float(deviation[~pattern].max()) if (~pattern).any() else 0.0
        in_block = float(deviation[pattern].max())
        tree_eigs = eigvalsh(H)
        blocks_sorted = np.sort(np.concatenate(block_eigs))
        eig_distance = float(np.max(np.abs(tree_eigs - blocks_sorted)))

        report = EquivalenceReport(
            off_block=off_block,
            in_block=in_block,
            eigenvalue_distance=eig_distance,
            dimension=tree.vertex_count
        )
        logger.info(
            f"Equivalence check on {tree.vertex_count} vertices: off-block {off_block:.2e}, "
            f"in-block {in_block:.2e}, eigenvalues {eig_distance:.2e}"
        )
        return report


decompose_service = DecomposeService()
