import logging
import math
from typing import Sequence, Tuple, List, Union

import numpy as np
from pydantic import BaseModel

from sptree.core.exceptions import RangeError, ParamError, HypothesisWindowError
from sptree.schemas.jacobi import JacobiCoeffs
from sptree.schemas.tree import TreeParams
from sptree.schemas.reports import RecursionReport, InverseNormEntry, InverseNormReport
from sptree.services.jacobi_service import jacobi_service, free_quadratic_roots
from sptree.services.tree_service import tree_service

logger = logging.getLogger(__name__)

ENTRY_LIMIT = 1e300


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value of a 2x2 matrix in closed form"""
    fro2 = float(np.sum(np.abs(M) ** 2))
    det = abs(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    disc = max(fro2 * fro2 - 4.0 * det * det, 0.0)
    return math.sqrt((fro2 + math.sqrt(disc)) / 2.0)


class LogScaledMatrix(BaseModel):
    """2x2 matrix stored as mantissa * 2**exponent"""
    mantissa: np.ndarray
    exponent: int = 0

    class Config:
        arbitrary_types_allowed = True

    @classmethod
    def identity(cls) -> "LogScaledMatrix":
        return cls(mantissa=np.eye(2, dtype=np.complex128), exponent=0)

    def _rescaled(self, M: np.ndarray, exponent: int) -> "LogScaledMatrix":
        peak = float(np.max(np.abs(M)))
        if peak > 2.0 ** 64 or 0 < peak < 2.0 ** -64:
            _, e = math.frexp(peak)
            M = M * 2.0 ** (-e)
            exponent += e
        return LogScaledMatrix(mantissa=M, exponent=exponent)

    def matmul(self, M: np.ndarray) -> "LogScaledMatrix":
        """self @ M"""
        return self._rescaled(self.mantissa @ M, self.exponent)

    def rmatmul(self, M: np.ndarray) -> "LogScaledMatrix":
        """M @ self"""
        return self._rescaled(M @ self.mantissa, self.exponent)

    @property
    def log2_norm(self) -> float:
        norm = spectral_norm(self.mantissa)
        if norm == 0:
            return -math.inf
        return math.log2(norm) + self.exponent

    @property
    def log2_abs_det(self) -> float:
        det = abs(self.mantissa[0, 0] * self.mantissa[1, 1] - self.mantissa[0, 1] * self.mantissa[1, 0])
        return math.log2(det) + 2 * self.exponent

    def toarray(self) -> np.ndarray:
        if self.exponent > 960:
            raise OverflowError(f"matrix entries exceed the float range (2^{self.exponent} scale)")
        return self.mantissa * 2.0 ** self.exponent


class TransferService:
    """Service for transfer matrices of the radial recursion"""

    def transfer_matrix(self, g: Sequence[int], z: complex, n: int) -> np.ndarray:
        """
        T_z(n) = ((0, 1), (-sqrt(g_{n-1}/g_n), (g_n + 1 - z)/sqrt(g_n))); n = 0 uses g_{-1} := 1 and g_0 - z

        Raises:
            RangeError: If n < 0 or g_n is not provided
        """
        if n < 0 or n >= len(g):
            raise RangeError(f"transfer matrix index {n} outside 0..{len(g) - 1}")
        gn = float(g[n])
        if n == 0:
            return np.array([[0.0, 1.0], [-1.0 / math.sqrt(gn), (gn - z) / math.sqrt(gn)]], dtype=np.complex128)
        gp = float(g[n - 1])
        return np.array(
            [[0.0, 1.0], [-math.sqrt(gp / gn), (gn + 1.0 - z) / math.sqrt(gn)]],
            dtype=np.complex128
        )

    def inverse_transfer_matrix(self, g: Sequence[int], z: complex, n: int) -> np.ndarray:
        T = self.transfer_matrix(g, z, n)
        det = -T[1, 0]
        return np.array([[T[1, 1] / det, -1.0 / det], [1.0, 0.0]], dtype=np.complex128)

    def block_transfer_matrix(self, coeffs: JacobiCoeffs, z: complex, n: int) -> np.ndarray:
        """
        T(n) = ((0, 1), (-b(n-1)/b(n), (d(n) - z)/b(n))) with b(0) = 1, for 1 <= n <= N - 1
        """
        if not 1 <= n <= coeffs.N - 1:
            raise RangeError(f"block transfer index {n} outside 1..{coeffs.N - 1}")
        b_n = coeffs.b[n - 1]
        if b_n == 0:
            raise RangeError(f"coupling b({n}) vanishes; the recursion does not propagate")
        b_prev = 1.0 if n == 1 else coeffs.b[n - 2]
        return np.array([[0.0, 1.0], [-b_prev / b_n, (coeffs.d[n - 1] - z) / b_n]], dtype=np.complex128)

    def transfer_product(self, g: Sequence[int], z: complex, n: int, m: int = 0,
                         scaled: bool = False) -> Union[np.ndarray, LogScaledMatrix]:
        """
        S_z(n, m) = T_z(n) T_z(n-1) ... T_z(m)

        Raises:
            OverflowError: If an entry passes 1e300 (unscaled products only)
        """
        if not 0 <= m <= n:
            raise RangeError(f"need 0 <= m <= n, got m={m}, n={n}")
        if scaled:
            S = LogScaledMatrix.identity()
            for j in range(m, n + 1):
                S = S.rmatmul(self.transfer_matrix(g, z, j))
            return S

        S = np.eye(2, dtype=np.complex128)
        for j in range(m, n + 1):
            S = self.transfer_matrix(g, z, j) @ S
            if np.max(np.abs(S)) > ENTRY_LIMIT:
                raise OverflowError(f"transfer product overflowed at index {j}")
        return S

    def free_transfer_matrix(self, z: complex) -> np.ndarray:
        return np.array([[0.0, 1.0], [-1.0, 2.0 - z]], dtype=np.complex128)

    def free_transfer_eigenvalues(self, z: complex) -> Tuple[complex, complex]:
        return free_quadratic_roots(z)

    def free_rotation_bound(self, E: float, epsilon: float, K: float) -> float:
        """sup over n <= K/epsilon of ||R^n|| at z = E + i epsilon"""
        if not 0 < E < 4:
            raise ParamError("E must lie in (0, 4)")
        R = self.free_transfer_matrix(complex(E, epsilon))
        steps = int(K / epsilon) if epsilon > 0 else int(K)
        power = np.eye(2, dtype=np.complex128)
        best = 1.0
        for _ in range(steps):
            power = R @ power
            best = max(best, spectral_norm(power))
        return best

    def recursion_consistency(self, coeffs: JacobiCoeffs, z: complex, n_max: int) -> RecursionReport:
        """
        Propagate (f(0), f(1)) = (1, m(z)) through the block recursion and compare with
        the resolvent column g = (H - z)^-1 delta_1 for n = 1..n_max

        m(z) comes from the spectral measure of delta_1, the column from an O(N) solve.
        """
        z = complex(z)
        if z.imag <= 0:
            raise ParamError("recursion_consistency needs Im z > 0")
        if not 1 <= n_max <= coeffs.N - 1:
            raise RangeError(f"n_max must lie in 1..{coeffs.N - 1}")

        e1 = np.zeros(coeffs.N)
        e1[0] = 1.0
        measure = jacobi_service.spectral_measure(coeffs, e1)
        m = jacobi_service.m_function(measure, z)
        column = jacobi_service.resolvent_apply(coeffs, z, e1)

        state = np.array([1.0, m], dtype=np.complex128)
        f = [m]
        for n in range(1, n_max):
            state = self.block_transfer_matrix(coeffs, z, n) @ state
            if np.max(np.abs(state)) > ENTRY_LIMIT:
                raise OverflowError(f"propagated solution overflowed at n={n + 1}")
            f.append(state[1])

        f = np.array(f)
        reference = column[:n_max]
        deviations = np.abs(f - reference) / np.maximum(np.abs(reference), 1e-300)
        report = RecursionReport(
            z=(z.real, z.imag),
            n_max=n_max,
            deviations=deviations.tolist(),
            max_deviation=float(deviations.max())
        )
        logger.info(f"Recursion consistency at z={z}: max relative deviation {report.max_deviation:.3e}")
        return report

    def inverse_norm_bound_check(self, params: TreeParams, z: complex, K: float,
                                 n: Union[int, Sequence[int]]) -> InverseNormReport:
        """
        Fit C_4 in ||S_z(n)^-1|| <= C_4^(m+1) prod_{j<=m} L_j^((1-gamma)/(2 gamma))

        m counts the sparse positions L_j <= n. Accepts a single n or an n-sweep.

        Raises:
            ParamError: Unless 0 < Re z < 4
            HypothesisWindowError: If n * Im z >= K
        """
        z = complex(z)
        if not 0 < z.real < 4:
            raise ParamError("Re z must lie in (0, 4)")
        ns = [n] if isinstance(n, (int, np.integer)) else list(n)
        top = max(ns)
        if top * abs(z.imag) >= K:
            raise HypothesisWindowError(f"n * epsilon = {top * abs(z.imag):.3g} is not below K = {K}")

        g = tree_service.branching_sequence(params, top + 1)
        positions = [p for p in params.sparse_positions if p <= top]
        exponent = (1 - params.gamma) / (2 * params.gamma)

        entries: List[InverseNormEntry] = []
        inverse = LogScaledMatrix.identity()
        wanted = set(ns)
        for j in range(top + 1):
            inverse = inverse.matmul(self.inverse_transfer_matrix(g, z, j))
            if j not in wanted:
                continue
            barriers = sum(1 for p in positions if p <= j)
            log2_struct = exponent * sum(math.log2(p) for p in positions if p <= j)
            log2_norm = inverse.log2_norm
            c4 = 2.0 ** ((log2_norm - log2_struct) / (barriers + 1))
            entries.append(InverseNormEntry(
                n=j, barriers=barriers, log2_norm=log2_norm, log2_structural=log2_struct, c4_fit=c4
            ))

        entries.sort(key=lambda e: e.n)
        c4_max = max(e.c4_fit for e in entries)
        by_m = {}
        for e in entries:
            by_m[e.barriers] = max(by_m.get(e.barriers, 0.0), e.c4_fit)
        levels = [by_m[m] for m in sorted(by_m)]
        # growth test: the largest barrier count may not exceed twice the earlier maximum
        bounded = len(levels) < 2 or levels[-1] <= 2.0 * max(levels[:-1])
        return InverseNormReport(z=(z.real, z.imag), K=K, entries=entries, c4_max=c4_max, bounded=bounded)


transfer_service = TransferService()
