import logging
from typing import Tuple, List, Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal, solve_banded, LinAlgError

from sptree.core.config import settings
from sptree.core.exceptions import (
    DenseLimitError, SingularSolveError, ZeroStateError, RangeError, ParamError
)
from sptree.core.jit import jit
from sptree.schemas.jacobi import (
    JacobiCoeffs, SpectralMeasure, KernelBoundParams, TruncatedFree
)
from sptree.schemas.reports import ShiftOpsReport, KernelBoundEntry, KernelBoundReport

logger = logging.getLogger(__name__)

TINY_PIVOT = 1e-300


@jit
def _thomas_solve(diag, off, rhs, fallback_ratio):
    """
    Solve tridiag(off; diag; off) x = rhs without pivoting.

    Returns (x, ok); ok is False when a pivot falls below fallback_ratio times its row norm.
    """
    n = diag.shape[0]
    cp = np.zeros(n, dtype=np.complex128)
    x = np.zeros(n, dtype=np.complex128)

    scale = abs(diag[0])
    if n > 1:
        scale += abs(off[0])
    denom = diag[0]
    if abs(denom) < 1e-300 or abs(denom) < fallback_ratio * scale:
        return x, False
    if n > 1:
        cp[0] = off[0] / denom
    x[0] = rhs[0] / denom

    for i in range(1, n):
        denom = diag[i] - off[i - 1] * cp[i - 1]
        scale = abs(diag[i]) + abs(off[i - 1])
        if i < n - 1:
            scale += abs(off[i])
        if abs(denom) < 1e-300 or abs(denom) < fallback_ratio * scale:
            return x, False
        if i < n - 1:
            cp[i] = off[i] / denom
        x[i] = (rhs[i] - off[i - 1] * x[i - 1]) / denom

    for i in range(n - 2, -1, -1):
        x[i] = x[i] - cp[i] * x[i + 1]
    return x, True


def _pivoted_solve(diag: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = diag.size
    ab = np.zeros((3, n), dtype=np.complex128)
    ab[1] = diag
    if n > 1:
        ab[0, 1:] = off
        ab[2, :-1] = off
    try:
        x = solve_banded((1, 1), ab, rhs)
    except (LinAlgError, ValueError) as e:
        raise SingularSolveError(f"pivoted tridiagonal solve failed: {str(e)}")
    if not np.all(np.isfinite(x)):
        raise SingularSolveError("pivoted tridiagonal solve produced non-finite values")
    return x


def free_quadratic_roots(z: complex) -> Tuple[complex, complex]:
    """
    Roots of lambda^2 - (2 - z) lambda + 1 = 0 ordered as (growing, decaying)
    """
    w = 2.0 - complex(z)
    s = np.sqrt(w * w - 4.0 + 0j)
    r1 = (w + s) / 2.0
    r2 = (w - s) / 2.0
    if abs(r1) < abs(r2):
        r1, r2 = r2, r1
    return complex(r1), complex(r2)


class JacobiService:
    """Service for half-line Jacobi operators H = tridiag(-b; d; -b)"""

    def free_coeffs(self, N: int, k: int = 2) -> JacobiCoeffs:
        """Free block: d = 2, b = 1 (d(1) = 1 for k = 1)"""
        weights = (1,) * N
        d = np.full(N, 2.0)
        if k == 1:
            d[0] = 1.0
        return JacobiCoeffs(k=k, offset=0, d=d, b=np.ones(N - 1), weights=weights)

    def diagonal_coeffs(self, d: Sequence[float]) -> JacobiCoeffs:
        """Decoupled model: every site is an eigenvector"""
        d = np.asarray(d, dtype=float)
        return JacobiCoeffs(k=2, offset=0, d=d, b=np.zeros(d.size - 1))

    def resolvent_apply(self, coeffs: JacobiCoeffs, z: complex, v: np.ndarray) -> np.ndarray:
        """
        Solve (H - z) u = v in O(N)

        Args:
            coeffs: Block coefficients
            z: Spectral parameter with Im z != 0
            v: Right-hand side of length N

        Returns:
            Complex solution vector u
        """
        z = complex(z)
        if z.imag == 0:
            raise ParamError("resolvent_apply needs Im z != 0")
        v = np.asarray(v)
        if v.shape != (coeffs.N,):
            raise RangeError(f"right-hand side has shape {v.shape}, expected ({coeffs.N},)")

        diag = (coeffs.d - z).astype(np.complex128)
        off = (-coeffs.b).astype(np.complex128)
        rhs = v.astype(np.complex128)
        x, ok = _thomas_solve(diag, off, rhs, settings.PIVOT_FALLBACK_RATIO)
        if ok:
            residual = np.linalg.norm(self._shifted_apply(coeffs, z, x) - rhs)
            if residual <= 1e-10 * max(np.linalg.norm(rhs), TINY_PIVOT):
                return x
        logger.debug(f"Falling back to pivoted tridiagonal solve at z={z}")
        return _pivoted_solve(diag, off, rhs)

    def _shifted_apply(self, coeffs: JacobiCoeffs, z: complex, u: np.ndarray) -> np.ndarray:
        return coeffs.apply(u) - z * u

    def resolvent_sweep(self, coeffs: JacobiCoeffs, zs: np.ndarray, v: np.ndarray) -> np.ndarray:
        """
        Multi-shift Thomas sweep: column m solves (H - zs[m]) u = v

        Args:
            coeffs: Block coefficients
            zs: Shifts with nonzero imaginary parts
            v: Right-hand side of length N

        Returns:
            Complex array of shape (N, len(zs))
        """
        zs = np.asarray(zs, dtype=np.complex128).reshape(-1)
        v = np.asarray(v)
        N = coeffs.N
        if np.any(zs.imag == 0):
            raise ParamError("resolvent_sweep needs Im z != 0 for every shift")
        if v.shape != (N,):
            raise RangeError(f"right-hand side has shape {v.shape}, expected ({N},)")

        d = coeffs.d
        off = -coeffs.b
        ratio = settings.PIVOT_FALLBACK_RATIO
        M = zs.size
        cp = np.empty((max(N - 1, 0), M), dtype=np.complex128)
        x = np.empty((N, M), dtype=np.complex128)
        bad = np.zeros(M, dtype=bool)

        for i in range(N):
            shifted = d[i] - zs
            scale = np.abs(shifted)
            if i > 0:
                denom = shifted - off[i - 1] * cp[i - 1]
                scale = scale + abs(off[i - 1])
            else:
                denom = shifted
            if i < N - 1:
                scale = scale + abs(off[i])
            small = np.abs(denom) < np.maximum(ratio * scale, TINY_PIVOT)
            bad |= small
            denom = np.where(small, 1.0, denom)
            if i < N - 1:
                cp[i] = off[i] / denom
            if i > 0:
                x[i] = (v[i] - off[i - 1] * x[i - 1]) / denom
            else:
                x[i] = v[i] / denom

        for i in range(N - 2, -1, -1):
            x[i] -= cp[i] * x[i + 1]

        if bad.any():
            for m in np.flatnonzero(bad):
                x[:, m] = self.resolvent_apply(coeffs, zs[m], v)
        return x

    def weyl_function(self, coeffs: JacobiCoeffs, z: complex) -> complex:
        """<delta_1, (H - z)^-1 delta_1> by one O(N) solve"""
        e1 = np.zeros(coeffs.N)
        e1[0] = 1.0
        return complex(self.resolvent_apply(coeffs, z, e1)[0])

    def free_weyl_function(self, z: complex) -> complex:
        """m-function of the free half-line with d(1) = 2: the decaying root"""
        return free_quadratic_roots(z)[1]

    def free_decay_rate(self, z: complex) -> float:
        return abs(free_quadratic_roots(z)[1])

    def spectrum_bounds(self, coeffs: JacobiCoeffs) -> Tuple[float, float]:
        """Smallest and largest eigenvalue by bisection; no dense limit"""
        if coeffs.N == 1:
            return float(coeffs.d[0]), float(coeffs.d[0])
        lo = eigvalsh_tridiagonal(coeffs.d, -coeffs.b, select="i", select_range=(0, 0))
        hi = eigvalsh_tridiagonal(coeffs.d, -coeffs.b, select="i", select_range=(coeffs.N - 1, coeffs.N - 1))
        return float(lo[0]), float(hi[0])

    def _check_dense(self, coeffs: JacobiCoeffs):
        if coeffs.N > settings.DENSE_LIMIT_JACOBI:
            raise DenseLimitError(coeffs.N, settings.DENSE_LIMIT_JACOBI, "Jacobi block")

    def eigenvalues(self, coeffs: JacobiCoeffs) -> np.ndarray:
        self._check_dense(coeffs)
        if coeffs.N == 1:
            return np.array(coeffs.d, dtype=float)
        return eigvalsh_tridiagonal(coeffs.d, -coeffs.b)

    def eigendecompose(self, coeffs: JacobiCoeffs) -> Tuple[np.ndarray, np.ndarray]:
        """
        Ascending eigenvalues and orthonormal eigenvectors (columns)

        Raises:
            DenseLimitError: Above DENSE_LIMIT_JACOBI rows
        """
        self._check_dense(coeffs)
        if coeffs.N == 1:
            return np.array(coeffs.d, dtype=float), np.ones((1, 1))
        w, V = eigh_tridiagonal(coeffs.d, -coeffs.b)
        logger.debug(f"Eigendecomposed block of length {coeffs.N}")
        return w, V

    def measure_from_overlaps(self, eigenvalues: np.ndarray, weights: np.ndarray) -> SpectralMeasure:
        """Merge (near) degenerate eigenvalues and drop atoms with negligible weight"""
        scale = max(1.0, float(np.max(np.abs(eigenvalues)))) if eigenvalues.size else 1.0
        tol = 1e-12 * scale
        total = float(weights.sum())

        atoms, masses = [], []
        group_l, group_w = [eigenvalues[0]], [weights[0]]
        for lam, w in zip(eigenvalues[1:], weights[1:]):
            if lam - group_l[-1] <= tol:
                group_l.append(lam)
                group_w.append(w)
                continue
            atoms.append(group_l)
            masses.append(group_w)
            group_l, group_w = [lam], [w]
        atoms.append(group_l)
        masses.append(group_w)

        merged_l, merged_w = [], []
        for ls, ws in zip(atoms, masses):
            mass = float(np.sum(ws))
            if mass <= 1e-28 * total:
                continue
            merged_l.append(float(np.average(ls, weights=ws)))
            merged_w.append(mass)
        return SpectralMeasure(atoms=merged_l, weights=merged_w)

    def spectral_measure(self, coeffs: JacobiCoeffs, psi: np.ndarray) -> SpectralMeasure:
        """
        Spectral measure of psi: atoms at the eigenvalues with weights |<v_i, psi>|^2

        Raises:
            DenseLimitError: Above DENSE_LIMIT_JACOBI rows
            ZeroStateError: For psi = 0
        """
        psi = np.asarray(psi)
        if not np.any(psi):
            raise ZeroStateError("state vector is identically zero")
        w, V = self.eigendecompose(coeffs)
        weights = np.abs(V.T @ psi) ** 2
        measure = self.measure_from_overlaps(w, weights)
        logger.info(f"Spectral measure with {measure.atoms.size} atoms, total {measure.total:.12g}")
        return measure

    def m_function(self, measure: SpectralMeasure, z):
        """Borel transform sum_i w_i / (lambda_i - z); accepts scalar or array z"""
        z_arr = np.asarray(z, dtype=np.complex128)
        values = (measure.weights[:, None] / (measure.atoms[:, None] - z_arr.reshape(1, -1))).sum(axis=0)
        if z_arr.ndim == 0:
            return complex(values[0])
        return values.reshape(z_arr.shape)

    def shift_ops_check(self, coeffs: JacobiCoeffs, beta: float, f: np.ndarray,
                        g: Optional[np.ndarray] = None) -> ShiftOpsReport:
        """
        Check Hf = (Delta Delta* - [k = 1] delta_1) f and the conjugation rules for M_beta

        P f(n) = a(n) f(n+1), P* f(n) = a(n-1) f(n-1), Delta = P - I, Delta* = P* - I,
        M_beta f(n) = beta^n f(n). Deviations are scaled by max|f|.

        Raises:
            RangeError: If f is not finitely supported inside the truncation
            OverflowError: If beta^n leaves the float range on the support
        """
        if beta <= 0:
            raise ParamError("beta must be greater than 0")
        f = np.asarray(f, dtype=float)
        N = coeffs.N
        if f.shape != (N,):
            raise RangeError(f"f has shape {f.shape}, expected ({N},)")
        if f[-1] != 0:
            raise RangeError("f must vanish on the last row of the truncation")
        support = np.flatnonzero(f)
        if support.size == 0:
            raise ZeroStateError("f is identically zero")
        last = int(support[-1]) + 1
        if (last + 1) * abs(np.log(beta)) > 700:
            raise OverflowError(f"beta^n overflows on the support of f (n up to {last + 1})")

        a = np.append(coeffs.b, 0.0)
        n = np.arange(1, N + 1, dtype=float)

        def P(h):
            out = np.zeros_like(h)
            out[:-1] = a[:h.size - 1] * h[1:]
            return out

        def P_star(h):
            out = np.zeros_like(h)
            out[1:] = a[:h.size - 1] * h[:-1]
            return out

        def delta(h):
            return P(h) - h

        def delta_star(h):
            return P_star(h) - h

        scale = max(float(np.max(np.abs(f))), 1e-300)
        Hf = coeffs.apply(f)
        factorized = delta(delta_star(f))
        if coeffs.k == 1:
            factorized[0] -= f[0]
        laplacian_dev = float(np.max(np.abs(Hf - factorized))) / scale

        if g is None:
            g = np.cos(n) * (f != 0)
        adjoint_dev = abs(float(np.dot(P(g), f) - np.dot(g, P_star(f)))) / scale

        # f vanishes past row last + 1, so the conjugations only need that prefix
        m = last + 1
        fw = f[:m]
        weights = beta ** n[:m]
        conj_delta = delta(weights * fw) / weights
        conj_delta_dev = float(np.max(np.abs(conj_delta - (beta * P(fw) - fw)))) / scale
        conj_star = delta_star(weights * fw) / weights
        conj_star_dev = float(np.max(np.abs(conj_star - (P_star(fw) / beta - fw)))) / scale

        return ShiftOpsReport(
            beta=beta,
            laplacian_factorization=laplacian_dev,
            adjoint=adjoint_dev,
            conjugated_delta=conj_delta_dev,
            conjugated_delta_star=conj_star_dev,
            support=(int(support[0]) + 1, last)
        )

    def kernel_bound_check(self, coeffs: JacobiCoeffs, z: complex, gamma: float,
                           pairs: List[Tuple[int, int]]) -> KernelBoundReport:
        """
        Compare |<delta_i, (H - z)^-1 delta_j>| with alpha_z(gamma)^-|i-j| (1/eta_z) ((1+gamma)/(1-gamma))^2

        Raises:
            DenseLimitError: Above DENSE_LIMIT_JACOBI rows (eta_z needs the spectrum)
        """
        if not 0 < gamma < 1:
            raise ParamError("gamma must lie in (0, 1)")
        z = complex(z)
        eigenvalues = self.eigenvalues(coeffs)
        eta = float(np.min(np.abs(eigenvalues - z)))
        params = KernelBoundParams.from_distance(eta, z, gamma)

        columns = {}
        entries = []
        for i, j in pairs:
            if not (1 <= i <= coeffs.N and 1 <= j <= coeffs.N):
                raise RangeError(f"pair ({i}, {j}) outside 1..{coeffs.N}")
            if j not in columns:
                e = np.zeros(coeffs.N)
                e[j - 1] = 1.0
                columns[j] = self.resolvent_apply(coeffs, z, e)
            lhs = float(abs(columns[j][i - 1]))
            rhs = params.bound(abs(i - j))
            entries.append(KernelBoundEntry(i=i, j=j, lhs=lhs, rhs=rhs, violation=lhs > rhs * (1 + 1e-9)))

        report = KernelBoundReport(z=(z.real, z.imag), gamma=gamma, eta=eta, alpha=params.alpha, entries=entries)
        if report.violations:
            logger.warning(f"Kernel bound violated on {report.violations} of {len(entries)} pairs at z={z}")
        return report

    def truncated_free(self, coeffs: JacobiCoeffs, L_N: int, size: int) -> TruncatedFree:
        """
        Keep rows 1..L_N (and the coupling from L_N to L_N + 1), free beyond

        Raises:
            RangeError: Unless 1 <= L_N < size and L_N is inside the input block
        """
        if not 1 <= L_N < size:
            raise RangeError(f"need 1 <= L_N < size, got L_N={L_N}, size={size}")
        if L_N > coeffs.N:
            raise RangeError(f"L_N={L_N} beyond the input block of length {coeffs.N}")

        d = np.full(size, 2.0)
        b = np.ones(size - 1)
        d[:L_N] = coeffs.d[:L_N]
        b[:L_N - 1] = coeffs.b[:L_N - 1]
        if L_N < coeffs.N:
            b[L_N - 1] = coeffs.b[L_N - 1]
        elif coeffs.weights is not None:
            b[L_N - 1] = np.sqrt(coeffs.weights[L_N - 1])
        out = JacobiCoeffs(k=coeffs.k, offset=coeffs.offset, d=d, b=b)
        return TruncatedFree(base=coeffs, L_N=L_N, size=size, coeffs=out)


jacobi_service = JacobiService()
