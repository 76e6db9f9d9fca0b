import logging
import math
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from sptree.core.exceptions import ParamError, ResolutionError
from sptree.schemas.fractal import LocalDimension, DimensionProfile, HolderResult, FourierAbelReport
from sptree.schemas.hsfc import SmoothTestFunction
from sptree.schemas.jacobi import SpectralMeasure
from sptree.services.hsfc_service import hsfc_service

logger = logging.getLogger(__name__)

PAIR_CHUNK = 512
Amplitude = Union[None, float, SmoothTestFunction, Callable[[np.ndarray], np.ndarray]]


def median_gap(measure: SpectralMeasure) -> float:
    if measure.atoms.size < 2:
        return 0.0
    return float(np.median(np.diff(measure.atoms)))


class FractalService:
    """Service for dimension estimates and Fourier decay of atomic measures"""

    # --- constructors --------------------------------------------------------

    def atomic_measure(self, atoms: Sequence[float], weights: Sequence[float]) -> SpectralMeasure:
        """Sorted measure; coinciding atoms are merged"""
        atoms = np.asarray(atoms, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if atoms.shape != weights.shape:
            raise ParamError("atoms and weights must have the same length")
        order = np.argsort(atoms, kind="stable")
        unique, inverse = np.unique(atoms[order], return_inverse=True)
        merged = np.zeros(unique.size)
        np.add.at(merged, inverse, weights[order])
        return SpectralMeasure(atoms=unique, weights=merged)

    def lebesgue_measure(self, n: int, a: float = 0.0, b: float = 4.0) -> SpectralMeasure:
        """n equal atoms at the cell midpoints of [a, b], total mass 1"""
        if n < 1 or not a < b:
            raise ParamError("need n >= 1 and a < b")
        h = (b - a) / n
        return SpectralMeasure(atoms=a + h * (np.arange(n) + 0.5), weights=np.full(n, 1.0 / n))

    def cantor_measure(self, depth: int) -> SpectralMeasure:
        """Middle-thirds hierarchy: 2^depth atoms at the left ends of the level-depth intervals"""
        if depth < 0:
            raise ParamError("depth must be nonnegative")
        atoms = np.zeros(1)
        for level in range(1, depth + 1):
            atoms = np.concatenate([atoms, atoms + 2.0 * 3.0 ** (-level)])
        atoms.sort()
        return SpectralMeasure(atoms=atoms, weights=np.full(atoms.size, 2.0 ** (-depth)))

    # --- local dimension -------------------------------------------------------

    def ball_masses(self, measure: SpectralMeasure, x: float, deltas: np.ndarray) -> np.ndarray:
        """mu([x - delta, x + delta]) for every delta"""
        cumulative = np.concatenate([[0.0], np.cumsum(measure.weights)])
        lo = np.searchsorted(measure.atoms, x - deltas, side="left")
        hi = np.searchsorted(measure.atoms, x + deltas, side="right")
        return cumulative[hi] - cumulative[lo]

    def local_dimension(self, measure: SpectralMeasure, x: float, delta_grid: Sequence[float],
                        strict: bool = True, window: Optional[int] = None) -> LocalDimension:
        """
        Slope proxy for liminf log mu([x - delta, x + delta]) / log delta

        Slopes of log mu against log delta are fitted on windows of consecutive
        deltas (default max(3, ceil(m/2)) of them); the smallest one is returned.

        Raises:
            ResolutionError: If strict and the grid reaches below the median atom gap
        """
        deltas = np.sort(np.asarray(delta_grid, dtype=float))
        if deltas.size < 2 or deltas[0] <= 0:
            raise ParamError("delta_grid needs at least two positive values")
        gap = median_gap(measure)
        resolved = bool(deltas[0] >= gap)
        if not resolved and strict:
            raise ResolutionError(
                f"smallest delta {deltas[0]:.3g} is below the median atom gap {gap:.3g}"
            )

        masses = self.ball_masses(measure, x, deltas)
        positive = masses > 0
        if positive.sum() < 2:
            return LocalDimension(x=x, gamma_hat=math.inf, delta_window=(float(deltas[0]), float(deltas[-1])),
                                  slopes=[], resolved=resolved)
        log_d = np.log(deltas[positive])
        log_m = np.log(masses[positive])
        m = log_d.size
        w = min(m, window if window is not None else max(3, math.ceil(m / 2)))
        slopes = [float(np.polyfit(log_d[i:i + w], log_m[i:i + w], 1)[0]) for i in range(m - w + 1)]
        gamma_hat = max(0.0, min(slopes))
        return LocalDimension(
            x=x,
            gamma_hat=gamma_hat,
            delta_window=(float(deltas[0]), float(deltas[-1])),
            slopes=slopes,
            resolved=resolved
        )

    def default_delta_grid(self, measure: SpectralMeasure, points: int = 12) -> np.ndarray:
        """Geometric grid from 10 atom gaps up to 1.25% of the spread"""
        gap = median_gap(measure)
        if measure.spread == 0 or gap == 0:
            return np.geomspace(1e-3, 1e-1, points)
        lo = 10.0 * gap
        hi = max(0.0125 * measure.spread, 5.0 * lo)
        return np.geomspace(lo, hi, points)

    def dim_bounds(self, measure: SpectralMeasure, sample_size: int = 200,
                   delta_grid: Optional[Sequence[float]] = None) -> DimensionProfile:
        """
        (essinf, esssup) proxies: 5% and 95% quantiles of the local dimension at
        atoms sampled deterministically in proportion to their weight
        """
        if sample_size < 1:
            raise ParamError("sample_size must be at least 1")
        cumulative = np.cumsum(measure.weights)
        targets = (np.arange(sample_size) + 0.5) / sample_size * cumulative[-1]
        idx = np.minimum(np.searchsorted(cumulative, targets, side="left"), measure.atoms.size - 1)
        points = measure.atoms[idx]

        grid = np.asarray(delta_grid, dtype=float) if delta_grid is not None else self.default_delta_grid(measure)
        estimates = [self.local_dimension(measure, float(x), grid, strict=False, window=grid.size) for x in points]
        gammas = np.array([e.gamma_hat for e in estimates])
        lower = float(np.quantile(gammas, 0.05))
        upper = float(np.quantile(gammas, 0.95))
        resolved = all(e.resolved for e in estimates)
        logger.info(f"Dimension bounds from {sample_size} samples: [{lower:.4f}, {upper:.4f}], resolved={resolved}")
        return DimensionProfile(
            points=points.tolist(),
            gamma_hat=gammas.tolist(),
            delta_grid=grid.tolist(),
            dim_lower=lower,
            dim_upper=upper,
            resolved=resolved
        )

    def dim_star_diagnostic(self, measure: SpectralMeasure, beta_hat: float,
                            slack: float = 0.1) -> Tuple[float, bool]:
        """dim^* proxy and the verdict dim^* <= beta_hat + slack"""
        upper = self.dim_bounds(measure).dim_upper
        return upper, upper <= beta_hat + slack

    # --- Holder continuity -----------------------------------------------------

    def holder_constant(self, measure: SpectralMeasure, alpha: float) -> HolderResult:
        """
        sup_I mu(I)/|I|^alpha over intervals of length spread * 2^-j

        Intervals are anchored at atoms, and lengths go down to 8 median gaps
        (at least 3 levels). The sweep is called divergent when log2 of the
        level suprema grows in j with regression slope above min(0.08, alpha/2).
        """
        if not 0 < alpha <= 1:
            raise ParamError("alpha must lie in (0, 1]")
        if measure.atoms.size < 2:
            return HolderResult(alpha=alpha, constant=None, divergent=True, lengths=[], level_sups=[], trend=alpha)

        floor = 8.0 * median_gap(measure)
        lengths = []
        length = measure.spread
        while length >= floor or len(lengths) < 3:
            lengths.append(length)
            length /= 2.0

        cumulative = np.concatenate([[0.0], np.cumsum(measure.weights)])
        start = np.arange(measure.atoms.size)
        sups = []
        for ell in lengths:
            end = np.searchsorted(measure.atoms, measure.atoms + ell, side="right")
            sups.append(float(np.max(cumulative[end] - cumulative[start])) / ell ** alpha)

        levels = np.arange(len(lengths))
        trend = float(np.polyfit(levels, np.log2(sups), 1)[0])
        divergent = trend > min(0.08, 0.5 * alpha)
        return HolderResult(
            alpha=alpha,
            constant=None if divergent else max(sups),
            divergent=divergent,
            lengths=lengths,
            level_sups=sups,
            trend=trend
        )

    # --- Fourier side ----------------------------------------------------------

    def _amplitudes(self, measure: SpectralMeasure, f: Amplitude) -> np.ndarray:
        if f is None:
            return np.ones(measure.atoms.size)
        if isinstance(f, (int, float, complex)):
            return np.full(measure.atoms.size, f, dtype=np.complex128)
        if isinstance(f, SmoothTestFunction):
            return hsfc_service.evaluate(f, measure.atoms)
        return np.asarray(f(measure.atoms))

    def fourier_transform(self, measure: SpectralMeasure, xi, f: Amplitude = None) -> np.ndarray:
        """(f mu)^(xi) = sum_i f(lambda_i) w_i e^(-i xi lambda_i)"""
        xi = np.asarray(xi, dtype=float)
        v = self._amplitudes(measure, f) * measure.weights
        values = np.exp(-1j * np.outer(xi.ravel(), measure.atoms)) @ v
        return values.reshape(xi.shape)

    def abel_fourier_integral(self, measure: SpectralMeasure, T: float, f: Amplitude = None) -> float:
        """int_0^inf e^(-t/T) |(f mu)^(t)|^2 dt = Re sum_{i,j} v_i conj(v_j) T/(1 + iT(lambda_i - lambda_j))"""
        v = self._amplitudes(measure, f) * measure.weights
        lam = measure.atoms
        total = 0.0
        for start in range(0, lam.size, PAIR_CHUNK):
            sl = slice(start, start + PAIR_CHUNK)
            K = T / (1.0 + 1j * T * (lam[sl, None] - lam[None, :]))
            total += float(np.real(v[sl] @ K @ np.conj(v)))
        return total

    def abel_fourier_quadrature(self, measure: SpectralMeasure, T: float, f: Amplitude = None,
                                nodes: int = 16) -> float:
        """Composite Gauss-Legendre quadrature of the same time integral on [0, 40T]"""
        spread = max(measure.spread, 1e-12)
        width = min(T / 4.0, 0.5 / spread)
        panels = int(math.ceil(40.0 * T / width))
        x, w = leggauss(nodes)
        edges = np.linspace(0.0, 40.0 * T, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        total = 0.0
        step = max(1, 4096 // nodes)
        for start in range(0, panels, step):
            sl = slice(start, start + step)
            t = (mid[sl, None] + half[sl, None] * x[None, :]).ravel()
            weights = (half[sl, None] * w[None, :]).ravel()
            values = np.abs(self.fourier_transform(measure, t, f)) ** 2 * np.exp(-t / T)
            total += float(np.dot(weights, values))
        return total

    def fourier_abel_check(self, measure: SpectralMeasure, alpha: float, times: Sequence[float],
                           f: Amplitude = None, growth: float = 2.0) -> FourierAbelReport:
        """
        T^(alpha-1) int_0^inf e^(-t/T) |(f mu)^(t)|^2 dt / ||f||^2_{L^2(mu)} over a T grid

        Bounded when the maximum over the upper half of the grid is at most `growth`
        times the maximum over the lower half.
        """
        times = sorted(float(t) for t in times)
        if len(times) < 2:
            raise ParamError("need at least two times")
        amp = self._amplitudes(measure, f)
        norm2 = float(np.sum(np.abs(amp) ** 2 * measure.weights))
        if norm2 == 0:
            raise ParamError("f vanishes on the support of the measure")

        values = [(T, T ** (alpha - 1.0) * self.abel_fourier_integral(measure, T, f) / norm2) for T in times]
        half = len(values) // 2
        early = max(v for _, v in values[:half])
        late = max(v for _, v in values[half:])
        ratio = late / early if early > 0 else math.inf
        report = FourierAbelReport(
            alpha=alpha,
            values=values,
            sup=max(v for _, v in values),
            growth=ratio,
            bounded=ratio <= growth
        )
        logger.info(f"Fourier-Abel check alpha={alpha:.4f}: sup={report.sup:.4g}, growth={ratio:.3f}")
        return report


fractal_service = FractalService()
