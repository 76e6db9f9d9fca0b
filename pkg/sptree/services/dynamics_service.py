import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from sptree.core.config import settings
from sptree.core.exceptions import (
    ParamError, QuadratureError, ZeroStateError, InsufficientDataError, HypothesisWindowError,
    TailWarning, RangeError
)
from sptree.schemas.dynamics import (
    TimeAverageProfile, MomentCurve, BetaEstimate, EnergyIntegrals, EscapeBoundFit, EnvelopeReport, C3Fit
)
from sptree.schemas.jacobi import JacobiCoeffs, SpectralMeasure
from sptree.schemas.tree import TreeParams
from sptree.services.cache_service import cache_service
from sptree.services.jacobi_service import jacobi_service

logger = logging.getLogger(__name__)

EIGENSUM_TOL = 1e-8
QUADRATURE_TOL = 1e-4
TAIL_RATIO = 1e-10
ATOM_FLOOR = 1e-32
PAIR_CHUNK = 256
MARGIN = 10.0
TAIL_REACH = 1e8


def intermittency_target(gamma: float, p: float) -> float:
    """(p + 1)/(p + 1/gamma)"""
    return (p + 1.0) / (p + 1.0 / gamma)


def crossover_exponent(gamma: float, p: float) -> float:
    """A = (p + 1/gamma)/(p + 1)"""
    return (p + 1.0 / gamma) / (p + 1.0)


def abel_infimum_constant(p: float) -> float:
    """c(p) with inf_{x>0} (x^-p + K x) = c(p) K^(p/(p+1))"""
    return p ** (-p / (p + 1.0)) + p ** (1.0 / (p + 1.0))


def dimension_window(gamma: float) -> Tuple[float, float]:
    """Range gamma <= dim <= 2 gamma/(1 + gamma) expected for the spectral measure"""
    return gamma, 2.0 * gamma / (1.0 + gamma)


def _geometric_panels(start: float, stop: float) -> np.ndarray:
    edges = [start]
    while edges[-1] < stop:
        edges.append(edges[-1] * 2.0)
    return np.array(edges)


class DynamicsService:
    """Service for Abel time averages, transport moments and their bounds"""

    # --- time averages -------------------------------------------------------

    def _eigensum_profile(self, coeffs: JacobiCoeffs, psi: np.ndarray, T: float) -> np.ndarray:
        w, V = jacobi_service.eigendecompose(coeffs)
        c = V.T @ psi
        keep = np.abs(c) ** 2 >= ATOM_FLOOR * float(np.vdot(psi, psi).real)
        lam = w[keep]
        X = V[:, keep] * c[keep]
        a = np.zeros(coeffs.N)
        for start in range(0, lam.size, PAIR_CHUNK):
            sl = slice(start, start + PAIR_CHUNK)
            K = 1.0 / (1.0 + 1j * T * (lam[:, None] - lam[None, sl]))
            a += np.real(np.sum((X @ K) * np.conj(X[:, sl]), axis=1))
        return a

    def quadrature_nodes(self, coeffs: JacobiCoeffs, T: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Energy nodes and weights for (eps/pi) int |((H - E - i eps)^-1 psi)(n)|^2 dE, eps = 1/(2T)

        Panels of width QUADRATURE_PANEL_FRACTION * eps cover [min - 10 eps, max + 10 eps];
        geometric panels carry both tails out to TAIL_REACH times the spectral scale.
        """
        eps = 1.0 / (2.0 * T)
        lo, hi = jacobi_service.spectrum_bounds(coeffs)
        core_lo, core_hi = lo - MARGIN * eps, hi + MARGIN * eps

        width = settings.QUADRATURE_PANEL_FRACTION * eps
        panels = max(1, int(math.ceil((core_hi - core_lo) / width)))
        edges = np.linspace(core_lo, core_hi, panels + 1)
        x, w = leggauss(settings.QUADRATURE_GL_NODES)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = [(mid[:, None] + half[:, None] * x[None, :]).ravel()]
        weights = [(half[:, None] * w[None, :]).ravel()]

        tx, tw = leggauss(settings.QUADRATURE_TAIL_NODES)
        reach = TAIL_REACH * max(1.0, hi - lo, abs(lo), abs(hi))
        dist = _geometric_panels(MARGIN * eps, reach)
        t_half = 0.5 * np.diff(dist)
        t_mid = 0.5 * (dist[1:] + dist[:-1])
        offsets = (t_mid[:, None] + t_half[:, None] * tx[None, :]).ravel()
        t_weights = (t_half[:, None] * tw[None, :]).ravel()
        nodes += [hi + offsets, lo - offsets]
        weights += [t_weights, t_weights]
        return np.concatenate(nodes), np.concatenate(weights)

    def _quadrature_profile(self, coeffs: JacobiCoeffs, psi: np.ndarray, T: float) -> np.ndarray:
        eps = 1.0 / (2.0 * T)
        energies, weights = self.quadrature_nodes(coeffs, T)
        a = np.zeros(coeffs.N)
        chunk = settings.QUADRATURE_CHUNK
        for start in range(0, energies.size, chunk):
            sl = slice(start, start + chunk)
            U = jacobi_service.resolvent_sweep(coeffs, energies[sl] + 1j * eps, psi)
            a += (np.abs(U) ** 2) @ weights[sl]
        lo, hi = jacobi_service.spectrum_bounds(coeffs)
        reach = _geometric_panels(MARGIN * eps, TAIL_REACH * max(1.0, hi - lo, abs(lo), abs(hi)))[-1]
        # beyond the last tail panel |u(n)|^2 ~ |psi(n)|^2 / dist^2 on both sides
        a += 2.0 * np.abs(psi) ** 2 / reach
        return eps / math.pi * a

    def time_average_profile(self, coeffs: JacobiCoeffs, psi: np.ndarray, T: float,
                             method: str = "eigensum", use_cache: bool = False) -> TimeAverageProfile:
        """
        a(n, T) = (1/T) int_0^inf e^(-t/T) |(e^(-itH) psi)(n)|^2 dt

        eigensum: sum_{i,j} v_i(n) c_i conj(c_j) v_j(n) / (1 + iT(lambda_i - lambda_j)).
        quadrature: (eps/pi) int |((H - E - i eps)^-1 psi)(n)|^2 dE with eps = 1/(2T).

        Raises:
            DenseLimitError: eigensum above the dense limit
            QuadratureError: If the mass check fails by more than 1e-4
        """
        psi = np.asarray(psi)
        if psi.shape != (coeffs.N,):
            raise RangeError(f"state has shape {psi.shape}, expected ({coeffs.N},)")
        norm = float(np.vdot(psi, psi).real)
        if norm == 0:
            raise ZeroStateError("state vector is identically zero")
        if T <= 0:
            raise ParamError("T must be greater than 0")
        if method not in ("eigensum", "quadrature"):
            raise ParamError(f"unknown method '{method}'")

        key = None
        a = None
        if use_cache and method == "quadrature":
            key = cache_service.make_key(
                coeffs.digest_bytes(), np.asarray(psi, dtype=np.complex128), float(T),
                settings.QUADRATURE_PANEL_FRACTION, settings.QUADRATURE_GL_NODES, settings.QUADRATURE_TAIL_NODES
            )
            a = cache_service.load(key)
            if a is not None and a.size != coeffs.N:
                a = None

        if a is None:
            if method == "eigensum":
                a = self._eigensum_profile(coeffs, psi, T)
            else:
                a = self._quadrature_profile(coeffs, psi, T)
            if key is not None:
                cache_service.store(key, a)

        a = np.maximum(a, 0.0)
        mass_error = abs(float(a.sum()) - norm) / norm
        tol = EIGENSUM_TOL if method == "eigensum" else QUADRATURE_TOL
        if mass_error > tol:
            raise QuadratureError(
                f"mass check failed at T={T}: relative error {mass_error:.2e} above {tol:.0e} ({method})"
            )
        peak = float(a.max())
        tail_flag = bool(a[-1] > TAIL_RATIO * peak)
        logger.debug(f"Profile at T={T:.4g} ({method}): mass error {mass_error:.2e}, tail flag {tail_flag}")
        return TimeAverageProfile(T=float(T), a=a, method=method, norm=norm, mass_error=mass_error,
                                  tail_flag=tail_flag)

    def time_average_profiles(self, coeffs: JacobiCoeffs, psi: np.ndarray, times: Sequence[float],
                              method: str = "eigensum", workers: int = 1,
                              use_cache: bool = False) -> List[TimeAverageProfile]:
        """Profiles over a T grid, returned in grid order"""
        def run(T):
            return self.time_average_profile(coeffs, psi, T, method, use_cache)

        if workers <= 1:
            return [run(T) for T in times]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, times))

    # --- moments ---------------------------------------------------------------

    def moment(self, profile: TimeAverageProfile, p: float) -> float:
        """sum_n n^p a(n, T); emits TailWarning when the truncation tail is significant"""
        if p < 0:
            raise ParamError("moment order must be nonnegative")
        if profile.tail_flag:
            warnings.warn(
                f"profile at T={profile.T:.4g} has a(N)/max a = {profile.a[-1] / profile.a.max():.2e}",
                TailWarning
            )
        n = np.arange(1, profile.N + 1, dtype=float)
        return float(np.dot(n ** p, profile.a))

    def tail_moment(self, profile: TimeAverageProfile, p: float, start: int) -> float:
        """sum_{n >= start} n^p a(n, T)"""
        n = np.arange(1, profile.N + 1, dtype=float)
        mask = n >= start
        return float(np.dot(n[mask] ** p, profile.a[mask]))

    def curve_from_profiles(self, profiles: Sequence[TimeAverageProfile], p: float) -> MomentCurve:
        samples = []
        notes = []
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", TailWarning)
            for profile in profiles:
                samples.append((profile.T, self.moment(profile, p)))
        notes.extend(str(w.message) for w in caught if issubclass(w.category, TailWarning))
        for note in notes:
            logger.warning(f"Truncation tail: {note}")
        return MomentCurve(p=p, samples=samples, warnings=notes)

    def moment_curve(self, coeffs: JacobiCoeffs, psi: np.ndarray, times: Sequence[float], p: float,
                     method: str = "eigensum", workers: int = 1) -> MomentCurve:
        profiles = self.time_average_profiles(coeffs, psi, times, method, workers)
        return self.curve_from_profiles(profiles, p)

    def escape_mass(self, profile: TimeAverageProfile, sites: Iterable[int]) -> float:
        """P(S, T) = sum_{n in S} a(n, T) over 1-based sites inside the truncation"""
        idx = np.array(sorted(set(int(s) for s in sites)), dtype=int)
        if idx.size == 0:
            return 0.0
        if idx[0] < 1 or idx[-1] > profile.N:
            raise RangeError(f"sites must lie in 1..{profile.N}")
        return float(profile.a[idx - 1].sum())

    def escape_mass_beyond(self, profile: TimeAverageProfile, M: float) -> float:
        """P({M ~ inf}, T): the mass on sites n >= M"""
        start = max(1, int(math.ceil(M)))
        return float(profile.a[start - 1:].sum()) if start <= profile.N else 0.0

    # --- energy integrals ------------------------------------------------------

    def energy_integrals(self, measure: SpectralMeasure, epsilon: float, B: Tuple[float, float]) -> EnergyIntegrals:
        """
        I = eps int_B |Im m(E + i eps)|^2 dE and J = int_B mu(dx) int mu(dy) eps^2/((x - y)^2 + eps^2)

        J is the exact double sum over atoms; I uses Gauss-Legendre panels of width <= eps/4.
        """
        if epsilon <= 0:
            raise ParamError("epsilon must be greater than 0")
        a, b = B
        if not a < b:
            raise ParamError("B must be a nondegenerate interval")

        lam, w = measure.atoms, measure.weights
        inside = (lam >= a) & (lam <= b)
        A = float(w[inside].sum())
        xs, wx = lam[inside], w[inside]
        J = 0.0
        for start in range(0, xs.size, PAIR_CHUNK):
            sl = slice(start, start + PAIR_CHUNK)
            diff = xs[sl, None] - lam[None, :]
            J += float(wx[sl] @ (epsilon ** 2 / (diff ** 2 + epsilon ** 2)) @ w)

        gl_x, gl_w = leggauss(8)
        panels = max(1, int(math.ceil((b - a) / (0.25 * epsilon))))
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        E = (mid[:, None] + half[:, None] * gl_x[None, :]).ravel()
        weights = (half[:, None] * gl_w[None, :]).ravel()
        I = 0.0
        step = max(1, 2 ** 22 // max(lam.size, 1))
        for start in range(0, E.size, step):
            sl = slice(start, start + step)
            im_m = (w[None, :] * epsilon / ((lam[None, :] - E[sl, None]) ** 2 + epsilon ** 2)).sum(axis=1)
            I += float(np.dot(weights[sl], im_m ** 2))
        I *= epsilon

        M_T = A * A / (16.0 * J) if J > 0 else math.inf
        return EnergyIntegrals(epsilon=epsilon, window=(a, b), I=I, J=J, A=A, M_T=M_T)

    def c3_fit(self, measure: SpectralMeasure, epsilons: Sequence[float],
               B: Tuple[float, float] = (1.0, 3.0)) -> C3Fit:
        """
        Fit the constant in J(eps, B) <= C_3 I(eps, B) as the largest ratio J/I over the eps grid

        stability is the spread max/min of the ratios; both stay None when mu(B) = 0.
        """
        eps = sorted(float(e) for e in epsilons)
        if not eps:
            raise InsufficientDataError("c3_fit needs at least one epsilon")
        ratios = []
        for epsilon in eps:
            integrals = self.energy_integrals(measure, epsilon, B)
            if integrals.A <= 0 or integrals.I <= 0:
                logger.info(f"No spectral mass in B = {B}; C_3 fit skipped")
                return C3Fit(window=tuple(B), epsilons=eps, ratios=[])
            ratios.append(integrals.J / integrals.I)
        c3 = max(ratios)
        stability = c3 / min(ratios)
        logger.info(f"C_3 fit on B={B}: {c3:.4g} (spread {stability:.3f} over {len(eps)} values of eps)")
        return C3Fit(window=tuple(B), epsilons=eps, ratios=ratios, c3=c3, stability=stability)

    def escape_threshold_check(self, coeffs: JacobiCoeffs, psi: np.ndarray, T: float,
                               B: Tuple[float, float]) -> Tuple[EnergyIntegrals, float, bool]:
        """
        P({M_T ~ inf}, T) >= A/2 with M_T = A^2/(16 J(1/T, B)), evaluated by the exact eigensum

        Returns:
            (integrals, escape mass, verdict)
        """
        measure = jacobi_service.spectral_measure(coeffs, psi)
        integrals = self.energy_integrals(measure, 1.0 / T, B)
        if integrals.A <= 0:
            raise ParamError(f"the state has no spectral mass in B = {B}")
        profile = self.time_average_profile(coeffs, psi, T, "eigensum")
        mass = self.escape_mass_beyond(profile, integrals.M_T)
        passed = mass >= integrals.A / 2.0 - 1e-12 * profile.norm
        logger.info(
            f"Escape threshold at T={T:.4g}: M_T={integrals.M_T:.4g}, P={mass:.6g}, A/2={integrals.A / 2:.6g}"
        )
        return integrals, mass, passed

    def energy_lower_bound(self, I: float, p: float, L_N: float, T: float, gamma: float, q_N: float) -> float:
        """I^-p + (L_N^(p+1+q) + T^(p+1) L_N^((gamma-1)/gamma + q)) I"""
        K = L_N ** (p + 1 + q_N) + T ** (p + 1) * L_N ** ((gamma - 1) / gamma + q_N)
        return I ** (-p) + K * I

    # --- exponents -------------------------------------------------------------

    def beta_estimate(self, curve: MomentCurve, gamma: Optional[float] = None) -> BetaEstimate:
        """
        Slopes of log <|X|^p> against log T on windows spanning at least an octave

        beta_hat is the smallest slope over the trailing half of the windows divided
        by p, clipped at 0; the largest one is reported as the upper proxy.

        Raises:
            InsufficientDataError: Fewer than 8 samples or less than 3 decades of T
        """
        T = curve.times
        M = curve.values
        if T.size < 8:
            raise InsufficientDataError(f"need at least 8 samples, got {T.size}")
        if T[-1] / T[0] < 1e3 * (1 - 1e-9):
            raise InsufficientDataError(f"T grid spans {math.log10(T[-1] / T[0]):.2f} decades, need 3")

        logT, logM = np.log(T), np.log(M)
        local = []
        for i in range(T.size):
            j = i + 2
            while j < T.size and logT[j] - logT[i] < math.log(2):
                j += 1
            if j >= T.size:
                break
            slope = np.polyfit(logT[i:j + 1], logM[i:j + 1], 1)[0]
            local.append((float(math.exp(logT[i:j + 1].mean())), float(slope), float(T[i])))
        if len(local) < 2:
            raise InsufficientDataError("T grid too coarse for octave windows")

        trailing = local[len(local) // 2:]
        slopes = [s for _, s, _ in trailing]
        raw_min = min(slopes) / curve.p
        max_slope = max(slopes) / curve.p
        beta_hat = max(0.0, raw_min)
        if beta_hat > 1.1:
            logger.warning(f"beta_hat={beta_hat:.3f} exceeds the ballistic cap")
        target = intermittency_target(gamma, curve.p) if gamma is not None else None
        logger.info(f"beta_hat(p={curve.p})={beta_hat:.4f}, max slope {max_slope:.4f}, target {target}")
        return BetaEstimate(
            p=curve.p,
            beta_hat=beta_hat,
            raw_min_slope=raw_min,
            max_slope=max_slope,
            window=(trailing[0][2], float(T[-1])),
            local_slopes=[(t, s) for t, s, _ in local],
            target=target
        )

    # --- bounds ------------------------------------------------------------------

    def sparse_scale(self, params: TreeParams, N: int) -> Tuple[int, float]:
        positions = params.sparse_positions
        if not 1 <= N <= len(positions):
            raise RangeError(f"barrier count {N} outside 1..{len(positions)}")
        L_N = positions[N - 1]
        L_next = positions[N] if N < len(positions) else math.inf
        return L_N, L_next

    def q_exponent(self, params: TreeParams, N: int, c5: float) -> float:
        """q_N from L_N^q_N = C_5^-(N+1) prod_{j<N} L_j^((gamma-1)/gamma)"""
        L_N, _ = self.sparse_scale(params, N)
        g = params.gamma
        log_rhs = -(N + 1) * math.log(c5) + (g - 1) / g * sum(math.log(L) for L in params.sparse_positions[:N - 1])
        return log_rhs / math.log(L_N)

    def escape_bound_fit(self, params: TreeParams, N: int, times: Sequence[float],
                         tail_masses: Sequence[float], window_masses: Sequence[float],
                         I_values: Sequence[float]) -> EscapeBoundFit:
        """
        Smallest C_5 consistent with the three escape bounds on their windows

        tail_masses are P({T ~ inf}, T), window_masses P({L_N/4 ~ L_N/2}, T) and
        I_values I_{delta_1}(1/T, B_nu) at each T.
        """
        L_N, L_next = self.sparse_scale(params, N)
        g = params.gamma
        logs = [math.log(L) for L in params.sparse_positions[:N]]
        log_prod_N = (g - 1) / g * sum(logs)
        log_prod_prev = (1 - g) / g * sum(logs[:-1])

        per_point = []
        for T, tail, window, I in zip(times, tail_masses, window_masses, I_values):
            energy = 1.0 / T + I
            if L_N <= T <= L_next / 4 and tail > 0:
                implied = math.exp((math.log(T * energy) + log_prod_N - math.log(tail)) / (N + 1))
                per_point.append({"T": T, "case": 1.0, "c5": implied})
            if L_N / 4 <= T <= L_N and tail > 0:
                implied = math.exp((math.log(L_N * energy) + log_prod_N - math.log(tail)) / (N + 1))
                per_point.append({"T": T, "case": 2.0, "c5": implied})
            if L_N / 4 <= T and window > 0:
                implied = math.exp((math.log(L_N * energy) + log_prod_prev - math.log(window)) / N)
                per_point.append({"T": T, "case": 3.0, "c5": implied})
        if not per_point:
            raise HypothesisWindowError(f"no grid point lies in the escape windows around L_N={L_N}")

        c5 = max(1.0, max(p["c5"] for p in per_point))
        return EscapeBoundFit(c5=c5, q_N=self.q_exponent(params, N, c5), per_point=per_point)

    def bound_envelopes(self, params: TreeParams, p: float, times: Sequence[float], N: int,
                        measured: MomentCurve, c5: float = 1.0, slack: float = 4.0,
                        fraction: float = 0.95) -> EnvelopeReport:
        """
        Sandwich the measured moments between the lower and upper bound shapes

        lower(T) = (L_N^(p+1) + T^(p+1) L_N^((gamma-1)/gamma))^(p/(p+1)) on [L_N/4, L_{N+1}/4]
        upper(T) = L_N^p + T^(p+1) L_N^(-1/gamma) on [L_N, L_N^(1/gamma)]

        Constants are fitted as log-means of measured/shape, widened by `slack`.

        Raises:
            HypothesisWindowError: If a grid point lies outside both windows
        """
        L_N, L_next = self.sparse_scale(params, N)
        g = params.gamma
        lower_window = (L_N / 4.0, L_next / 4.0)
        upper_window = (float(L_N), L_N ** (1.0 / g))
        times = np.asarray(times, dtype=float)
        in_lower = (times >= lower_window[0]) & (times <= lower_window[1])
        in_upper = (times >= upper_window[0]) & (times <= upper_window[1])
        outside = ~(in_lower | in_upper)
        if outside.any():
            raise HypothesisWindowError(f"T = {times[outside].tolist()} outside both bound windows")

        log_value = np.interp(np.log(times), np.log(measured.times), np.log(measured.values))
        value = np.exp(log_value)

        def lower_shape(t):
            return (L_N ** (p + 1) + t ** (p + 1) * L_N ** ((g - 1) / g)) ** (p / (p + 1))

        def upper_shape(t):
            return L_N ** p + t ** (p + 1) * L_N ** (-1.0 / g)

        lower_constant = upper_constant = None
        if in_lower.any():
            lower_constant = float(np.exp(np.mean(log_value[in_lower] - np.log(lower_shape(times[in_lower]))))) / slack
        if in_upper.any():
            upper_constant = float(np.exp(np.mean(log_value[in_upper] - np.log(upper_shape(times[in_upper]))))) * slack

        points = []
        for t, v, lo_ok, up_ok in zip(times, value, in_lower, in_upper):
            lower = lower_constant * lower_shape(t) if lo_ok else None
            upper = upper_constant * upper_shape(t) if up_ok else None
            inside = (lower is None or v >= lower) and (upper is None or v <= upper)
            points.append({"T": float(t), "moment": float(v), "lower": lower, "upper": upper, "inside": inside})
        frac = sum(1 for pt in points if pt["inside"]) / len(points)

        A = crossover_exponent(g, p)
        pivot = math.exp(brentq(
            lambda s: (p + 1) * math.log(L_N) - ((p + 1) * s + (g - 1) / g * math.log(L_N)),
            0.0, 4.0 * A * math.log(L_N) + 1.0
        ))
        report = EnvelopeReport(
            p=p,
            N=N,
            L_N=L_N,
            crossover_exponent=A,
            pivot_T=pivot,
            pivot_offset_octaves=math.log2(pivot / L_N ** A),
            target=intermittency_target(g, p),
            q_N=self.q_exponent(params, N, c5),
            c_p=abel_infimum_constant(p),
            lower_constant=lower_constant,
            upper_constant=upper_constant,
            lower_window=lower_window,
            upper_window=upper_window,
            points=points,
            fraction_inside=frac,
            passed=frac >= fraction
        )
        logger.info(f"Envelopes p={p}, N={N}: {frac:.2%} inside, pivot T={pivot:.4g} vs L_N^A={L_N ** A:.4g}")
        return report


dynamics_service = DynamicsService()
