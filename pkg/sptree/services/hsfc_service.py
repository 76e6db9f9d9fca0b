import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Chebyshev
from numpy.polynomial.legendre import leggauss
from scipy.fft import dct
from scipy.optimize import brentq

from sptree.core.config import settings
from sptree.core.exceptions import ParamError, ResolutionError, QuadratureError, RangeError
from sptree.schemas.hsfc import SmoothTestFunction, HsConfig, BumpProfile, PlateauProfile
from sptree.schemas.jacobi import JacobiCoeffs
from sptree.schemas.reports import KernelDecayReport
from sptree.services.jacobi_service import jacobi_service

logger = logging.getLogger(__name__)

CHEB_START_DEGREE = 16
CHEB_MAX_DEGREE = 16384
CHEB_TAIL_TOL = 1e-12
CHEB_CHOP_TOL = 1e-15
DERIVATIVE_TAIL_TOL = 1e-3


# Taylor coefficient arithmetic; arrays have shape (order + 1, points)

def _exp_series(h: np.ndarray) -> np.ndarray:
    out = np.zeros_like(h)
    out[0] = np.exp(h[0])
    for m in range(1, h.shape[0]):
        acc = np.zeros_like(h[0])
        for j in range(1, m + 1):
            acc += j * h[j] * out[m - j]
        out[m] = acc / m
    return out


def _reciprocal_series(D: np.ndarray) -> np.ndarray:
    out = np.zeros_like(D)
    out[0] = 1.0 / D[0]
    for m in range(1, D.shape[0]):
        acc = np.zeros_like(D[0])
        for j in range(1, m + 1):
            acc += D[j] * out[m - j]
        out[m] = -acc / D[0]
    return out


def _product_series(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.zeros_like(A)
    for m in range(A.shape[0]):
        for j in range(m + 1):
            out[m] += A[j] * B[m - j]
    return out


def _bump_taylor(profile: BumpProfile, x: np.ndarray, order: int) -> np.ndarray:
    u = (x - profile.center) / profile.radius
    inside = np.abs(u) < 1
    u_safe = np.where(inside, u, 0.0)
    m = np.arange(order + 1)[:, None]
    h = -0.5 * ((1 - u_safe) ** -(m + 1.0) + (-1.0) ** m * (1 + u_safe) ** -(m + 1.0))
    alive = inside & (h[0] > -700)
    h = np.where(alive, h, 0.0)
    coeffs = _exp_series(h) * np.where(alive, 1.0, 0.0)
    coeffs *= (profile.scale * math.e) / profile.radius ** m
    return coeffs


def _smoothstep_taylor(t: np.ndarray, order: int) -> np.ndarray:
    """Taylor coefficients in t of S(t) = 1/(1 + exp(1/t - 1/(1-t))), 0 for t <= 0, 1 for t >= 1"""
    inside = (t > 0) & (t < 1)
    t_safe = np.where(inside, t, 0.5)
    m = np.arange(order + 1)[:, None]
    q = (-1.0) ** m * t_safe ** -(m + 1.0) - (1 - t_safe) ** -(m + 1.0)
    positive = q[0] > 0
    h = np.where(positive, -q, q)
    alive = h[0] > -700
    h = np.where(alive, h, 0.0)
    r = _exp_series(h) * np.where(alive, 1.0, 0.0)
    D = r.copy()
    D[0] += 1.0
    R = _reciprocal_series(D)
    S = np.where(positive, -R, R)
    S[0] = np.where(positive, 1.0 - R[0], R[0])

    out = np.zeros((order + 1, t.size))
    out[:, inside] = S[:, inside]
    out[0, t >= 1] = 1.0
    return out


def _plateau_taylor(profile: PlateauProfile, x: np.ndarray, order: int) -> np.ndarray:
    w = profile.width
    m = np.arange(order + 1)[:, None]
    left = _smoothstep_taylor((x - profile.a) / w, order) / w ** m
    right = _smoothstep_taylor((profile.b - x) / w, order) * (-1.0 / w) ** m
    return profile.scale * _product_series(left, right)


def _profile_taylor(profile, x: np.ndarray, order: int) -> np.ndarray:
    if profile.kind == "bump":
        return _bump_taylor(profile, x, order)
    return _plateau_taylor(profile, x, order)


def _factorials(order: int) -> np.ndarray:
    return np.array([math.factorial(r) for r in range(order + 1)], dtype=float)


def chebyshev_fit(func: Callable[[np.ndarray], np.ndarray], a: float, b: float) -> Chebyshev:
    """
    Chebyshev interpolant on [a, b] with adaptive degree

    Doubles the degree until the trailing coefficients fall below 1e-12 of the
    largest one, then chops coefficients below 1e-15 of it.

    Raises:
        ResolutionError: If the tail test still fails at the maximum degree
    """
    degree = CHEB_START_DEGREE
    while True:
        n = degree + 1
        nodes = np.cos(np.pi * (np.arange(n) + 0.5) / n)
        values = np.asarray(func(0.5 * (b - a) * nodes + 0.5 * (a + b)), dtype=float)
        coef = dct(values, type=2) / n
        coef[0] /= 2
        peak = np.max(np.abs(coef))
        if peak == 0:
            return Chebyshev([0.0], domain=[a, b])
        tail = np.max(np.abs(coef[-max(4, n // 8):]))
        if tail <= CHEB_TAIL_TOL * peak:
            keep = np.flatnonzero(np.abs(coef) > CHEB_CHOP_TOL * peak)
            coef = coef[:keep[-1] + 1]
            return Chebyshev(coef, domain=[a, b])
        if degree >= CHEB_MAX_DEGREE:
            raise ResolutionError(
                f"Chebyshev tail {tail / peak:.2e} above {CHEB_TAIL_TOL} at degree {degree}"
            )
        degree *= 2


def cutoff(s: np.ndarray) -> np.ndarray:
    """tau: 1 on |s| <= 1, 0 on |s| >= 2"""
    return _smoothstep_taylor(2.0 - np.abs(np.asarray(s, dtype=float)).ravel(), 0)[0].reshape(np.shape(s))


def cutoff_derivative(s: np.ndarray) -> np.ndarray:
    """tau'(s) for s >= 0"""
    s = np.asarray(s, dtype=float)
    return -_smoothstep_taylor(2.0 - s.ravel(), 1)[1].reshape(s.shape)


class HsfcService:
    """Service for smooth test functions and the Helffer-Sjostrand functional calculus"""

    # --- test function library -------------------------------------------------

    def from_profiles(self, profiles: Sequence, kind: str = "generic", x0: Optional[float] = None,
                      window: Optional[dict] = None) -> SmoothTestFunction:
        profiles = list(profiles)
        if not profiles:
            raise ParamError("at least one profile is needed")
        lo = min(p.support[0] for p in profiles)
        hi = max(p.support[1] for p in profiles)

        def values(x):
            return sum(_profile_taylor(p, np.asarray(x, dtype=float), 0)[0] for p in profiles)

        cheb = chebyshev_fit(values, lo, hi)
        grid = np.linspace(lo, hi, 2049)
        bound = float(np.max(np.abs(values(grid))))
        return SmoothTestFunction(
            support=(lo, hi),
            cheb=cheb,
            kind=kind,
            profiles=profiles,
            bound=bound,
            x0=x0 if x0 is not None else 0.5 * (lo + hi),
            window=window or {}
        )

    def from_callable(self, func: Callable[[np.ndarray], np.ndarray], support: Tuple[float, float],
                      kind: str = "generic") -> SmoothTestFunction:
        """Wrap an arbitrary smooth function vanishing outside support"""
        a, b = support
        cheb = chebyshev_fit(func, a, b)
        grid = np.linspace(a, b, 2049)
        return SmoothTestFunction(
            support=(a, b), cheb=cheb, kind=kind, bound=float(np.max(np.abs(cheb(grid)))), x0=0.5 * (a + b)
        )

    def bump(self, a: float, b: float, scale: float = 1.0) -> SmoothTestFunction:
        """exp(-1/(1-u^2)) bump on [a, b] with peak value scale"""
        if not a < b:
            raise ParamError("bump needs a < b")
        return self.from_profiles([BumpProfile(center=0.5 * (a + b), radius=0.5 * (b - a), scale=scale)])

    def plateau(self, a: float, b: float, width: float, scale: float = 1.0) -> SmoothTestFunction:
        return self.from_profiles([PlateauProfile(a=a, b=b, width=width, scale=scale)])

    def mollifier(self, n: int) -> SmoothTestFunction:
        """f_n supported in [1/n, 4 - 1/n], equal to 1 on [2/n, 4 - 2/n]"""
        if n < 2:
            raise ParamError("mollifier index must be at least 2")
        return self.from_profiles([PlateauProfile(a=1.0 / n, b=4.0 - 1.0 / n, width=1.0 / n)], x0=2.0)

    def make_test_function(self, kind: str, nu: float, center: Optional[float] = None,
                           E0: float = 2.0, c: float = 0.5, width: Optional[float] = None) -> SmoothTestFunction:
        """
        First kind: smooth, supported in B_nu = [nu, 4 - nu], nonzero at x0.
        Second kind: equal to 1 on [E0 - nu, E0 + nu], supported in [E0 - 2 nu, E0 + 2 nu].

        Raises:
            ParamError: For inconsistent windows
        """
        if not 0 < nu < 1:
            raise ParamError("nu must lie in (0, 1)")
        window = {"nu": nu, "lo": nu, "hi": 4.0 - nu}

        if kind == "first":
            if center is None:
                w = width if width is not None else min(nu, (4.0 - 2.0 * nu) / 4.0)
                if w <= 0 or 2 * w > 4.0 - 2.0 * nu:
                    raise ParamError(f"transition width {w} does not fit in B_nu")
                profile = PlateauProfile(a=nu, b=4.0 - nu, width=w)
                return self.from_profiles([profile], kind="first", x0=2.0, window=window)
            radius = min(center - nu, 4.0 - nu - center)
            if radius <= 0:
                raise ParamError(f"center {center} is not inside B_nu = [{nu}, {4 - nu}]")
            profile = BumpProfile(center=center, radius=radius)
            return self.from_profiles([profile], kind="first", x0=center, window=window)

        if kind == "second":
            if not 2 * nu <= E0 <= 4 - 2 * nu:
                raise ParamError(f"[E0 - nu, E0 + nu] must sit inside B_nu; got E0={E0}, nu={nu}")
            if not 0 < c <= 1:
                raise ParamError("c must lie in (0, 1]")
            profile = PlateauProfile(a=E0 - 2 * nu, b=E0 + 2 * nu, width=nu)
            window.update({"E0": E0, "c": c})
            return self.from_profiles([profile], kind="second", x0=E0, window=window)

        raise ParamError(f"unknown test function kind '{kind}'")

    # --- evaluation --------------------------------------------------------------

    def evaluate(self, f: SmoothTestFunction, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        if f.profiles:
            values = sum(_profile_taylor(p, flat, 0)[0] for p in f.profiles)
        else:
            a, b = f.support
            values = np.where((flat >= a) & (flat <= b), f.cheb(flat), 0.0)
        return np.asarray(values).reshape(x.shape)

    def _cheb_derivative(self, f: SmoothTestFunction, r: int) -> Chebyshev:
        cache = f._derivatives
        if r not in cache:
            series = f.cheb.deriv(r) if r > 0 else f.cheb
            coef = series.coef
            peak = np.max(np.abs(coef)) if coef.size else 0.0
            if peak > 0 and coef.size > 8:
                tail = np.max(np.abs(coef[-max(4, coef.size // 8):]))
                if tail > DERIVATIVE_TAIL_TOL * peak:
                    raise ResolutionError(
                        f"Chebyshev degree {f.degree} does not resolve derivative order {r}"
                    )
            cache[r] = series
        return cache[r]

    def taylor(self, f: SmoothTestFunction, x, order: int) -> np.ndarray:
        """f^(r)(x)/r! for r = 0..order, shape (order + 1, points)"""
        flat = np.asarray(x, dtype=float).ravel()
        if f.profiles:
            return sum(_profile_taylor(p, flat, order) for p in f.profiles)
        a, b = f.support
        inside = (flat >= a) & (flat <= b)
        out = np.zeros((order + 1, flat.size))
        facts = _factorials(order)
        for r in range(order + 1):
            out[r] = np.where(inside, self._cheb_derivative(f, r)(flat), 0.0) / facts[r]
        return out

    def derivative(self, f: SmoothTestFunction, x, r: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (self.taylor(f, x, r)[r] * math.factorial(r)).reshape(x.shape)

    # --- norms -------------------------------------------------------------------

    def _split_points(self, f: SmoothTestFunction, r: int) -> List[float]:
        a, b = f.support
        grid = np.linspace(a, b, 4097)
        signs = np.sign(self.derivative(f, grid, r))
        nonzero = np.flatnonzero(signs)
        points = [a]
        for i, j in zip(nonzero[:-1], nonzero[1:]):
            if signs[i] == signs[j]:
                continue
            if j > i + 1:
                # f^(r) vanishes on grid[i+1:j]
                points.append(float(grid[(i + j) // 2]))
                continue
            root = brentq(lambda t: float(self.derivative(f, np.array([t]), r)[0]), grid[i], grid[j],
                          xtol=1e-14, rtol=4 * np.finfo(float).eps)
            points.append(root)
        points.append(b)
        return points

    def _panel_integral(self, func, lo: float, hi: float, panels: int, nodes: np.ndarray,
                        weights: np.ndarray) -> float:
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        w = (half[:, None] * weights[None, :]).ravel()
        return float(np.dot(w, func(x)))

    def triple_norm(self, f: SmoothTestFunction, n: int) -> float:
        """
        sum_{r=0}^{n} int |f^(r)(x)| <x>^(r-1) dx, split at the sign changes of f^(r)

        Raises:
            ResolutionError: If derivatives are unresolved or the quadrature does not settle
        """
        if n < 0:
            raise ParamError("order must be nonnegative")
        if f.is_zero:
            return 0.0
        nodes, weights = leggauss(16)
        total = 0.0
        for r in range(n + 1):
            def integrand(x, r=r):
                return self.derivative(f, x, r) * (1.0 + x * x) ** ((r - 1) / 2.0)

            points = self._split_points(f, r)
            for lo, hi in zip(points[:-1], points[1:]):
                if hi <= lo:
                    continue
                panels = 8
                coarse = self._panel_integral(integrand, lo, hi, panels, nodes, weights)
                while True:
                    panels *= 2
                    fine = self._panel_integral(integrand, lo, hi, panels, nodes, weights)
                    if abs(fine - coarse) <= 1e-10 * max(abs(fine), 1e-300) or abs(fine) < 1e-300:
                        break
                    if panels > 4096:
                        raise ResolutionError(f"norm integral of order {r} did not settle on [{lo}, {hi}]")
                    coarse = fine
                total += abs(fine)
        return total

    def derivative_l1(self, f: SmoothTestFunction, r: int) -> float:
        """int |f^(r)| over the support"""
        nodes, weights = leggauss(16)
        total = 0.0
        points = self._split_points(f, r)
        for lo, hi in zip(points[:-1], points[1:]):
            if hi > lo:
                total += abs(self._panel_integral(lambda x: self.derivative(f, x, r), lo, hi, 64, nodes, weights))
        return total

    # --- almost analytic extension -----------------------------------------------

    def almost_analytic_extension(self, f: SmoothTestFunction, x, y, order: int) -> np.ndarray:
        """(sum_{r<=order} f^(r)(x) (iy)^r / r!) tau(y/<x>)"""
        x = np.asarray(x, dtype=float)
        y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
        coeffs = self.taylor(f, x.ravel(), order)
        powers = (1j * y.ravel())[None, :] ** np.arange(order + 1)[:, None]
        series = (coeffs * powers).sum(axis=0)
        japanese = np.sqrt(1.0 + x.ravel() ** 2)
        return (series * cutoff(y.ravel() / japanese)).reshape(x.shape)

    def _dbar_parts(self, f: SmoothTestFunction, x: np.ndarray, y: np.ndarray, order: int):
        coeffs = self.taylor(f, x, order + 1)
        iy = 1j * y
        powers = iy[None, :] ** np.arange(order + 1)[:, None]
        series = (coeffs[:order + 1] * powers).sum(axis=0)
        japanese = np.sqrt(1.0 + x * x)
        s = np.abs(y) / japanese
        tau = cutoff(s)
        dtau = cutoff_derivative(s) * np.sign(y)
        top = 0.5 * coeffs[order + 1] * (order + 1) * iy ** order
        dbar_cut = (0.5j / japanese) * dtau * (1.0 + 1j * x * y / japanese ** 2)
        return coeffs, series, top, tau, dtau, dbar_cut, japanese

    def dbar_extension(self, f: SmoothTestFunction, x, y, order: int) -> np.ndarray:
        """
        d-bar of the extension: 1/2 f^(n+1)(x) (iy)^n / n! tau + F(x, y) d-bar tau(y/<x>)
        """
        x = np.asarray(x, dtype=float)
        y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
        _, series, top, tau, _, dbar_cut, _ = self._dbar_parts(f, x.ravel(), y.ravel(), order)
        return (top * tau + series * dbar_cut).reshape(x.shape)

    def dbar_envelope(self, f: SmoothTestFunction, x, y, order: int) -> np.ndarray:
        """Pointwise envelope: the top term on |y| <= 2<x>, plus the cutoff band term"""
        x = np.asarray(x, dtype=float)
        y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
        xf, yf = x.ravel(), y.ravel()
        coeffs, _, top, tau, dtau, _, japanese = self._dbar_parts(f, xf, yf, order)
        region = np.abs(yf) <= 2 * japanese
        abs_series = (np.abs(coeffs[:order + 1]) * np.abs(yf)[None, :] ** np.arange(order + 1)[:, None]).sum(axis=0)
        band = abs_series * np.abs(dtau) / (2 * japanese) * np.sqrt(1.0 + (xf * yf / japanese ** 2) ** 2)
        envelope = np.abs(top) * region + band
        return envelope.reshape(x.shape)

    # --- functional calculus -----------------------------------------------------

    def eigen_apply(self, f: SmoothTestFunction, coeffs: JacobiCoeffs, j: int) -> np.ndarray:
        """sum_i f(lambda_i) v_i(j) v_i"""
        if not 1 <= j <= coeffs.N:
            raise RangeError(f"site {j} outside 1..{coeffs.N}")
        w, V = jacobi_service.eigendecompose(coeffs)
        return V @ (self.evaluate(f, w) * V[j - 1, :])

    def _hs_nodes(self, f: SmoothTestFunction, config: HsConfig, s_min: float):
        """Quadrature nodes (x, s, weight) over a <= x <= b, s_min <= s <= 2 with y = s <x>"""
        a, b = f.support
        gl_x, gl_w = leggauss(config.gl_nodes)
        s_edges = [s_min]
        while s_edges[-1] * 2 < 1.0:
            s_edges.append(s_edges[-1] * 2)
        s_edges.append(1.0)
        s_edges.extend(1.0 + np.arange(1, config.cutoff_panels + 1) / config.cutoff_panels)

        xs, ss, ws = [], [], []
        for s_lo, s_hi in zip(s_edges[:-1], s_edges[1:]):
            width = min(0.5 * s_lo, (b - a) / 32.0)
            x_panels = max(1, int(math.ceil((b - a) / width)))
            x_edges = np.linspace(a, b, x_panels + 1)
            x_half = 0.5 * np.diff(x_edges)
            x_mid = 0.5 * (x_edges[1:] + x_edges[:-1])
            px = (x_mid[:, None] + x_half[:, None] * gl_x[None, :]).ravel()
            pwx = (x_half[:, None] * gl_w[None, :]).ravel()
            s_half = 0.5 * (s_hi - s_lo)
            ps = 0.5 * (s_hi + s_lo) + s_half * gl_x
            pws = s_half * gl_w
            xs.append(np.repeat(px, ps.size))
            ss.append(np.tile(ps, px.size))
            ws.append(np.outer(pwx, pws).ravel())
        return np.concatenate(xs), np.concatenate(ss), np.concatenate(ws)

    def hs_apply(self, f: SmoothTestFunction, coeffs: JacobiCoeffs, j: int,
                 config: Optional[HsConfig] = None) -> np.ndarray:
        """
        f(H) delta_j = (1/pi) int d-bar f~(z) (H - z)^-1 delta_j dx dy

        For real f the lower half-plane mirrors the upper one, so the upper half
        is integrated and 2/pi Re is taken. The strip 0 < y < s_min <x> is dropped
        once its a-priori bound y0^n/(pi n n!) ||f^(n+1)||_1 is below tolerance.

        Raises:
            QuadratureError: If the strip bound is not met within max_depth halvings
        """
        config = config or HsConfig()
        if not 1 <= j <= coeffs.N:
            raise RangeError(f"site {j} outside 1..{coeffs.N}")
        if f.is_zero:
            return np.zeros(coeffs.N, dtype=np.complex128)

        n = config.order
        a, b = f.support
        top_l1 = self.derivative_l1(f, n + 1)
        japanese_max = math.sqrt(1.0 + max(a * a, b * b))
        s_min = config.s_min
        for _ in range(config.max_depth + 1):
            y0 = s_min * japanese_max
            strip = y0 ** n / (math.pi * n * math.factorial(n)) * top_l1
            if strip <= config.tolerance:
                break
            s_min /= 2
        else:
            raise QuadratureError(
                f"strip bound {strip:.2e} above tolerance {config.tolerance} after {config.max_depth} refinements"
            )

        x, s, w = self._hs_nodes(f, config, s_min)
        japanese = np.sqrt(1.0 + x * x)
        y = s * japanese
        density = self.dbar_extension(f, x, y, n) * w * japanese
        keep = density != 0
        x, y, density = x[keep], y[keep], density[keep]

        rhs = np.zeros(coeffs.N)
        rhs[j - 1] = 1.0
        result = np.zeros(coeffs.N, dtype=np.complex128)
        chunk = settings.QUADRATURE_CHUNK
        for start in range(0, x.size, chunk):
            sl = slice(start, start + chunk)
            U = jacobi_service.resolvent_sweep(coeffs, x[sl] + 1j * y[sl], rhs)
            result += U @ density[sl]
        out = (2.0 / math.pi) * result.real
        logger.debug(f"hs_apply used {x.size} nodes, s_min={s_min:.2e}")
        return out.astype(np.complex128)

    def state_vector(self, f: SmoothTestFunction, coeffs: JacobiCoeffs, j: int = 1,
                     config: Optional[HsConfig] = None) -> np.ndarray:
        """psi = f(H) delta_j, by eigendecomposition within the dense limit"""
        if coeffs.N <= settings.DENSE_LIMIT_JACOBI:
            return self.eigen_apply(f, coeffs, j)
        return self.hs_apply(f, coeffs, j, config).real

    def kernel_decay_check(self, f: SmoothTestFunction, coeffs: JacobiCoeffs, k: int,
                           pairs: List[Tuple[int, int]], growth: float = 2.0,
                           cross_check: int = 2, config: Optional[HsConfig] = None) -> KernelDecayReport:
        """
        Fit C_2 in |<delta_i, f(H) delta_j>| <= C_2 |||f|||_{2k+3} <i-j>^-k

        Kernel entries come from the eigendecomposition; up to `cross_check` columns
        are recomputed with hs_apply. Stability compares the fitted constant over
        |i-j| <= D with the one over |i-j| <= D/2 for the largest dyadic D.
        """
        if k < 0:
            raise ParamError("decay order must be nonnegative")
        norm = self.triple_norm(f, 2 * k + 3)
        if norm == 0:
            raise ParamError("the zero function has no decay constant")

        w, V = jacobi_service.eigendecompose(coeffs)
        fw = self.evaluate(f, w)
        columns = {}
        ratios = []
        for i, j in pairs:
            if not (1 <= i <= coeffs.N and 1 <= j <= coeffs.N):
                raise RangeError(f"pair ({i}, {j}) outside 1..{coeffs.N}")
            if j not in columns:
                columns[j] = V @ (fw * V[j - 1, :])
            lhs = abs(columns[j][i - 1])
            dist = abs(i - j)
            ratios.append((dist, lhs * (1.0 + dist * dist) ** (k / 2.0) / norm))

        max_dist = max(dist for dist, _ in ratios)
        bounds = [0]
        while bounds[-1] < max_dist:
            bounds.append(max(1, 2 * bounds[-1]))
        windows = [(D, max(c for dist, c in ratios if dist <= D)) for D in bounds]
        c2 = windows[-1][1]
        stable = len(windows) < 2 or windows[-1][1] <= growth * windows[-2][1]

        hs_deviation = None
        if cross_check > 0:
            checked = sorted(columns)[:1] + sorted(columns)[-1:] if cross_check > 1 else sorted(columns)[:1]
            deviations = []
            for j in dict.fromkeys(checked):
                approx = self.hs_apply(f, coeffs, j, config).real
                deviations.append(float(np.max(np.abs(approx - columns[j]))))
            hs_deviation = max(deviations)

        logger.info(f"Kernel decay k={k}: C2_fit={c2:.3e}, stable={stable}, norm={norm:.3e}")
        return KernelDecayReport(
            k=k, triple_norm=norm, windows=windows, c2_fit=c2, stable=stable, hs_deviation=hs_deviation
        )


hsfc_service = HsfcService()
