import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from sptree.core.config import settings
from sptree.core.exceptions import (
    InsufficientDataError, HypothesisWindowError, QuadratureError, RangeError
)
from sptree.schemas.dynamics import MomentCurve, TimeAverageProfile
from sptree.schemas.jacobi import JacobiCoeffs
from sptree.schemas.run_config import RunConfig
from sptree.schemas.tree import TreeParams
from sptree.services.dynamics_service import dynamics_service, dimension_window, intermittency_target
from sptree.services.fractal_service import fractal_service
from sptree.services.jacobi_service import jacobi_service
from sptree.tasks.utils import build_operator, build_state, time_grid, write_csv, write_json

logger = logging.getLogger(__name__)


def _profiles(config: RunConfig, coeffs: JacobiCoeffs, psi: np.ndarray, times: np.ndarray,
              workers: int, use_cache: bool, summary: Dict[str, Any]) -> List[TimeAverageProfile]:
    if config.method != "both":
        try:
            return dynamics_service.time_average_profiles(coeffs, psi, times, config.method, workers, use_cache)
        except QuadratureError as e:
            logger.error(f"Profiles failed: {str(e)}")
            summary["errors"].append(str(e))
            return []

    profiles = dynamics_service.time_average_profiles(coeffs, psi, times, "eigensum", workers)
    try:
        checks = dynamics_service.time_average_profiles(coeffs, psi, times, "quadrature", workers, use_cache)
    except QuadratureError as e:
        logger.warning(f"Quadrature comparison skipped: {str(e)}")
        summary["errors"].append(str(e))
        return profiles
    deviation = max(
        float(np.max(np.abs(e.a - q.a)) / np.max(e.a)) for e, q in zip(profiles, checks)
    )
    summary["method_deviation"] = deviation
    logger.info(f"Eigensum vs quadrature: max relative deviation {deviation:.2e}")
    return profiles


def _moment_rows(curves: List[MomentCurve]) -> List[list]:
    rows = []
    for curve in curves:
        logT, logM = np.log(curve.times), np.log(curve.values)
        slopes = np.gradient(logM, logT)
        for (T, m), s in zip(curve.samples, slopes):
            rows.append([float(T), float(curve.p), float(m), float(s)])
    return rows


def _barrier_reports(config: RunConfig, coeffs: JacobiCoeffs, params: TreeParams, times: np.ndarray,
                     profiles: List[TimeAverageProfile], curves: List[MomentCurve],
                     summary: Dict[str, Any]):
    """Escape-bound fit and the upper/lower moment envelopes around barrier N"""
    N = config.barrier_index
    L_N, L_next = dynamics_service.sparse_scale(params, N)

    delta = np.zeros(coeffs.N)
    delta[0] = 1.0
    window = (config.nu, 4.0 - config.nu)
    measure = jacobi_service.spectral_measure(coeffs, delta)
    I_values = [dynamics_service.energy_integrals(measure, 1.0 / T, window).I for T in times]
    tail_masses = [dynamics_service.escape_mass_beyond(pr, pr.T) for pr in profiles]
    lo_site = max(1, int(math.ceil(L_N / 4)))
    hi_site = min(coeffs.N, int(L_N // 2))
    window_masses = [dynamics_service.escape_mass(pr, range(lo_site, hi_site + 1)) for pr in profiles]

    c5 = 1.0
    try:
        fit = dynamics_service.escape_bound_fit(params, N, times, tail_masses, window_masses, I_values)
        c5 = fit.c5
        summary["escape_bound_fit"] = fit.model_dump()
    except HypothesisWindowError as e:
        summary["errors"].append(str(e))

    lower_window = (L_N / 4.0, L_next / 4.0)
    upper_window = (float(L_N), L_N ** (1.0 / params.gamma))
    summary["validity_windows"]["lower_bound"] = list(lower_window)
    summary["validity_windows"]["upper_bound"] = list(upper_window)
    inside = times[((times >= lower_window[0]) & (times <= lower_window[1]))
                   | ((times >= upper_window[0]) & (times <= upper_window[1]))]
    if inside.size < 2:
        summary["errors"].append(f"fewer than 2 grid points inside the bound windows around L_N={L_N}")
        return

    envelopes = {}
    for curve in curves:
        report = dynamics_service.bound_envelopes(
            params, curve.p, inside, N, curve, c5=c5,
            slack=config.tolerances.envelope_slack, fraction=config.tolerances.envelope_fraction
        )
        envelopes[str(curve.p)] = report.model_dump()
    summary["bound_envelopes"] = envelopes


def _dimension_reports(config: RunConfig, coeffs: JacobiCoeffs, psi: np.ndarray, betas: Dict[str, Any],
                       summary: Dict[str, Any]):
    if coeffs.N > settings.DENSE_LIMIT_JACOBI:
        summary["errors"].append(f"dimension estimates need N <= {settings.DENSE_LIMIT_JACOBI}")
        return
    measure = jacobi_service.spectral_measure(coeffs, psi)
    dims = fractal_service.dim_bounds(measure)
    summary["c3_fit"] = dynamics_service.c3_fit(
        measure, config.verify.c3_epsilons, tuple(config.verify.c3_window)
    ).model_dump()
    summary["dim_lower"] = dims.dim_lower
    summary["dim_upper"] = dims.dim_upper
    summary["dim_resolved"] = dims.resolved

    estimates = [b["beta_hat"] for b in betas.values() if b.get("beta_hat") is not None]
    if estimates:
        upper, ok = fractal_service.dim_star_diagnostic(measure, max(estimates), config.tolerances.dim_slack)
        summary["dim_star"] = {"upper": upper, "beta_hat": max(estimates), "passed": ok}


def run_dynamics(config: RunConfig, out_dir: Path, workers: int = 1, use_cache: bool = False) -> Dict[str, Any]:
    """
    Time-averaged profiles, moment curves and exponent estimates for one configuration

    Writes profile.csv (largest T), moments.csv and summary.json into out_dir.
    """
    out_dir = Path(out_dir)
    coeffs, params, _ = build_operator(config)
    psi = build_state(config, coeffs)
    times = time_grid(config)
    if config.operator == "tree" and config.barrier_index is not None:
        if not 1 <= config.barrier_index <= len(params.sparse_positions):
            raise RangeError(f"barrier_index {config.barrier_index} outside 1..{len(params.sparse_positions)}")

    summary: Dict[str, Any] = {
        "operator": config.operator,
        "N": coeffs.N,
        "k": coeffs.k,
        "method": config.method,
        "errors": [],
        "validity_windows": {"time_grid": [float(times[0]), float(times[-1])]},
    }
    gamma: Optional[float] = params.gamma if params is not None else None
    if gamma is not None:
        summary["gamma"] = gamma
        summary["dimension_window"] = list(dimension_window(gamma))
        summary["sparse_positions"] = list(params.sparse_positions)

    profiles = _profiles(config, coeffs, psi, times, workers, use_cache, summary)
    if not profiles:
        summary["status"] = "incomplete"
        write_json(out_dir / "summary.json", summary)
        return summary
    summary["status"] = "complete"
    last = profiles[-1]
    write_csv(out_dir / "profile.csv", ["n", "a"],
              ([n, float(v)] for n, v in enumerate(last.a, start=1)))

    curves = [dynamics_service.curve_from_profiles(profiles, p) for p in config.p_list]
    write_csv(out_dir / "moments.csv", ["T", "p", "moment", "local_slope"], _moment_rows(curves))

    betas: Dict[str, Any] = {}
    warnings: List[str] = []
    for curve in curves:
        warnings.extend(curve.warnings)
        entry: Dict[str, Any] = {"target": intermittency_target(gamma, curve.p) if gamma is not None else None}
        try:
            estimate = dynamics_service.beta_estimate(curve, gamma)
            entry.update(estimate.model_dump())
            summary["validity_windows"].setdefault("beta", {})[str(curve.p)] = list(estimate.window)
        except InsufficientDataError as e:
            entry["beta_hat"] = None
            entry["error"] = str(e)
        betas[str(curve.p)] = entry
    summary["beta"] = betas
    summary["warnings"] = sorted(set(warnings))

    _dimension_reports(config, coeffs, psi, betas, summary)
    if config.operator == "tree" and config.barrier_index is not None:
        _barrier_reports(config, coeffs, params, times, profiles, curves, summary)

    write_json(out_dir / "summary.json", summary)
    logger.info(
        "Dynamics run finished: "
        + ", ".join(f"p={p}: beta_hat={b.get('beta_hat')}" for p, b in betas.items())
    )
    return summary
