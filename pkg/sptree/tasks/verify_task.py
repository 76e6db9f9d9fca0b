import logging
from pathlib import Path
from typing import List, Tuple

import numpy as np

from sptree.core.config import settings
from sptree.schemas.reports import CheckResult, VerifyReport
from sptree.schemas.run_config import RunConfig
from sptree.services.decompose_service import decompose_service
from sptree.services.dynamics_service import dynamics_service
from sptree.services.hsfc_service import hsfc_service
from sptree.services.jacobi_service import jacobi_service
from sptree.services.transfer_service import transfer_service
from sptree.services.tree_service import tree_service
from sptree.tasks.utils import tree_params, build_operator, build_state, write_json

logger = logging.getLogger(__name__)

HS_TOLERANCE = 1e-4
DECAY_MIN_RANGE = 32


def _kernel_pairs(N: int, max_distance: int) -> List[Tuple[int, int]]:
    reach = min(max_distance, N - 1)
    columns = sorted({1, max(1, N // 2)})
    return [(i, j) for j in columns for i in range(max(1, j - reach), min(N, j + reach) + 1)]


def check_equivalence(config: RunConfig) -> List[CheckResult]:
    """Decomposition equivalence and the coefficient identities of every block"""
    tree = tree_service.build_tree(tree_params(config.tree))
    report = decompose_service.verify_equivalence(tree)
    checks = [CheckResult(
        name="decomposition_equivalence",
        passed=report.max_deviation <= config.tolerances.equivalence,
        details=report.model_dump()
    )]

    failed_blocks = []
    worst = 0.0
    for k in range(1, tree.alpha[-1] + 1):
        check = decompose_service.coefficient_check(decompose_service.jacobi_coeffs(tree, k))
        worst = max(worst, check.max_diagonal_deviation, check.max_coupling_deviation)
        if not check.passed:
            failed_blocks.append(k)
    checks.append(CheckResult(
        name="block_coefficients",
        passed=not failed_blocks,
        details={"blocks": tree.alpha[-1], "failed_blocks": failed_blocks[:50], "max_deviation": worst}
    ))
    return checks


def _shift_support(N: int, beta: float) -> int:
    """Rows of f kept so that beta^n stays inside the float range"""
    if beta == 1.0:
        return N - 1
    return max(1, min(N - 1, int(np.floor(700.0 / abs(np.log(beta)))) - 2))


def check_shift_ops(config: RunConfig, coeffs, rng: np.random.Generator) -> CheckResult:
    N = coeffs.N
    if N < 2:
        return CheckResult(name="shift_operators", passed=True, details={"skipped": "block too short"})
    # f and g live on 1..N-1 so the shifts stay inside the truncation
    f_full = rng.standard_normal(N - 1)
    g_full = rng.standard_normal(N - 1)
    worst = 0.0
    per_beta = {}
    for beta in config.verify.betas:
        cap = _shift_support(N, beta)
        f = np.zeros(N)
        f[:cap] = f_full[:cap]
        g = np.zeros(N)
        g[:cap] = g_full[:cap]
        report = jacobi_service.shift_ops_check(coeffs, beta, f, g)
        per_beta[str(beta)] = report.max_deviation
        worst = max(worst, report.max_deviation)
    return CheckResult(
        name="shift_operators",
        passed=worst <= config.tolerances.shift_ops,
        details={"max_deviation": worst, "per_beta": per_beta}
    )


def check_kernel_bound(config: RunConfig, coeffs, rng: np.random.Generator) -> CheckResult:
    pairs = _kernel_pairs(coeffs.N, config.verify.kernel_max_distance)
    lo, hi = jacobi_service.spectrum_bounds(coeffs)
    tuples = 0
    violations = 0
    worst_ratio = 0.0
    for gamma in config.verify.kernel_gammas:
        for _ in range(config.verify.kernel_shifts):
            z = complex(rng.uniform(lo - 1.0, hi + 1.0), rng.uniform(0.01, 1.0))
            report = jacobi_service.kernel_bound_check(coeffs, z, gamma, pairs)
            tuples += len(report.entries)
            violations += report.violations
            worst_ratio = max(worst_ratio, max(e.lhs / e.rhs for e in report.entries))
    return CheckResult(
        name="resolvent_kernel_bound",
        passed=violations == 0,
        details={"tuples": tuples, "violations": violations, "max_ratio": worst_ratio}
    )


def check_recursion(config: RunConfig, coeffs) -> CheckResult:
    if coeffs.N < 2:
        return CheckResult(name="recursion_consistency", passed=True, details={"skipped": "block too short"})
    n_max = min(config.verify.recursion_n_max, coeffs.N - 1)
    report = transfer_service.recursion_consistency(coeffs, complex(2.0, 1.0 / 50.0), n_max)
    return CheckResult(
        name="recursion_consistency",
        passed=report.max_deviation <= config.tolerances.recursion,
        details={"n_max": n_max, "max_deviation": report.max_deviation}
    )


def check_kernel_decay(config: RunConfig, coeffs) -> CheckResult:
    f = hsfc_service.make_test_function("first", config.nu)
    pairs = _kernel_pairs(coeffs.N, config.verify.decay_max_distance)
    report = hsfc_service.kernel_decay_check(
        f, coeffs, config.verify.decay_order, pairs, growth=config.tolerances.kernel_decay_growth
    )
    reach = max(abs(i - j) for i, j in pairs)
    # short blocks give too few dyadic windows for a growth test
    stable = report.stable if reach >= DECAY_MIN_RANGE else bool(np.isfinite(report.c2_fit))
    hs_ok = report.hs_deviation is None or report.hs_deviation <= HS_TOLERANCE
    return CheckResult(
        name="kernel_decay",
        passed=stable and hs_ok,
        details={**report.model_dump(), "range": reach}
    )


def check_energy_ratio(config: RunConfig, coeffs, psi: np.ndarray) -> CheckResult:
    """J/I on the energy window stays within a bounded spread as eps shrinks"""
    measure = jacobi_service.spectral_measure(coeffs, psi)
    fit = dynamics_service.c3_fit(measure, config.verify.c3_epsilons, tuple(config.verify.c3_window))
    if fit.c3 is None:
        return CheckResult(name="energy_ratio", passed=True,
                           details={**fit.model_dump(), "skipped": "no spectral mass in the window"})
    return CheckResult(
        name="energy_ratio",
        passed=fit.stability <= config.tolerances.c3_stability,
        details=fit.model_dump()
    )


def run_verify(config: RunConfig, out_dir: Path) -> VerifyReport:
    """
    Run every check and write verify.json; the report passes iff all checks pass
    """
    rng = np.random.default_rng(config.seed)
    checks = check_equivalence(config)
    coeffs, _, _ = build_operator(config)
    if coeffs.N > settings.DENSE_LIMIT_JACOBI:
        logger.warning(f"Block of length {coeffs.N} is above the dense limit; spectral checks will fail")
    checks.append(check_shift_ops(config, coeffs, rng))
    checks.append(check_kernel_bound(config, coeffs, rng))
    checks.append(check_recursion(config, coeffs))
    checks.append(check_kernel_decay(config, coeffs))
    checks.append(check_energy_ratio(config, coeffs, build_state(config, coeffs)))

    report = VerifyReport(checks=checks)
    write_json(Path(out_dir) / "verify.json", {
        "passed": report.passed,
        "checks": [c.model_dump() for c in checks]
    })
    for c in checks:
        logger.info(f"Check {c.name}: {'passed' if c.passed else 'FAILED'}")
    return report
