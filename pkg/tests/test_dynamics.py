import math

import pytest
import numpy as np

from sptree.core.config import settings
from sptree.core.exceptions import (
    ParamError, RangeError, ZeroStateError, InsufficientDataError, HypothesisWindowError, TailWarning,
    QuadratureError
)
from sptree.schemas.dynamics import MomentCurve, TimeAverageProfile
from sptree.schemas.jacobi import JacobiCoeffs, SpectralMeasure
from sptree.schemas.tree import TreeParams
from sptree.services.decompose_service import decompose_service
from sptree.services.dynamics_service import (
    dynamics_service, intermittency_target, crossover_exponent, abel_infimum_constant, dimension_window
)
from sptree.services.jacobi_service import jacobi_service
from sptree.services.tree_service import tree_service


def _delta(N, site=1):
    psi = np.zeros(N)
    psi[site - 1] = 1.0
    return psi


def test_closed_form_exponents():
    assert intermittency_target(0.5, 2.0) == pytest.approx(0.75)
    assert crossover_exponent(0.5, 2.0) == pytest.approx(4.0 / 3.0)
    assert dimension_window(0.5) == (0.5, pytest.approx(2.0 / 3.0))


def test_abel_infimum_constant():
    """Test inf_x (x^-p + K x) = c(p) K^(p/(p+1)) on a fine grid"""
    x = np.geomspace(1e-3, 1e3, 200001)
    for p, K in ((1.0, 1.0), (2.0, 0.3), (3.5, 7.0)):
        assert np.min(x ** -p + K * x) == pytest.approx(abel_infimum_constant(p) * K ** (p / (p + 1)), rel=1e-6)


def test_eigenvector_profile_is_stationary(random_block):
    """Test a(n, T) = |psi(n)|^2 for an eigenvector"""
    _, V = jacobi_service.eigendecompose(random_block)
    psi = V[:, 40]
    for T in (0.5, 50.0):
        profile = dynamics_service.time_average_profile(random_block, psi, T)
        assert np.allclose(profile.a, psi ** 2, rtol=0, atol=1e-12)


def test_eigensum_profile_conserves_mass(random_block):
    psi = np.random.default_rng(6).standard_normal(random_block.N)
    profile = dynamics_service.time_average_profile(random_block, psi, 10.0)
    assert profile.method == "eigensum"
    assert profile.norm == pytest.approx(float(psi @ psi))
    assert profile.mass_error <= 1e-8
    assert np.all(profile.a >= 0)


def test_free_second_moment_closed_form():
    """Test <n^2>_T = 6 T^2 + 1 for delta_1 on the free half-line"""
    coeffs = jacobi_service.free_coeffs(400)
    for T in (0.5, 1.0, 2.0, 5.0):
        profile = dynamics_service.time_average_profile(coeffs, _delta(400), T)
        assert dynamics_service.moment(profile, 2) == pytest.approx(6 * T * T + 1, rel=1e-8)
        assert dynamics_service.moment(profile, 0) == pytest.approx(1.0, rel=1e-10)


def test_quadrature_matches_eigensum():
    """Test the resolvent quadrature against the exact eigensum"""
    coeffs = jacobi_service.free_coeffs(300)
    psi = _delta(300)
    for T in (1.0, 8.0):
        exact = dynamics_service.time_average_profile(coeffs, psi, T, "eigensum")
        approx = dynamics_service.time_average_profile(coeffs, psi, T, "quadrature")
        assert approx.mass_error <= 1e-4
        assert np.max(np.abs(approx.a - exact.a)) <= 1e-4 * np.max(exact.a)


def test_quadrature_matches_eigensum_random_block(random_block):
    """Test the two methods on a disordered block at T = 1, 10 and 100"""
    psi = _delta(random_block.N)
    for T in (1.0, 10.0, 100.0):
        exact = dynamics_service.time_average_profile(random_block, psi, T, "eigensum")
        approx = dynamics_service.time_average_profile(random_block, psi, T, "quadrature")
        assert np.max(np.abs(approx.a - exact.a)) <= 1e-6 * np.max(exact.a)


def test_coarse_tail_grid_fails_mass_check(free_block, monkeypatch):
    """Test QuadratureError when the tail panels are too coarse to hold the mass"""
    monkeypatch.setattr(settings, "QUADRATURE_TAIL_NODES", 1)
    with pytest.raises(QuadratureError):
        dynamics_service.time_average_profile(free_block, _delta(free_block.N), 1.0, "quadrature")


def test_profile_errors(free_block):
    with pytest.raises(RangeError):
        dynamics_service.time_average_profile(free_block, np.ones(3), 1.0)
    with pytest.raises(ZeroStateError):
        dynamics_service.time_average_profile(free_block, np.zeros(free_block.N), 1.0)
    with pytest.raises(ParamError):
        dynamics_service.time_average_profile(free_block, _delta(free_block.N), 0.0)
    with pytest.raises(ParamError):
        dynamics_service.time_average_profile(free_block, _delta(free_block.N), 1.0, "direct")


def test_quadrature_cache_round_trip(cache_dir, free_block):
    """Test that a cached profile is reused"""
    psi = _delta(free_block.N)
    cold = dynamics_service.time_average_profile(free_block, psi, 2.0, "quadrature", use_cache=True)
    assert len(list(cache_dir.glob("*.bin"))) == 1

    warm = dynamics_service.time_average_profile(free_block, psi, 2.0, "quadrature", use_cache=True)
    assert np.array_equal(cold.a, warm.a)
    assert len(list(cache_dir.glob("*.bin"))) == 1


def test_profiles_with_workers(free_block):
    """Test that threaded sweeps keep grid order and values"""
    psi = _delta(free_block.N)
    times = [0.5, 1.0, 2.0, 4.0]
    serial = dynamics_service.time_average_profiles(free_block, psi, times)
    threaded = dynamics_service.time_average_profiles(free_block, psi, times, workers=3)
    assert [p.T for p in threaded] == times
    for a, b in zip(serial, threaded):
        assert np.allclose(a.a, b.a, rtol=1e-12, atol=1e-15)


def test_moment_tail_warning():
    """Test that a flagged profile warns and the curve records it"""
    profile = TimeAverageProfile(T=1.0, a=np.array([0.5, 0.5]), method="eigensum", norm=1.0, tail_flag=True)
    with pytest.warns(TailWarning):
        assert dynamics_service.moment(profile, 1) == pytest.approx(1.5)

    second = profile.model_copy(update={"T": 2.0})
    curve = dynamics_service.curve_from_profiles([profile, second], 1)
    assert len(curve.warnings) == 2
    assert curve.times.tolist() == [1.0, 2.0]


def test_moment_rejects_negative_order():
    profile = TimeAverageProfile(T=1.0, a=np.array([1.0]), method="eigensum", norm=1.0)
    with pytest.raises(ParamError):
        dynamics_service.moment(profile, -1)


def test_escape_mass():
    profile = TimeAverageProfile(T=1.0, a=np.array([0.1, 0.2, 0.3, 0.4]), method="eigensum", norm=1.0)
    assert dynamics_service.escape_mass(profile, [2, 3, 3]) == pytest.approx(0.5)
    assert dynamics_service.escape_mass(profile, []) == 0.0
    assert dynamics_service.escape_mass_beyond(profile, 2.5) == pytest.approx(0.7)
    assert dynamics_service.escape_mass_beyond(profile, 9) == 0.0
    assert dynamics_service.tail_moment(profile, 1, 4) == pytest.approx(1.6)
    with pytest.raises(RangeError):
        dynamics_service.escape_mass(profile, [5])


def test_beta_estimate_power_law():
    """Test beta_hat on an exact power law with the intermittency target"""
    T = np.geomspace(1, 1e4, 13)
    curve = MomentCurve(p=2.0, samples=list(zip(T.tolist(), (3.0 * T ** 1.5).tolist())))
    estimate = dynamics_service.beta_estimate(curve, gamma=0.5)

    assert estimate.beta_hat == pytest.approx(0.75, abs=1e-10)
    assert estimate.max_slope == pytest.approx(0.75, abs=1e-10)
    assert estimate.target == pytest.approx(0.75)
    assert estimate.window[1] == pytest.approx(1e4)


def test_beta_estimate_clips_negative_slopes():
    T = np.geomspace(1, 1e3, 10)
    curve = MomentCurve(p=1.0, samples=list(zip(T.tolist(), (1.0 / T).tolist())))
    estimate = dynamics_service.beta_estimate(curve)
    assert estimate.beta_hat == 0.0
    assert estimate.raw_min_slope == pytest.approx(-1.0)


def test_beta_estimate_needs_data():
    T = np.geomspace(1, 1e3, 7)
    with pytest.raises(InsufficientDataError):
        dynamics_service.beta_estimate(MomentCurve(p=1.0, samples=list(zip(T, T))))
    T = np.geomspace(1, 100, 12)
    with pytest.raises(InsufficientDataError):
        dynamics_service.beta_estimate(MomentCurve(p=1.0, samples=list(zip(T, T))))


def test_bound_state_has_no_transport():
    """Test beta_hat = 0 for a decoupled eigenvector"""
    coeffs = jacobi_service.diagonal_coeffs(np.arange(1.0, 51.0))
    times = np.geomspace(1, 1e4, 13)
    profiles = dynamics_service.time_average_profiles(coeffs, _delta(50, 5), times)
    curve = dynamics_service.curve_from_profiles(profiles, 2.0)
    assert np.allclose(curve.values, 25.0)
    assert dynamics_service.beta_estimate(curve).beta_hat <= 0.02


def test_free_transport_is_ballistic():
    """Test beta_hat = 1 for delta_1 on the free half-line"""
    coeffs = jacobi_service.free_coeffs(4000)
    times = np.geomspace(0.2, 200, 13)
    profiles = dynamics_service.time_average_profiles(coeffs, _delta(4000), times, "quadrature")
    estimate = dynamics_service.beta_estimate(dynamics_service.curve_from_profiles(profiles, 2.0))
    assert abs(estimate.beta_hat - 1.0) <= 0.05


def _barrier_curve(gamma, positions, times):
    tree = tree_service.build_tree(TreeParams(gamma=gamma, depth=599, sparse_positions=positions))
    coeffs = decompose_service.jacobi_coeffs(tree, 1)
    profiles = dynamics_service.time_average_profiles(coeffs, _delta(coeffs.N), times, "quadrature")
    return dynamics_service.curve_from_profiles(profiles, 2.0)


def _barrier_beta(gamma, positions, times):
    return dynamics_service.beta_estimate(_barrier_curve(gamma, positions, times), gamma=gamma).beta_hat


def test_two_reachable_barriers_give_intermediate_exponent():
    """Test 0.05 < beta_hat < 0.95 with shells at 8 and 32 and Gamma = 1/2"""
    beta_hat = _barrier_beta(0.5, (8, 32), np.geomspace(0.1, 100, 13))
    assert 0.05 < beta_hat < 0.95


def test_higher_barrier_lowers_exponent():
    """Test that raising g at shell 32 (smaller Gamma) lowers beta_hat"""
    times = np.geomspace(0.1, 100, 13)
    estimates = [_barrier_beta(gamma, (32,), times) for gamma in (0.6, 0.5, 0.45)]
    # g at shell 32 is 10, 32 and 69
    assert estimates[0] > estimates[1] >= estimates[2]


def test_bound_envelopes_on_measured_tree_curve():
    """Test the envelopes around the first barrier of a measured sparse-tree curve"""
    times = np.geomspace(2, 64, 11)
    curve = _barrier_curve(0.5, (8, 32), times)
    params = TreeParams(gamma=0.5, depth=599, sparse_positions=(8, 32))
    report = dynamics_service.bound_envelopes(params, 2.0, times, 1, curve)

    assert report.lower_window == (2.0, 8.0)
    assert report.upper_window == (8.0, 64.0)
    assert report.lower_constant > 0
    assert report.upper_constant > 0
    assert report.fraction_inside >= 0.95
    assert report.passed


def test_energy_integrals_single_atom():
    """Test I -> pi/2 and J = 1 for one atom inside B"""
    measure = SpectralMeasure(atoms=[2.0], weights=[1.0])
    out = dynamics_service.energy_integrals(measure, 0.01, (1.0, 3.0))
    assert out.A == 1.0
    assert out.J == pytest.approx(1.0)
    assert out.I == pytest.approx(math.pi / 2, rel=1e-3)
    assert out.M_T == pytest.approx(1.0 / 16.0)


def test_energy_integrals_outside_window():
    measure = SpectralMeasure(atoms=[0.1, 2.0], weights=[0.5, 0.5])
    out = dynamics_service.energy_integrals(measure, 0.5, (1.0, 3.0))
    assert out.A == 0.5
    expected_J = 0.5 * (0.5 + 0.5 * 0.25 / (1.9 ** 2 + 0.25))
    assert out.J == pytest.approx(expected_J)
    with pytest.raises(ParamError):
        dynamics_service.energy_integrals(measure, 0.0, (1.0, 3.0))
    with pytest.raises(ParamError):
        dynamics_service.energy_integrals(measure, 0.1, (3.0, 1.0))


def test_escape_threshold_free(free_block):
    """Test P({M_T ~ inf}, T) >= A/2 on the free block"""
    integrals, mass, passed = dynamics_service.escape_threshold_check(free_block, _delta(free_block.N), 10.0,
                                                                      (0.5, 3.5))
    assert passed
    assert mass >= integrals.A / 2


def test_escape_threshold_random_sweep():
    """Test P({M_T ~ inf}, T) >= A/2 over random blocks, states, times and windows"""
    rng = np.random.default_rng(31)
    for _ in range(30):
        N = int(rng.integers(40, 161))
        coeffs = JacobiCoeffs(k=int(rng.integers(1, 3)), d=rng.uniform(0.0, 4.0, N), b=rng.uniform(0.3, 1.5, N - 1))
        if rng.uniform() < 0.5:
            psi = _delta(N, int(rng.integers(1, 6)))
        else:
            psi = np.zeros(N)
            psi[:10] = rng.standard_normal(10)
        measure = jacobi_service.spectral_measure(coeffs, psi)
        center = rng.choice(measure.atoms, p=measure.weights / measure.weights.sum())
        half = rng.uniform(0.05, 1.0)
        T = float(10 ** rng.uniform(0.0, 2.5))

        integrals, mass, passed = dynamics_service.escape_threshold_check(
            coeffs, psi, T, (center - half, center + half)
        )
        assert passed
        assert integrals.A > 0


def test_c3_fit_single_atom():
    """Test J/I = 2/pi for one atom well inside B"""
    measure = SpectralMeasure(atoms=[2.0], weights=[1.0])
    fit = dynamics_service.c3_fit(measure, np.geomspace(1e-4, 1e-1, 7))
    assert len(fit.ratios) == 7
    assert fit.c3 == pytest.approx(2.0 / math.pi, rel=1e-3)
    assert fit.stability == pytest.approx(1.0, abs=2e-3)


def test_c3_fit_random_block(random_block):
    """Test a bounded spread of J/I as eps runs over three decades"""
    measure = jacobi_service.spectral_measure(random_block, _delta(random_block.N))
    fit = dynamics_service.c3_fit(measure, np.geomspace(1e-4, 1e-1, 7), (1.0, 3.0))
    assert fit.c3 == max(fit.ratios)
    assert fit.epsilons == sorted(fit.epsilons)
    assert fit.stability <= 2.0


def test_c3_fit_without_mass_in_window():
    measure = SpectralMeasure(atoms=[0.1, 5.0], weights=[0.5, 0.5])
    fit = dynamics_service.c3_fit(measure, [1e-3, 1e-2])
    assert fit.c3 is None
    assert fit.stability is None
    with pytest.raises(InsufficientDataError):
        dynamics_service.c3_fit(measure, [])


def test_energy_lower_bound():
    value = dynamics_service.energy_lower_bound(0.5, 2.0, 8.0, 4.0, 0.5, 0.0)
    K = 8.0 ** 3 + 4.0 ** 3 / 8.0
    assert value == pytest.approx(4.0 + 0.5 * K)


def test_q_exponent():
    """Test q_N = -3/5 for L = (8, 32), C_5 = 1, Gamma = 1/2"""
    params = TreeParams(gamma=0.5, depth=300, sparse_positions=(8, 32, 128))
    assert dynamics_service.q_exponent(params, 2, 1.0) == pytest.approx(-0.6)
    assert dynamics_service.sparse_scale(params, 3) == (128, math.inf)
    with pytest.raises(RangeError):
        dynamics_service.sparse_scale(params, 4)


def test_escape_bound_fit_cases():
    params = TreeParams(gamma=0.5, depth=300, sparse_positions=(8, 32, 128))
    times = [10.0, 20.0, 32.0, 100.0]
    fit = dynamics_service.escape_bound_fit(params, 2, times, [0.5] * 4, [0.1] * 4, [0.2] * 4)

    assert {p["case"] for p in fit.per_point} == {1.0, 2.0, 3.0}
    assert fit.c5 >= 1.0
    assert fit.c5 == max(1.0, max(p["c5"] for p in fit.per_point))
    assert fit.q_N == pytest.approx(dynamics_service.q_exponent(params, 2, fit.c5))

    with pytest.raises(HypothesisWindowError):
        dynamics_service.escape_bound_fit(params, 2, [1.0, 2.0], [0.5] * 2, [0.1] * 2, [0.2] * 2)


def test_bound_envelopes_on_bound_shape():
    """Test envelopes fitted to a curve with the bound shape itself"""
    params = TreeParams(gamma=0.5, depth=3000, sparse_positions=(8, 32, 2048))
    times = np.geomspace(8, 1024, 15)
    values = 32.0 ** 2 + times ** 3 / 32.0 ** 2
    curve = MomentCurve(p=2.0, samples=list(zip(times.tolist(), values.tolist())))
    report = dynamics_service.bound_envelopes(params, 2.0, times, 2, curve)

    assert report.upper_constant == pytest.approx(4.0)
    assert report.fraction_inside == 1.0
    assert report.passed
    assert report.crossover_exponent == pytest.approx(4.0 / 3.0)
    assert report.pivot_offset_octaves == pytest.approx(0.0, abs=1e-9)
    assert report.target == pytest.approx(0.75)


def test_bound_envelopes_window_check():
    params = TreeParams(gamma=0.5, depth=3000, sparse_positions=(8, 32, 2048))
    times = np.array([2.0, 16.0])
    curve = MomentCurve(p=2.0, samples=[(2.0, 1.0), (16.0, 2.0)])
    with pytest.raises(HypothesisWindowError):
        dynamics_service.bound_envelopes(params, 2.0, times, 2, curve)
