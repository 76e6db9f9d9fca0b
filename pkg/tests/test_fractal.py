import math

import pytest
import numpy as np

from sptree.core.exceptions import ParamError, ResolutionError
from sptree.schemas.jacobi import SpectralMeasure
from sptree.services.fractal_service import fractal_service, median_gap
from sptree.services.hsfc_service import hsfc_service

CANTOR_DIM = math.log(2) / math.log(3)


def test_atomic_measure_merges_atoms():
    measure = fractal_service.atomic_measure([2.0, 1.0, 2.0], [1.0, 1.0, 1.0])
    assert measure.atoms.tolist() == [1.0, 2.0]
    assert measure.weights.tolist() == [1.0, 2.0]
    with pytest.raises(ParamError):
        fractal_service.atomic_measure([1.0, 2.0], [1.0])


def test_reference_measures():
    lebesgue = fractal_service.lebesgue_measure(4000)
    assert lebesgue.total == pytest.approx(1.0)
    assert median_gap(lebesgue) == pytest.approx(1e-3)

    cantor = fractal_service.cantor_measure(8)
    assert cantor.atoms.size == 256
    assert cantor.total == pytest.approx(1.0)
    assert median_gap(cantor) == pytest.approx(2 * 3.0 ** -8)


def test_local_dimension_lebesgue():
    """Test gamma_hat = 1 for the discretized Lebesgue measure"""
    measure = fractal_service.lebesgue_measure(4000)
    estimate = fractal_service.local_dimension(measure, 2.0, np.geomspace(1e-2, 1e-1, 10))
    assert estimate.resolved
    assert abs(estimate.gamma_hat - 1.0) <= 0.05
    assert len(estimate.slopes) == 6


def test_local_dimension_single_atom():
    """Test gamma_hat = 0 at an atom and infinity away from the support"""
    measure = SpectralMeasure(atoms=[1.0], weights=[1.0])
    deltas = np.geomspace(1e-3, 1e-1, 8)
    assert fractal_service.local_dimension(measure, 1.0, deltas).gamma_hat == 0.0
    assert fractal_service.local_dimension(measure, 3.0, deltas).gamma_hat == math.inf


def test_local_dimension_cantor():
    """Test log 2 / log 3 at the left end of the middle-thirds hierarchy"""
    measure = fractal_service.cantor_measure(8)
    deltas = 3.0 ** -np.arange(1, 8)
    estimate = fractal_service.local_dimension(measure, 0.0, deltas)
    assert abs(estimate.gamma_hat - CANTOR_DIM) <= 0.05


def test_local_dimension_resolution():
    """Test the median-gap guard"""
    measure = fractal_service.lebesgue_measure(4000)
    deltas = np.geomspace(1e-4, 1e-2, 6)
    with pytest.raises(ResolutionError):
        fractal_service.local_dimension(measure, 2.0, deltas)
    assert not fractal_service.local_dimension(measure, 2.0, deltas, strict=False).resolved
    with pytest.raises(ParamError):
        fractal_service.local_dimension(measure, 2.0, [1e-2])


def test_dim_bounds_lebesgue():
    """Test (dim_lower, dim_upper) = (1, 1) for Lebesgue-like measures"""
    profile = fractal_service.dim_bounds(fractal_service.lebesgue_measure(4000))
    assert len(profile.points) == 200
    assert profile.resolved
    assert abs(profile.dim_lower - 1.0) <= 0.05
    assert abs(profile.dim_upper - 1.0) <= 0.05


def test_dim_bounds_point_mass():
    profile = fractal_service.dim_bounds(SpectralMeasure(atoms=[2.0], weights=[1.0]), sample_size=5)
    assert profile.dim_lower == 0.0
    assert profile.dim_upper == 0.0
    with pytest.raises(ParamError):
        fractal_service.dim_bounds(SpectralMeasure(atoms=[2.0], weights=[1.0]), sample_size=0)


def test_dim_star_diagnostic():
    measure = fractal_service.lebesgue_measure(4000)
    upper, passed = fractal_service.dim_star_diagnostic(measure, 1.0)
    assert passed
    assert abs(upper - 1.0) <= 0.05
    assert not fractal_service.dim_star_diagnostic(measure, 0.5)[1]


def test_holder_lebesgue():
    """Test a finite Holder constant for alpha = 1 on Lebesgue"""
    result = fractal_service.holder_constant(fractal_service.lebesgue_measure(4000), 1.0)
    assert not result.divergent
    assert result.constant == pytest.approx(0.25, rel=0.2)
    assert len(result.lengths) >= 3


def test_holder_cantor():
    """Test boundedness at the Cantor dimension and divergence above it"""
    measure = fractal_service.cantor_measure(10)
    at_dim = fractal_service.holder_constant(measure, CANTOR_DIM)
    above = fractal_service.holder_constant(measure, 0.9)

    assert not at_dim.divergent
    assert at_dim.constant is not None
    assert above.divergent
    assert above.constant is None
    assert above.trend > 0.2


def test_holder_edge_cases():
    result = fractal_service.holder_constant(SpectralMeasure(atoms=[1.0], weights=[1.0]), 0.5)
    assert result.divergent
    with pytest.raises(ParamError):
        fractal_service.holder_constant(fractal_service.cantor_measure(3), 0.0)
    with pytest.raises(ParamError):
        fractal_service.holder_constant(fractal_service.cantor_measure(3), 1.5)


def test_fourier_transform_single_atom():
    measure = SpectralMeasure(atoms=[2.0], weights=[0.5])
    xi = np.array([0.0, 1.0, math.pi])
    assert np.allclose(fractal_service.fourier_transform(measure, xi), 0.5 * np.exp(-2j * xi))


@pytest.mark.parametrize("T", [0.5, 3.0, 20.0])
def test_abel_fourier_closed_form_matches_quadrature(T):
    """Test the pair-sum formula against direct time quadrature"""
    rng = np.random.default_rng(12)
    measure = fractal_service.atomic_measure(rng.uniform(0, 4, 30), rng.uniform(0, 1, 30))
    bump = hsfc_service.bump(0.5, 3.5)
    for f in (None, 2.0, bump, np.cos):
        closed = fractal_service.abel_fourier_integral(measure, T, f)
        direct = fractal_service.abel_fourier_quadrature(measure, T, f)
        assert closed == pytest.approx(direct, rel=1e-8)


def test_fourier_abel_point_mass():
    """Test linear growth of the Abel integral for an atom"""
    measure = SpectralMeasure(atoms=[2.0], weights=[1.0])
    times = np.geomspace(1, 1e4, 9)
    assert not fractal_service.fourier_abel_check(measure, 1.0, times).bounded
    report = fractal_service.fourier_abel_check(measure, 0.0, times)
    assert report.bounded
    assert report.growth == pytest.approx(1.0)


def test_fourier_abel_lebesgue():
    report = fractal_service.fourier_abel_check(fractal_service.lebesgue_measure(4000), 1.0, np.geomspace(1, 100, 7))
    assert report.bounded


def test_fourier_abel_cantor():
    """Test decay below the Cantor dimension and growth at alpha = 1"""
    measure = fractal_service.cantor_measure(10)
    times = np.geomspace(1, 1e4, 9)
    assert fractal_service.fourier_abel_check(measure, 0.3, times).bounded
    assert not fractal_service.fourier_abel_check(measure, 1.0, times).bounded


def test_fourier_abel_errors():
    measure = SpectralMeasure(atoms=[2.0], weights=[1.0])
    with pytest.raises(ParamError):
        fractal_service.fourier_abel_check(measure, 0.5, [1.0])
    with pytest.raises(ParamError):
        fractal_service.fourier_abel_check(measure, 0.5, [1.0, 2.0], f=0.0)
