"""Tests for fields/covariance.py module."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from fields.covariance import (
    AggregateMfbmKernel,
    CallableKernel,
    CovarianceDomainError,
    CovarianceMatrixError,
    FbmKernel,
    MfbmKernel,
    PowExpKernel,
    aggregate_cov,
    build_cov_matrix,
    chi_cylinder_cov,
    d_normalizer,
    default_radii,
    factorize,
    field_kernel,
    grid_separation,
    mfbm_cov,
    mfbm_variance,
    std_mfbm_cov,
    verify_d4_expansion,
)
from fields.profiles import AlphaProfile, CovarianceModelError, FieldSpec, load_field_spec
from utils.settings import D4_RADIUS_COUNT, JITTER_LADDER

times = st.floats(min_value=0.05, max_value=3.0, allow_nan=False)


class TestDNormalizer:
    """Tests for d_normalizer function."""

    @pytest.mark.parametrize("x", [0.3, 1.0, 1.5, 1.9])
    def test_matches_gamma_form(self, x):
        """Test D(x) = 2 pi / (Gamma(x + 1) sin(pi x / 2))."""
        expected = 2.0 * math.pi / (gamma(x + 1.0) * math.sin(math.pi * x / 2.0))
        assert d_normalizer(x) == pytest.approx(expected, rel=1e-12)

    def test_at_one(self):
        """Test D(1) = 2 pi."""
        assert d_normalizer(1.0) == pytest.approx(2.0 * math.pi)

    def test_vectorized(self):
        """Test array input returns an array."""
        values = d_normalizer(np.array([0.5, 1.0]))
        assert values.shape == (2,)


class TestMfbmCovariance:
    """Tests for mfbm_cov, mfbm_variance and std_mfbm_cov functions."""

    def test_constant_profile_reduces_to_fbm(self):
        """Test that a constant exponent gives D(alpha)/2 (t^a + s^a - |t-s|^a)."""
        profile = AlphaProfile.constant(1.0)
        expected = 0.5 * d_normalizer(1.0) * (0.3 + 0.8 - 0.5)
        assert mfbm_cov(0.3, 0.8, profile) == pytest.approx(expected)

    def test_variance_matches_diagonal(self, unique_min_profile):
        """Test that Cov(B(t), B(t)) is the variance."""
        assert mfbm_cov(0.7, 0.7, unique_min_profile) == pytest.approx(mfbm_variance(0.7, unique_min_profile))

    def test_exponent_two_is_rejected(self):
        """Test that the mfBm normalization is singular at alpha = 2."""
        with pytest.raises(CovarianceDomainError):
            mfbm_cov(0.2, 0.4, AlphaProfile.constant(2.0))

    def test_negative_time_is_rejected(self, unique_min_profile):
        """Test the non-negative time domain."""
        with pytest.raises(CovarianceDomainError):
            mfbm_cov(-0.1, 0.4, unique_min_profile)

    def test_standardized_at_zero_is_rejected(self, unique_min_profile):
        """Test that standardization at time 0 is undefined."""
        with pytest.raises(CovarianceDomainError):
            std_mfbm_cov(0.0, 0.5, unique_min_profile)

    def test_standardized_diagonal_is_exactly_one(self, unique_min_profile):
        """Test the unit variance of the standardized process."""
        assert std_mfbm_cov(0.37, 0.37, unique_min_profile) == 1.0

    @settings(max_examples=50, deadline=None)
    @given(times, times)
    def test_symmetry_is_bit_exact(self, s, t):
        """Test r(s, t) == r(t, s) without rounding differences."""
        profile = AlphaProfile.unique_min(1.0, t0=0.5, M=1.0, beta=2.0)
        assert std_mfbm_cov(s, t, profile) == std_mfbm_cov(t, s, profile)

    @settings(max_examples=50, deadline=None)
    @given(times, times)
    def test_standardized_bounded_by_one(self, s, t):
        """Test the Cauchy-Schwarz bound |r| <= 1."""
        profile = AlphaProfile.unique_min(0.8, t0=1.0, M=0.5, beta=1.5)
        assert abs(std_mfbm_cov(s, t, profile)) <= 1.0


class TestAggregateAndChi:
    """Tests for aggregate_cov and chi_cylinder_cov functions."""

    def test_aggregate_is_mean_of_coordinates(self, mixed_spec):
        """Test Cov = k^-1 sum_i r_i(t_i, s_i)."""
        t = np.array([0.4, 0.7])
        s = np.array([0.5, 0.6])
        expected = 0.5 * (
            std_mfbm_cov(0.4, 0.5, mixed_spec.profiles[0]) + std_mfbm_cov(0.7, 0.6, mixed_spec.profiles[1])
        )
        assert aggregate_cov(t, s, mixed_spec) == pytest.approx(expected, rel=1e-14)

    def test_aggregate_diagonal(self, mixed_spec):
        """Test unit variance of the aggregate."""
        point = np.array([0.3, 0.9])
        assert aggregate_cov(point, point, mixed_spec) == pytest.approx(1.0, abs=1e-15)

    def test_chi_cylinder_inner_product(self, unique_min_profile):
        """Test Cov(Y(t,u), Y(s,v)) = r(t, s) <u, v>."""
        u = (1.0, 0.0)
        v = (math.sqrt(0.5), math.sqrt(0.5))
        value = chi_cylinder_cov((0.4, u), (0.6, v), unique_min_profile)
        assert value == pytest.approx(std_mfbm_cov(0.4, 0.6, unique_min_profile) * math.sqrt(0.5))

    def test_chi_cylinder_symmetry(self, unique_min_profile):
        """Test bit-identical symmetry on the cylinder."""
        p = (0.4, (0.6, 0.8))
        q = (0.9, (0.0, -1.0))
        assert chi_cylinder_cov(p, q, unique_min_profile) == chi_cylinder_cov(q, p, unique_min_profile)

    def test_chi_cylinder_diagonal(self, unique_min_profile):
        """Test unit variance on the cylinder."""
        assert chi_cylinder_cov((0.5, (0.6, 0.8)), (0.5, (0.6, 0.8)), unique_min_profile) == 1.0

    def test_chi_cylinder_rejects_non_unit_direction(self, unique_min_profile):
        """Test that directions must lie on the sphere."""
        with pytest.raises(CovarianceDomainError):
            chi_cylinder_cov((0.5, (1.0, 1.0)), (0.6, (1.0, 0.0)), unique_min_profile)


class TestKernels:
    """Tests for the Kernel classes and field_kernel function."""

    def test_field_kernel_dispatch(self, stationary_spec, mixed_spec):
        """Test the kernel chosen for each covariance model."""
        assert isinstance(field_kernel(stationary_spec), PowExpKernel)
        assert isinstance(field_kernel(mixed_spec), AggregateMfbmKernel)

    def test_field_kernel_needs_model(self, specs_dir):
        """Test that a field without a covariance model has no kernel."""
        with pytest.raises(CovarianceModelError, match="kernel"):
            field_kernel(load_field_spec(specs_dir / "unique_min_unit_scale.json"))

    def test_powexp_value(self, stationary_spec):
        """Test exp(-|t - s|) for the alpha = 1 stationary field."""
        kernel = field_kernel(stationary_spec)
        assert kernel([0.2], [0.7]) == pytest.approx(math.exp(-0.5))

    def test_pairwise_matches_scalar(self, mixed_spec):
        """Test that the vectorized form agrees with pointwise calls."""
        kernel = AggregateMfbmKernel(mixed_spec)
        pts = np.array([[0.3, 0.4], [0.5, 0.5], [0.8, 0.9]])
        matrix = kernel.pairwise(pts, pts)
        for i in range(3):
            for j in range(3):
                assert matrix[i, j] == pytest.approx(kernel(pts[i], pts[j]), rel=1e-13)

    def test_fbm_kernel(self):
        """Test Cov(B(s), B(t)) = (|s|^a + |t|^a - |t-s|^a) / 2."""
        kernel = FbmKernel(1.5)
        assert kernel([1.0], [2.0]) == pytest.approx(0.5 * (1.0 + 2.0**1.5 - 1.0))

    def test_callable_kernel_orders_arguments(self):
        """Test that a plain function always sees the canonical order."""
        seen = []

        def cov(p, q):
            seen.append((float(p[0]), float(q[0])))
            return math.exp(-abs(p[0] - q[0]))

        kernel = CallableKernel(cov)
        kernel([0.9], [0.1])
        assert seen == [(0.1, 0.9)]

    def test_describe(self, unique_min_profile):
        """Test the kernel description used in run records."""
        assert MfbmKernel(unique_min_profile).describe()["kernel"] == "mfbm"


class TestVerifyD4Expansion:
    """Tests for verify_d4_expansion function."""

    def test_default_radii(self):
        """Test the log-spaced radii from 1e-1 down to 1e-4."""
        radii = default_radii()
        assert radii.size == D4_RADIUS_COUNT
        assert radii[0] == pytest.approx(1e-1)
        assert radii[-1] == pytest.approx(1e-4)

    def test_stationary_ratio_converges(self, stationary_spec):
        """Test that 1 - exp(-|s|) over |s| tends to 1."""
        report = verify_d4_expansion(stationary_spec, field_kernel(stationary_spec), [0.5])
        assert report.converged
        assert report.errors[-1] < 1e-3

    def test_aggregate_ratio_converges(self, unique_min_spec):
        """Test the standardized mfBm against its t^(-alpha)/2 local scale."""
        report = verify_d4_expansion(unique_min_spec, field_kernel(unique_min_spec), [0.6])
        assert report.converged

    def test_wrong_scale_does_not_converge(self):
        """Test that a field with a mismatched C fails the check."""
        spec = FieldSpec.stationary([1.0], [1.0], lower=0.0, T=1.0)
        kernel = PowExpKernel([1.0], [2.0])
        report = verify_d4_expansion(spec, kernel, [0.5])
        assert not report.converged
        assert report.ratios[-1] == pytest.approx(2.0, rel=1e-3)

    def test_zero_scale_gives_nan_ratio(self):
        """Test that a vanishing leading term is reported instead of dividing by zero."""
        spec = FieldSpec.stationary([1.0], [0.0], lower=0.0, T=1.0)
        report = verify_d4_expansion(spec, PowExpKernel([1.0], [1.0]), [0.5])
        assert math.isnan(report.ratios[0])
        assert not report.converged

    def test_radius_leaving_domain(self, stationary_spec):
        """Test that t + s must stay in the domain."""
        with pytest.raises(CovarianceDomainError):
            verify_d4_expansion(stationary_spec, field_kernel(stationary_spec), [0.95])

    def test_radii_must_decrease(self, stationary_spec):
        """Test the radius list validation."""
        with pytest.raises(ValueError):
            verify_d4_expansion(stationary_spec, field_kernel(stationary_spec), [0.5], radii=[1e-3, 1e-2])


class TestBuildCovMatrix:
    """Tests for build_cov_matrix, factorize and grid_separation functions."""

    def test_symmetric_and_factorized(self, unique_min_profile):
        """Test exact symmetry and L L^T reconstruction."""
        grid = np.linspace(0.3, 1.0, 40)
        result = build_cov_matrix(grid, MfbmKernel(unique_min_profile))
        assert np.array_equal(result.matrix, result.matrix.T)
        np.testing.assert_allclose(result.factor @ result.factor.T, result.matrix + result.jitter * np.eye(40), atol=1e-12)
        assert result.size == 40

    def test_separation_positive_on_distinct_points(self, unique_min_profile):
        """Test epsilon_grid > 0 for a grid without repeated points."""
        result = build_cov_matrix(np.linspace(0.3, 1.0, 10), MfbmKernel(unique_min_profile))
        assert 0.0 < result.separation < 1.0

    def test_coincident_points_rejected(self, stationary_spec):
        """Test that repeated grid points are refused."""
        with pytest.raises(CovarianceMatrixError):
            build_cov_matrix(np.array([0.1, 0.2, 0.2]), field_kernel(stationary_spec))

    def test_non_standardized_kernel_rejected(self):
        """Test the unit-diagonal check on standardized kernels."""
        kernel = CallableKernel(lambda p, q: 2.0 * math.exp(-abs(p[0] - q[0])))
        with pytest.raises(CovarianceMatrixError):
            build_cov_matrix(np.array([0.1, 0.2]), kernel)

    def test_unstandardized_kernel_allowed_when_declared(self):
        """Test that FbmKernel skips the unit-diagonal check."""
        result = build_cov_matrix(np.array([0.5, 1.0, 1.5]), FbmKernel(1.0))
        assert result.matrix[2, 2] == pytest.approx(1.5)

    def test_jitter_escalation(self):
        """Test that a singular matrix gets the first sufficient jitter."""
        matrix = np.ones((3, 3))
        factor, jitter = factorize(matrix)
        assert jitter in JITTER_LADDER[1:]
        np.testing.assert_allclose(factor @ factor.T, matrix + jitter * np.eye(3), atol=1e-10)

    def test_indefinite_matrix_reports_eigenvalue(self):
        """Test the error raised when jitter cannot rescue the matrix."""
        matrix = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(CovarianceMatrixError) as excinfo:
            factorize(matrix)
        assert excinfo.value.min_eigenvalue == pytest.approx(-1.0)
        assert excinfo.value.jitter == JITTER_LADDER[-1]

    def test_grid_separation_single_point(self):
        """Test the one-point convention."""
        assert grid_separation(np.ones((1, 1))) == 1.0
