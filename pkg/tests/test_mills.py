"""Tests for asymptotics/mills.py module."""
from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asymptotics.mills import log_mills_survival, mills_survival


def _oracle(u: float) -> mpmath.mpf:
    with mpmath.workdps(50):
        return mpmath.erfc(mpmath.mpf(u) / mpmath.sqrt(2)) / 2


class TestMillsSurvival:
    """Tests for mills_survival function."""

    @pytest.mark.parametrize("u", [-3.0, 0.0, 1.0, 2.5, 5.0, 7.99, 8.01, 10.0, 20.0, 30.0, 37.0])
    def test_relative_accuracy(self, u):
        """Test Psi(u) to 1e-12 relative error against 50-digit arithmetic."""
        expected = float(_oracle(u))
        assert mills_survival(u) == pytest.approx(expected, rel=1e-12)

    def test_at_zero(self):
        """Test Psi(0) = 1/2."""
        assert mills_survival(0.0) == 0.5

    def test_continuous_at_switch(self):
        """Test that the erfc and series branches agree at |u| = 8."""
        below = mills_survival(8.0)
        above = mills_survival(8.0 + 1e-12)
        assert above == pytest.approx(below, rel=1e-9)

    def test_vectorized(self):
        """Test array input."""
        values = mills_survival(np.array([0.0, 1.0, 10.0]))
        assert values.shape == (3,)
        assert values[0] == 0.5

    def test_negative_tail(self):
        """Test Psi(-u) = 1 - Psi(u) deep in the left tail."""
        assert mills_survival(-9.0) == pytest.approx(1.0 - float(_oracle(9.0)), rel=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(min_value=-6.0, max_value=6.0, allow_nan=False))
    def test_reflection(self, u):
        """Test Psi(u) + Psi(-u) = 1."""
        assert mills_survival(u) + mills_survival(-u) == pytest.approx(1.0, abs=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(min_value=-6.0, max_value=36.0, allow_nan=False))
    def test_monotone_decreasing(self, u):
        """Test that Psi decreases."""
        assert mills_survival(u + 0.5) < mills_survival(u)


class TestLogMillsSurvival:
    """Tests for log_mills_survival function."""

    @pytest.mark.parametrize("u", [1.0, 8.5, 38.0, 100.0, 1000.0])
    def test_log_accuracy(self, u):
        """Test log Psi(u) far beyond the float64 range of Psi itself."""
        with mpmath.workdps(50):
            expected = float(mpmath.log(_oracle(u)))
        assert log_mills_survival(u) == pytest.approx(expected, rel=1e-12)

    def test_matches_log_of_value(self):
        """Test agreement with log(mills_survival) where both are representable."""
        assert log_mills_survival(4.0) == pytest.approx(math.log(mills_survival(4.0)), rel=1e-14)

    def test_vectorized(self):
        """Test array input."""
        values = log_mills_survival(np.array([1.0, 50.0]))
        assert np.all(np.isfinite(values))
