"""Shared pytest fixtures for all tests."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict

import pytest

from fields.profiles import AlphaProfile, FieldSpec

SPECS_DIR = Path(__file__).resolve().parents[1] / "specs"


@pytest.fixture
def temp_dir(tmp_path):
    """Provide a temporary directory for test files."""
    return tmp_path


@pytest.fixture
def specs_dir() -> Path:
    """Directory holding the demo field descriptions."""
    return SPECS_DIR


@pytest.fixture
def stationary_spec() -> FieldSpec:
    """exp(-|t - s|) on [0, 1]: the classical alpha = 1 stationary case."""
    return FieldSpec.stationary([1.0], [1.0], lower=0.0, T=1.0, name="stationary_exp")


@pytest.fixture
def unique_min_profile() -> AlphaProfile:
    """alpha(t) = 1 + (t - 0.5)^2."""
    return AlphaProfile.unique_min(1.0, t0=0.5, M=1.0, beta=2.0)


@pytest.fixture
def unique_min_spec(unique_min_profile: AlphaProfile) -> FieldSpec:
    """Standardized mfBm on [0.25, 1] whose exponent has one interior minimizer."""
    return FieldSpec.aggregate_mfbm([unique_min_profile], lower=0.25, T=1.0, name="unique_min")


@pytest.fixture
def plateau_profile() -> AlphaProfile:
    """Exponent 1.2 on [0.4, 0.6], rising quadratically on both sides."""
    return AlphaProfile.plateau(1.2, a=0.4, b=0.6, M=1.0, beta=2.0, M_tilde=1.0, beta_tilde=2.0)


@pytest.fixture
def mixed_spec(unique_min_profile: AlphaProfile, plateau_profile: AlphaProfile) -> FieldSpec:
    """Two-coordinate aggregate with one unique minimizer and one plateau."""
    return FieldSpec.aggregate_mfbm([unique_min_profile, plateau_profile], lower=0.25, T=1.0, name="mixed")


@pytest.fixture
def stationary_spec_data() -> Dict[str, Any]:
    """JSON form of the alpha = 1 stationary field."""
    return json.loads((SPECS_DIR / "stationary_exp.json").read_text(encoding="utf-8"))

