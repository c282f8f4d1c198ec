from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Optional

TOOL_NAME = "alpha-field-extremes"
TOOL_VERSION = "1.0.0"

SEED_ENV_VAR = "ALPHA_FIELD_SEED"
THREADS_ENV_VAR = "ALPHA_FIELD_THREADS"
DEFAULT_SEED = 20130601
DEFAULT_THREADS = 1
DEFAULT_BLOCK_SIZE = 4096

# Profiles
ALPHA_CAP = 2.0 - 1e-6
UNIT_VECTOR_TOL = 1e-10

# Covariance matrices
JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
DIAGONAL_TOL = 1e-10

# D4 expansion check
D4_TOLERANCE = 0.10
D4_RADIUS_MIN = 1e-4
D4_RADIUS_MAX = 1e-1
D4_RADIUS_COUNT = 7

# Circulant embedding
CIRCULANT_CLIP_TOL = 1e-8

# Pickands estimation
PICKANDS_STEP = 0.01
PICKANDS_HORIZON_HEAVY = 16.0
PICKANDS_HORIZON_ROUGH = 8.0
PICKANDS_TRACE_FRACTIONS = (0.25, 0.5, 1.0)

# Asymptotics
PRE_ASYMPTOTIC_LEVEL = 0.1
QUADRATURE_RTOL = 1e-8
MILLS_SWITCH = 8.0

# Monte Carlo
RESOLUTION_FACTOR = 0.1
MIN_REPS = 100
MIN_EXPECTED_HITS = 10.0
CONFIDENCE_LEVEL = 0.95
HISTOGRAM_BINS = 64


@dataclass(frozen=True)
class RunSettings:
    seed: int = DEFAULT_SEED
    threads: int = DEFAULT_THREADS
    block_size: int = DEFAULT_BLOCK_SIZE


def _int_from_env(name: str) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw.strip())
    except ValueError:
        logging.warning(f"Ignoring non-integer value {raw!r} in {name}")
        return None


def resolve_seed(cli_seed: Optional[int]) -> int:
    """Pick the run seed: --seed flag, then the environment override, then the default."""
    if cli_seed is not None:
        return int(cli_seed)
    env_seed = _int_from_env(SEED_ENV_VAR)
    if env_seed is not None:
        logging.warning(f"Seed {env_seed} taken from {SEED_ENV_VAR}")
        return env_seed
    return DEFAULT_SEED


def resolve_threads(cli_threads: Optional[int]) -> int:
    if cli_threads is not None:
        return max(1, int(cli_threads))
    env_threads = _int_from_env(THREADS_ENV_VAR)
    if env_threads is not None:
        return max(1, env_threads)
    return DEFAULT_THREADS


def build_run_settings(cli_seed: Optional[int], cli_threads: Optional[int]) -> RunSettings:
    return RunSettings(seed=resolve_seed(cli_seed), threads=resolve_threads(cli_threads))
