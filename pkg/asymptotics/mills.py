from __future__ import annotations

import math
from typing import Any

import numpy as np
from scipy.special import erfc

from utils.settings import MILLS_SWITCH

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
SERIES_TERMS = 60


def _mills_series(u: float) -> float:
    """sum_n (-1)^n (2n-1)!! / u^(2n), truncated before the terms start to grow."""
    inv = 1.0 / (u * u)
    term = 1.0
    total = 1.0
    for n in range(1, SERIES_TERMS):
        nxt = -term * (2 * n - 1) * inv
        if abs(nxt) >= abs(term) or abs(nxt) < 1e-17 * abs(total):
            break
        term = nxt
        total += term
    return total


def _log_survival_scalar(u: float) -> float:
    if u > MILLS_SWITCH:
        return -0.5 * u * u - LOG_SQRT_2PI - math.log(u) + math.log(_mills_series(u))
    if u < -MILLS_SWITCH:
        return math.log1p(-math.exp(_log_survival_scalar(-u)))
    return math.log(0.5 * float(erfc(u / math.sqrt(2.0))))


def _survival_scalar(u: float) -> float:
    if u > MILLS_SWITCH:
        return math.exp(-0.5 * u * u - LOG_SQRT_2PI) / u * _mills_series(u)
    if u < -MILLS_SWITCH:
        return 1.0 - _survival_scalar(-u)
    return 0.5 * float(erfc(u / math.sqrt(2.0)))


def mills_survival(u: Any) -> Any:
    """Psi(u) = P(N > u): erfc for |u| <= 8, the Mills-ratio expansion beyond."""
    if np.ndim(u) == 0:
        return _survival_scalar(float(u))
    return np.vectorize(_survival_scalar, otypes=[float])(np.asarray(u, dtype=float))


def log_mills_survival(u: Any) -> Any:
    """log Psi(u), finite wherever Psi(u) itself would underflow."""
    if np.ndim(u) == 0:
        return _log_survival_scalar(float(u))
    return np.vectorize(_log_survival_scalar, otypes=[float])(np.asarray(u, dtype=float))
