from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from fields.profiles import AlphaProfile, FieldSpec
from utils.settings import (
    D4_RADIUS_COUNT,
    D4_RADIUS_MAX,
    D4_RADIUS_MIN,
    D4_TOLERANCE,
    DIAGONAL_TOL,
    JITTER_LADDER,
    UNIT_VECTOR_TOL,
)

LOG_TWO_PI = math.log(2.0 * math.pi)


class CovarianceDomainError(ValueError):
    """Raised when a covariance kernel is evaluated outside its domain."""


class CovarianceMatrixError(RuntimeError):
    """Raised when a covariance matrix cannot be built or factorized."""

    def __init__(self, message: str, min_eigenvalue: Optional[float] = None, jitter: Optional[float] = None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
        self.jitter = jitter


def d_normalizer(x: Any) -> Any:
    """D(x) = 2*pi / (Gamma(x + 1) sin(pi x / 2)), with Gamma taken through log-Gamma."""
    arg = np.asarray(x, dtype=float)
    value = np.exp(LOG_TWO_PI - gammaln(arg + 1.0)) / np.sin(0.5 * math.pi * arg)
    return float(value) if value.ndim == 0 else value


def _exponents(profile: AlphaProfile, times: np.ndarray) -> np.ndarray:
    values = np.asarray(profile(times), dtype=float)
    if np.any(values <= 0.0) or np.any(values >= 2.0):
        raise CovarianceDomainError("mfBm covariance needs profile values strictly inside (0, 2)")
    return values


def _ordered(s: Any, t: Any) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(s, dtype=float)
    b = np.asarray(t, dtype=float)
    return np.minimum(a, b), np.maximum(a, b)


def _scalar(value: np.ndarray) -> Any:
    return float(value) if np.ndim(value) == 0 else value


def mfbm_cov(s: Any, t: Any, profile: AlphaProfile) -> Any:
    """E[B(t)B(s)] of the mfBm with exponent profile alpha(.)."""
    lo, hi = _ordered(s, t)
    if np.any(lo < 0.0):
        raise CovarianceDomainError("mfBm covariance is defined for non-negative times")
    exponent = 0.5 * _exponents(profile, lo) + 0.5 * _exponents(profile, hi)
    value = 0.5 * d_normalizer(exponent) * (lo**exponent + hi**exponent - (hi - lo) ** exponent)
    return _scalar(value)


def mfbm_variance(t: Any, profile: AlphaProfile) -> Any:
    times = np.asarray(t, dtype=float)
    exponent = _exponents(profile, times)
    return _scalar(d_normalizer(exponent) * times**exponent)


def std_mfbm_cov(s: Any, t: Any, profile: AlphaProfile) -> Any:
    """Correlation of the standardized mfBm; exactly 1 on the diagonal."""
    lo, hi = _ordered(s, t)
    if np.any(lo <= 0.0):
        raise CovarianceDomainError("standardized mfBm is undefined at time 0")
    cov = np.asarray(mfbm_cov(lo, hi, profile))
    scale = np.sqrt(np.asarray(mfbm_variance(lo, profile)) * np.asarray(mfbm_variance(hi, profile)))
    value = np.where(lo == hi, 1.0, np.clip(cov / scale, -1.0, 1.0))
    return _scalar(value)


def aggregate_cov(t: Any, s: Any, spec: FieldSpec) -> Any:
    """Covariance of k^(-1/2) * sum_i of independent standardized mfBm coordinates."""
    left = np.asarray(t, dtype=float)
    right = np.asarray(s, dtype=float)
    total: Any = 0.0
    for i, profile in enumerate(spec.profiles):
        total = total + np.asarray(std_mfbm_cov(left[..., i], right[..., i], profile))
    return _scalar(total / spec.k)


def _check_unit(vector: np.ndarray, label: str) -> None:
    norm = float(np.linalg.norm(vector))
    if abs(norm - 1.0) > UNIT_VECTOR_TOL:
        raise CovarianceDomainError(f"{label} must be a unit vector (norm {norm:.15g})")


def chi_cylinder_cov(
    p: Tuple[float, Sequence[float]], q: Tuple[float, Sequence[float]], profile: AlphaProfile
) -> float:
    """Covariance of Y(t, u) = sum_i B_i(t) u_i on the cylinder [T1, T2] x S_{k-1}."""
    t, u = float(p[0]), np.asarray(p[1], dtype=float)
    s, v = float(q[0]), np.asarray(q[1], dtype=float)
    if u.shape != v.shape:
        raise CovarianceDomainError("direction vectors must have the same dimension")
    _check_unit(u, "u")
    _check_unit(v, "v")
    if t == s and np.array_equal(u, v):
        return 1.0
    inner = float(np.dot(u, v)) if (t, tuple(u)) <= (s, tuple(v)) else float(np.dot(v, u))
    return float(np.clip(std_mfbm_cov(t, s, profile) * inner, -1.0, 1.0))


class Kernel:
    """Covariance function on points of R^k with a vectorized pairwise form."""

    standardized = True

    def pairwise(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, p: Any, q: Any) -> float:
        a = np.atleast_1d(np.asarray(p, dtype=float))
        b = np.atleast_1d(np.asarray(q, dtype=float))
        if tuple(a) > tuple(b):
            a, b = b, a
        return float(self.pairwise(a[None, :], b[None, :])[0, 0])

    def describe(self) -> Dict[str, Any]:
        return {"kernel": type(self).__name__}


class AggregateMfbmKernel(Kernel):
    def __init__(self, spec: FieldSpec):
        self.spec = spec

    def pairwise(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        return np.asarray(aggregate_cov(left[:, None, :], right[None, :, :], self.spec))

    def describe(self) -> Dict[str, Any]:
        return {"kernel": "aggregate_mfbm", "alphas": list(self.spec.alphas)}


class MfbmKernel(Kernel):
    """One-dimensional mfBm kernel; standardized by default."""

    def __init__(self, profile: AlphaProfile, standardized: bool = True):
        self.profile = profile
        self.standardized = standardized

    def pairwise(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        fn = std_mfbm_cov if self.standardized else mfbm_cov
        return np.asarray(fn(left[:, None, 0], right[None, :, 0], self.profile))

    def describe(self) -> Dict[str, Any]:
        return {"kernel": "mfbm", "profile": self.profile.to_dict(), "standardized": self.standardized}


class PowExpKernel(Kernel):
    """Stationary product kernel prod_i exp(-C_i |t_i - s_i|^alpha_i)."""

    def __init__(self, alphas: Sequence[float], scales: Sequence[float]):
        self.alphas = np.asarray(alphas, dtype=float)
        self.scales = np.asarray(scales, dtype=float)

    def pairwise(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        lags = np.abs(left[:, None, :] - right[None, :, :])
        return np.exp(-np.sum(self.scales * lags**self.alphas, axis=-1))

    def describe(self) -> Dict[str, Any]:
        return {"kernel": "stationary_powexp", "alphas": self.alphas.tolist(), "scales": self.scales.tolist()}


class FbmKernel(Kernel):
    """Covariance of the fBm B_alpha with Var B(t) = |t|^alpha (not standardized)."""

    standardized = False

    def __init__(self, alpha: float):
        self.alpha = float(alpha)

    def pairwise(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        s = np.abs(left[:, None, 0])
        t = np.abs(right[None, :, 0])
        lag = np.abs(left[:, None, 0] - right[None, :, 0])
        return 0.5 * (s**self.alpha + t**self.alpha - lag**self.alpha)

    def describe(self) -> Dict[str, Any]:
        return {"kernel": "fbm", "alpha": self.alpha}


class CallableKernel(Kernel):
    """Adapter for a plain function cov(p, q); evaluated on the upper triangle and mirrored."""

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray], float], standardized: bool = True):
        self.fn = fn
        self.standardized = standardized

    def pairwise(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        out = np.empty((left.shape[0], right.shape[0]), dtype=float)
        for i, p in enumerate(left):
            for j, q in enumerate(right):
                a, b = (p, q) if tuple(p) <= tuple(q) else (q, p)
                out[i, j] = float(self.fn(a, b))
        return out


def field_kernel(spec: FieldSpec) -> Kernel:
    if spec.require_model("a covariance kernel") == "aggregate_mfbm":
        return AggregateMfbmKernel(spec)
    scales = [float(scale(np.zeros(spec.k))) for scale in spec.variance_scales]
    return PowExpKernel(spec.alphas, scales)


@dataclass(frozen=True)
class ExpansionReport:
    point: Tuple[float, ...]
    radii: Tuple[float, ...]
    ratios: Tuple[float, ...]
    errors: Tuple[float, ...]
    tolerance: float
    converged: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "point": list(self.point),
            "radii": list(self.radii),
            "ratios": list(self.ratios),
            "errors": list(self.errors),
            "tolerance": self.tolerance,
            "converged": self.converged,
        }


def default_radii() -> np.ndarray:
    return np.logspace(math.log10(D4_RADIUS_MAX), math.log10(D4_RADIUS_MIN), D4_RADIUS_COUNT)


def verify_d4_expansion(
    spec: FieldSpec,
    covfn: Callable[[Any, Any], float],
    t: Sequence[float],
    radii: Optional[Sequence[float]] = None,
    tolerance: float = D4_TOLERANCE,
    direction: Optional[Sequence[float]] = None,
) -> ExpansionReport:
    """Trace (1 - Cov(X(t), X(t+s))) / sum_i C_i(t)|s_i|^alpha_i(t_i) as s shrinks to 0."""
    point = np.asarray(t, dtype=float)
    steps = default_radii() if radii is None else np.asarray(radii, dtype=float)
    if steps.size == 0 or np.any(steps <= 0) or np.any(np.diff(steps) >= 0):
        raise ValueError("radii must be a non-empty, strictly decreasing list of positive numbers")
    unit = np.ones(spec.k) / math.sqrt(spec.k) if direction is None else np.asarray(direction, dtype=float)
    unit = unit / np.linalg.norm(unit)

    scales = spec.local_scales(point)
    alphas = spec.local_alphas(point)
    ratios: List[float] = []
    for radius in steps:
        shift = radius * unit
        moved = point + shift
        if not spec.contains(moved):
            raise CovarianceDomainError(f"t + s leaves the domain at radius {radius:g}")
        one_minus = 1.0 - covfn(point, moved)
        leading = float(np.sum(scales * np.abs(shift) ** alphas))
        ratios.append(one_minus / leading if leading > 0.0 else math.nan)

    errors = [abs(ratio - 1.0) for ratio in ratios]
    tail = errors[-3:]
    monotone = all(later <= earlier for earlier, later in zip(tail, tail[1:]))
    converged = bool(math.isfinite(errors[-1]) and errors[-1] <= tolerance and monotone)
    if not converged:
        trace = ", ".join(f"{r:.3g}:{q:.6g}" for r, q in zip(steps, ratios))
        logging.warning(f"D4 expansion not confirmed at t={point.tolist()}; ratio trace {trace}")
    return ExpansionReport(
        point=tuple(point.tolist()),
        radii=tuple(steps.tolist()),
        ratios=tuple(ratios),
        errors=tuple(errors),
        tolerance=tolerance,
        converged=converged,
    )


@dataclass(frozen=True, eq=False)
class FactorizedCovariance:
    points: np.ndarray
    matrix: np.ndarray
    factor: np.ndarray
    jitter: float
    separation: float

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])


def grid_separation(matrix: np.ndarray) -> float:
    """epsilon_grid = 1 - largest off-diagonal entry (positive iff Cov < 1 off the diagonal)."""
    if matrix.shape[0] < 2:
        return 1.0
    off = matrix[~np.eye(matrix.shape[0], dtype=bool)]
    return float(1.0 - off.max())


def factorize(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
    """Cholesky factor with the escalating diagonal-jitter policy."""
    identity = np.eye(matrix.shape[0])
    for jitter in JITTER_LADDER:
        try:
            factor = scipy.linalg.cholesky(matrix + jitter * identity, lower=True)
        except scipy.linalg.LinAlgError:
            continue
        if jitter > 0.0:
            logging.warning(f"Covariance factorization needed jitter {jitter:g} (n={matrix.shape[0]})")
        return factor, jitter
    smallest = float(scipy.linalg.eigvalsh(matrix, subset_by_index=[0, 0])[0])
    raise CovarianceMatrixError(
        f"Covariance matrix is not positive definite after jitter {JITTER_LADDER[-1]:g}; "
        f"smallest eigenvalue {smallest:.3e}",
        min_eigenvalue=smallest,
        jitter=JITTER_LADDER[-1],
    )


def build_cov_matrix(points: Any, covfn: Kernel) -> FactorizedCovariance:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise CovarianceMatrixError("grid is empty")
    if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
        raise CovarianceMatrixError("grid contains coincident points; Cov(X(t), X(s)) < 1 needs t != s")

    raw = covfn.pairwise(pts, pts)
    matrix = np.triu(raw) + np.triu(raw, 1).T
    if covfn.standardized and np.any(np.abs(np.diag(matrix) - 1.0) > DIAGONAL_TOL):
        raise CovarianceMatrixError("kernel is not standardized: diagonal differs from 1")

    logging.debug(f"Factorizing {matrix.shape[0]}x{matrix.shape[0]} covariance matrix")
    factor, jitter = factorize(matrix)
    return FactorizedCovariance(
        points=pts,
        matrix=matrix,
        factor=factor,
        jitter=jitter,
        separation=grid_separation(matrix),
    )
