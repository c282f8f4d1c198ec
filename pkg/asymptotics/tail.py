from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate
from scipy.special import gammaln
from scipy.stats import norm

from asymptotics.mills import log_mills_survival, mills_survival
from fields.profiles import AlphaProfile, ConstantScale, FieldSpec, MfbmLocalScale, structural_checks
from simulation.pickands import PickandsConstant, known_pickands
from utils.settings import CONFIDENCE_LEVEL, PRE_ASYMPTOTIC_LEVEL, QUADRATURE_RTOL

LN2 = math.log(2.0)
PickandsInput = Union[PickandsConstant, float]


class AsymptoticDomainError(ValueError):
    """Raised when a tail formula is requested outside its domain."""


class IntegrationError(RuntimeError):
    """Raised when the constant's integral misses the relative tolerance."""


@dataclass(frozen=True)
class ConstantResult:
    K: float
    log_K: float
    components: Tuple[Tuple[str, float], ...]
    K_interval: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class TailResult:
    alpha_exp: float
    beta_exp: float
    K: float
    u: float
    probability: float
    log_probability: float
    components: Tuple[Tuple[str, float], ...]
    flags: Tuple[str, ...] = ()
    K_interval: Optional[Tuple[float, float]] = None
    formula: str = "general"
    extras: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (self.K > 0.0 and math.isfinite(self.K)):
            raise ValueError(f"K must be positive and finite, got {self.K}")
        if self.beta_exp > 0.0:
            raise ValueError("beta_exp must be <= 0")

    def ledger_product(self) -> float:
        return math.prod(value for _, value in self.components)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "formula": self.formula,
            "alpha_exp": self.alpha_exp,
            "beta_exp": self.beta_exp,
            "K": self.K,
            "K_interval": list(self.K_interval) if self.K_interval else None,
            "u": self.u,
            "probability": self.probability,
            "log_probability": self.log_probability,
            "components": [{"name": name, "value": value} for name, value in self.components],
            "flags": list(self.flags),
            **self.extras,
        }


def threshold_flags(u: float) -> Tuple[str, ...]:
    if not math.isfinite(u) or u <= 1.0:
        raise AsymptoticDomainError(f"threshold u={u} must exceed 1 so that ln u > 0")
    if u <= math.e:
        return ("below_e", "pre_asymptotic")
    return ()


def compute_exponents(spec: FieldSpec) -> Tuple[float, float]:
    """(alpha_exp, beta_exp) = (2 sum_i 1/alpha_i, -sum_{i<=k1} 1/beta_i)."""
    alpha_exp = 2.0 * math.fsum(1.0 / a for a in spec.alphas)
    beta_exp = -math.fsum(1.0 / profile.beta for profile in spec.profiles[: spec.k1])
    return alpha_exp, beta_exp + 0.0


def _pickands_value(entry: PickandsInput) -> Tuple[float, float]:
    if isinstance(entry, PickandsConstant):
        return entry.value, entry.std_error
    value = float(entry)
    if not value > 0.0:
        raise ValueError("Pickands constants must be positive")
    return value, 0.0


def _log_gamma_factor(alpha: float, M: float, beta: float) -> float:
    """log of (alpha^2 / (2M))^(1/beta) * Gamma(1/beta + 1)."""
    return (2.0 * math.log(alpha) - LN2 - math.log(M)) / beta + float(gammaln(1.0 / beta + 1.0))


def _interior_count(spec: FieldSpec) -> int:
    return sum(1 for profile in spec.profiles[: spec.k1] if spec.lower < profile.t0 < spec.T)


def minimizer_integral(spec: FieldSpec) -> float:
    """Integral over O of prod_i C_i(x)^(1/alpha_i).

    Coordinates i <= k1 are frozen at t_i^0; the others run over their
    plateau (or the whole edge for a constant profile).
    """
    box = spec.minimizer_box()
    free = [i for i in range(spec.k) if i >= spec.k1 and box[i][0] < box[i][1]]
    base = np.array([lo for lo, _ in box], dtype=float)
    inv_alpha = 1.0 / np.asarray(spec.alphas, dtype=float)

    def integrand(*coords: float) -> float:
        point = base.copy()
        point[free] = coords
        scales = np.array([float(scale(point)) for scale in spec.variance_scales])
        return float(np.prod(scales**inv_alpha))

    if not free:
        return integrand()

    ranges = [box[i] for i in free]
    opts = {"epsrel": QUADRATURE_RTOL, "epsabs": 0.0, "limit": 200}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            value, abserr = integrate.nquad(integrand, ranges, opts=[opts] * len(ranges))
    except integrate.IntegrationWarning as exc:
        raise IntegrationError(f"quadrature over O did not converge: {exc}") from exc
    if not (value > 0.0 and math.isfinite(value)):
        raise IntegrationError(f"integral over O is not positive: {value}")
    if abserr > 10.0 * QUADRATURE_RTOL * abs(value):
        raise IntegrationError(f"integral error estimate {abserr:.3e} exceeds relative tolerance {QUADRATURE_RTOL:g}")
    return float(value)


def _interval(log_value: float, log_variance: float, confidence: float) -> Optional[Tuple[float, float]]:
    if log_variance <= 0.0:
        return None
    z = float(norm.ppf(0.5 + confidence / 2.0))
    spread = z * math.sqrt(log_variance)
    return (math.exp(log_value - spread), math.exp(log_value + spread))


def compute_constant(
    spec: FieldSpec, pickands: Sequence[PickandsInput], confidence: float = CONFIDENCE_LEVEL
) -> ConstantResult:
    """K_O = 2^q prod_{i<=k1} (alpha_i^2/(2M_i))^(1/beta_i) Gamma(1/beta_i+1) prod_i H_i int_O prod_i C_i^(1/alpha_i).

    q counts the unique minimizers strictly inside (lower, T); a boundary
    minimizer contributes a factor 1.
    """
    if len(pickands) != spec.k:
        raise ValueError(f"expected {spec.k} Pickands constants, got {len(pickands)}")
    components: List[Tuple[str, float]] = []
    logs: List[float] = []

    q = _interior_count(spec)
    components.append(("2^q", 2.0**q))
    logs.append(q * LN2)

    for i, profile in enumerate(spec.profiles[: spec.k1]):
        log_factor = _log_gamma_factor(profile.alpha0, profile.M, profile.beta)
        components.append((f"gamma[{i}]", math.exp(log_factor)))
        logs.append(log_factor)

    log_variance = 0.0
    for i, entry in enumerate(pickands):
        value, se = _pickands_value(entry)
        components.append((f"pickands[{i}]", value))
        logs.append(math.log(value))
        log_variance += (se / value) ** 2

    integral = minimizer_integral(spec)
    components.append(("integral", integral))
    logs.append(math.log(integral))

    log_K = math.fsum(logs)
    return ConstantResult(
        K=math.exp(log_K),
        log_K=log_K,
        components=tuple(components),
        K_interval=_interval(log_K, log_variance, confidence),
    )


def _assemble(
    K: ConstantResult,
    alpha_exp: float,
    beta_exp: float,
    u: float,
    formula: str,
    extras: Optional[Dict[str, Any]] = None,
) -> TailResult:
    flags = list(threshold_flags(u))
    log_u = math.log(u)
    log_probability = K.log_K + alpha_exp * log_u + beta_exp * math.log(log_u) + log_mills_survival(u)
    probability = math.exp(log_probability)
    if probability > PRE_ASYMPTOTIC_LEVEL and "pre_asymptotic" not in flags:
        flags.append("pre_asymptotic")
    if "pre_asymptotic" in flags:
        logging.warning(f"Tail approximation at u={u:g} is in the pre-asymptotic regime ({probability:.4g})")
    components = K.components + (
        ("u_power", u**alpha_exp),
        ("log_power", log_u**beta_exp),
        ("mills", mills_survival(u)),
    )
    return TailResult(
        alpha_exp=alpha_exp,
        beta_exp=beta_exp,
        K=K.K,
        u=float(u),
        probability=probability,
        log_probability=log_probability,
        components=components,
        flags=tuple(flags),
        K_interval=K.K_interval,
        formula=formula,
        extras=extras or {},
    )


def tail_asymptotic(spec: FieldSpec, pickands: Sequence[PickandsInput], u: float) -> TailResult:
    """K_O u^alpha (ln u)^beta Psi(u) for a spec that satisfies A1 and A2."""
    threshold_flags(u)
    failed = [check for check in structural_checks(spec) if check.name in ("A1", "A2", "D3") and not check.passed]
    if failed:
        detail = "; ".join(f"{check.name}: {check.detail}" for check in failed)
        raise AsymptoticDomainError(f"field '{spec.name}' fails its preconditions ({detail})")
    alpha_exp, beta_exp = compute_exponents(spec)
    constant = compute_constant(spec, pickands)
    return _assemble(constant, alpha_exp, beta_exp, u, "general", {"field": spec.name})


def stationary_tail(
    alphas: Sequence[float],
    scales: Sequence[float],
    lengths: Sequence[float],
    pickands: Sequence[PickandsInput],
    u: float,
) -> TailResult:
    """Classical stationary asymptotics prod_i H_i C_i^(1/alpha_i) L_i u^(2/alpha_i) Psi(u), evaluated directly."""
    flags = list(threshold_flags(u))
    components: List[Tuple[str, float]] = []
    K = 1.0
    for i, (alpha, scale, length, entry) in enumerate(zip(alphas, scales, lengths, pickands)):
        value, _ = _pickands_value(entry)
        factor = value * scale ** (1.0 / alpha) * length
        components.append((f"axis[{i}]", factor))
        K *= factor
    alpha_exp = sum(2.0 / alpha for alpha in alphas)
    probability = K * u**alpha_exp * mills_survival(u)
    if probability > PRE_ASYMPTOTIC_LEVEL and "pre_asymptotic" not in flags:
        flags.append("pre_asymptotic")
    components += [("u_power", u**alpha_exp), ("mills", mills_survival(u))]
    return TailResult(
        alpha_exp=alpha_exp,
        beta_exp=0.0,
        K=K,
        u=float(u),
        probability=probability,
        log_probability=math.log(probability),
        components=tuple(components),
        flags=tuple(flags),
        formula="stationary",
    )


@dataclass(frozen=True)
class AggregateTailParams:
    """Per-coordinate (alpha_i, beta_i, M_i, t_i^0) of an aggregate mfBm on [lower, upper]^k."""

    alphas: Tuple[float, ...]
    betas: Tuple[float, ...]
    Ms: Tuple[float, ...]
    t0s: Tuple[float, ...]
    lower: float
    upper: float

    def __post_init__(self) -> None:
        k = len(self.alphas)
        if k < 1 or not len(self.betas) == len(self.Ms) == len(self.t0s) == k:
            raise ValueError("alphas, betas, Ms and t0s must have the same positive length")
        if not 0.0 < self.lower < self.upper:
            raise ValueError("need 0 < lower < upper")
        for t0 in self.t0s:
            if not self.lower < t0 < self.upper:
                raise AsymptoticDomainError(f"minimizer {t0} must lie inside ({self.lower}, {self.upper})")

    @property
    def k(self) -> int:
        return len(self.alphas)

    def profiles(self) -> Tuple[AlphaProfile, ...]:
        return tuple(
            AlphaProfile.unique_min(alpha, t0, M, beta)
            for alpha, beta, M, t0 in zip(self.alphas, self.betas, self.Ms, self.t0s)
        )


def aggregate_field_spec(params: AggregateTailParams) -> FieldSpec:
    """The FieldSpec the aggregate formula specializes: C_i(t) = t_i^(-alpha_i(t_i)) / (2k)."""
    return FieldSpec.aggregate_mfbm(params.profiles(), params.lower, params.upper)


def aggregate_mfbm_tail(params: AggregateTailParams, pickands: Sequence[PickandsInput], u: float) -> TailResult:
    threshold_flags(u)
    k = params.k
    inv_alpha_sum = math.fsum(1.0 / a for a in params.alphas)
    components: List[Tuple[str, float]] = [("2^k", 2.0**k), ("(2k)^-sum", (2.0 * k) ** (-inv_alpha_sum))]
    logs = [k * LN2, -inv_alpha_sum * math.log(2.0 * k)]
    log_variance = 0.0
    for i, (alpha, beta, M, t0, entry) in enumerate(zip(params.alphas, params.betas, params.Ms, params.t0s, pickands)):
        value, se = _pickands_value(entry)
        log_factor = _log_gamma_factor(alpha, M, beta)
        components += [(f"gamma[{i}]", math.exp(log_factor)), (f"pickands[{i}]", value), (f"1/t0[{i}]", 1.0 / t0)]
        logs += [log_factor, math.log(value), -math.log(t0)]
        log_variance += (se / value) ** 2
    log_K = math.fsum(logs)
    constant = ConstantResult(math.exp(log_K), log_K, tuple(components), _interval(log_K, log_variance, CONFIDENCE_LEVEL))
    alpha_exp = 2.0 * inv_alpha_sum
    beta_exp = -math.fsum(1.0 / b for b in params.betas)
    return _assemble(constant, alpha_exp, beta_exp, u, "aggregate_mfbm")


@dataclass(frozen=True)
class ChiTailParams:
    """chi-process built from k independent standardized mfBm's sharing one profile."""

    k: int
    alpha0: float
    t0: float
    M: float
    beta: float
    lower: float
    upper: float

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if not 0.0 < self.lower < self.upper:
            raise ValueError("need 0 < lower < upper")
        if not self.lower < self.t0 < self.upper:
            raise AsymptoticDomainError(f"minimizer {self.t0} must lie inside ({self.lower}, {self.upper})")

    def profile(self) -> AlphaProfile:
        return AlphaProfile.unique_min(self.alpha0, self.t0, self.M, self.beta)


def chi_tail(params: ChiTailParams, pickands: PickandsInput, u: float) -> TailResult:
    """2^(5/2-k/2-1/beta-1/alpha) H alpha^(2/beta) Gamma(1/beta+1) / (M^(1/beta) t0 Gamma(k/2)) u^(k-1+2/alpha) (ln u)^(-1/beta) Psi(u)."""
    threshold_flags(u)
    alpha, beta, k = params.alpha0, params.beta, params.k
    value, se = _pickands_value(pickands)
    log_power2 = (2.5 - k / 2.0 - 1.0 / beta - 1.0 / alpha) * LN2
    log_alpha = (2.0 / beta) * math.log(alpha)
    log_gamma = float(gammaln(1.0 / beta + 1.0))
    log_denominator = math.log(params.M) / beta + math.log(params.t0) + float(gammaln(k / 2.0))
    components = (
        ("power_of_2", math.exp(log_power2)),
        ("pickands", value),
        ("alpha^(2/beta)", math.exp(log_alpha)),
        ("gamma", math.exp(log_gamma)),
        ("1/(M^(1/beta) t0 Gamma(k/2))", math.exp(-log_denominator)),
    )
    log_K = math.fsum([log_power2, math.log(value), log_alpha, log_gamma, -log_denominator])
    constant = ConstantResult(math.exp(log_K), log_K, components, _interval(log_K, (se / value) ** 2, CONFIDENCE_LEVEL))
    return _assemble(constant, k - 1.0 + 2.0 / alpha, -1.0 / beta, u, "chi")


def chi_cylinder_spec(params: ChiTailParams) -> FieldSpec:
    """Cylinder field Y(t, v): time axis with C = t^(-alpha(t))/2, then k-1 sphere axes with alpha = 2, C = 1/2.

    The sphere axes carry a constant profile over [lower, upper]; their box
    volume is swapped for the sphere area in ``chi_tail_cylinder``.
    The spec carries no covariance model; it only feeds the constant.
    """
    time_profile = params.profile()
    profiles = (time_profile,) + tuple(AlphaProfile.constant(2.0) for _ in range(params.k - 1))
    scales = (MfbmLocalScale(0, 0.5, time_profile),) + tuple(ConstantScale(0.5) for _ in range(params.k - 1))
    return FieldSpec(
        params.k,
        1,
        params.upper,
        profiles,
        scales,
        lower=params.lower,
        name="chi_cylinder",
    )


def chi_tail_cylinder(params: ChiTailParams, pickands: PickandsInput, u: float) -> TailResult:
    """chi-process asymptotics assembled from the generic constant on the cylinder field.

    Sphere coordinates are locally Gaussian-type (alpha = 2, C = 1/2, H_2 = 1/sqrt(pi));
    the surface area of S_(k-1) replaces the box [lower, upper]^(k-1) of those axes.
    """
    threshold_flags(u)
    spec = chi_cylinder_spec(params)
    sphere_pickands = [known_pickands(2.0)] * (params.k - 1)
    constant = compute_constant(spec, [pickands] + sphere_pickands)
    # S_0 = {-1, 1} has counting measure 2, which the same formula gives at k = 1
    sphere = LN2 + (params.k / 2.0) * math.log(math.pi) - float(gammaln(params.k / 2.0))
    log_area = sphere - (params.k - 1) * math.log(params.upper - params.lower)
    components = constant.components + (("sphere_area/box", math.exp(log_area)),)
    log_K = constant.log_K + log_area
    interval = None
    if constant.K_interval is not None:
        interval = (constant.K_interval[0] * math.exp(log_area), constant.K_interval[1] * math.exp(log_area))
    combined = ConstantResult(math.exp(log_K), log_K, components, interval)
    alpha_exp, beta_exp = compute_exponents(spec)
    return _assemble(combined, alpha_exp, beta_exp, u, "chi_cylinder")
