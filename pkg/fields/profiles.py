from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from utils.settings import ALPHA_CAP

Issue = Tuple[str, str]

COVARIANCE_MODELS = ("aggregate_mfbm", "stationary_powexp")
D3_SAMPLE_BUDGET = 4096
A2_CHECK_STEPS = (1e-2, -1e-2, 1e-4, -1e-4)
A2_REMAINDER_TOL = 1e-6


class FieldSpecError(ValueError):
    """Raised when a field description violates the FieldSpec schema."""

    def __init__(self, issues: Sequence[Issue]):
        self.issues: List[Issue] = list(issues)
        listing = "; ".join(f"{path}: {message}" for path, message in self.issues)
        super().__init__(f"Invalid field specification ({len(self.issues)} issue(s)): {listing}")


class CovarianceModelError(ValueError):
    """Raised when a kernel or sampler is requested for a field without a covariance model."""


class ProfileKind(str, Enum):
    CONSTANT = "constant"
    UNIQUE_MIN = "unique_min"
    PLATEAU = "plateau"


def _is_positive(value: Optional[float]) -> bool:
    return value is not None and math.isfinite(value) and value > 0


@dataclass(frozen=True)
class AlphaProfile:
    """Parametric Hölder-exponent function alpha(t) with a known minimum structure.

    ``unique_min``: alpha(t) = alpha0 + M|t - t0|^beta.
    ``plateau``: alpha0 on [a, b], alpha0 + M(t - b)^beta to the right and
    alpha0 + M_tilde(a - t)^beta_tilde to the left.
    Non-constant profiles are clamped at ``ALPHA_CAP`` so values stay below 2.
    """

    kind: ProfileKind
    alpha0: float
    t0: Optional[float] = None
    M: Optional[float] = None
    beta: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    M_tilde: Optional[float] = None
    beta_tilde: Optional[float] = None
    delta_log: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        issues = profile_issues(self, "profile")
        if issues:
            raise FieldSpecError(issues)

    @classmethod
    def constant(cls, alpha0: float) -> "AlphaProfile":
        return cls(ProfileKind.CONSTANT, alpha0)

    @classmethod
    def unique_min(
        cls, alpha0: float, t0: float, M: float, beta: float, delta_log: Optional[float] = None
    ) -> "AlphaProfile":
        return cls(ProfileKind.UNIQUE_MIN, alpha0, t0=t0, M=M, beta=beta, delta_log=delta_log)

    @classmethod
    def plateau(
        cls,
        alpha0: float,
        a: float,
        b: float,
        M: float,
        beta: float,
        M_tilde: float,
        beta_tilde: float,
        delta_log: Optional[float] = None,
    ) -> "AlphaProfile":
        return cls(
            ProfileKind.PLATEAU,
            alpha0,
            a=a,
            b=b,
            M=M,
            beta=beta,
            M_tilde=M_tilde,
            beta_tilde=beta_tilde,
            delta_log=delta_log,
        )

    def __call__(self, t: Any) -> Any:
        x = np.asarray(t, dtype=float)
        if self.kind is ProfileKind.CONSTANT:
            values = np.full(x.shape, self.alpha0, dtype=float)
        elif self.kind is ProfileKind.UNIQUE_MIN:
            values = self.alpha0 + self.M * np.abs(x - self.t0) ** self.beta
        else:
            right = np.clip(x - self.b, 0.0, None) ** self.beta
            left = np.clip(self.a - x, 0.0, None) ** self.beta_tilde
            values = self.alpha0 + self.M * right + self.M_tilde * left
        if self.kind is not ProfileKind.CONSTANT:
            values = np.minimum(values, ALPHA_CAP)
        if values.ndim == 0:
            return float(values)
        return values

    def minimum_set(self, lower: float, upper: float) -> Tuple[float, float]:
        """Interval on which the profile attains alpha0 inside [lower, upper]."""
        if self.kind is ProfileKind.UNIQUE_MIN:
            return (float(self.t0), float(self.t0))
        if self.kind is ProfileKind.PLATEAU:
            return (float(self.a), float(self.b))
        return (float(lower), float(upper))

    def expansion_error(self, h: float) -> float:
        """Scaled remainder of alpha(t0 + h) = alpha0 + M|h|^beta, measured as in A2."""
        if self.kind is not ProfileKind.UNIQUE_MIN:
            raise ValueError("expansion_error is defined for unique_min profiles only")
        step = abs(float(h))
        if step == 0.0 or step >= 1.0:
            raise ValueError("h must satisfy 0 < |h| < 1")
        delta = self.delta_log if self.delta_log is not None else 2.0
        leading = self.M * step**self.beta
        value = self(self.t0 + h)
        # differences below the float resolution of alpha itself count as zero
        remainder = max(0.0, abs(value - self.alpha0 - leading) - 4.0 * np.finfo(float).eps * abs(value))
        return remainder / (step**self.beta * abs(math.log(step)) ** (-delta))

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value, "alpha0": self.alpha0}
        for key in ("t0", "M", "beta", "a", "b", "M_tilde", "beta_tilde", "delta_log"):
            value = getattr(self, key)
            if value is not None:
                data[key] = value
        return data


def profile_issues(profile: AlphaProfile, path: str) -> List[Issue]:
    issues: List[Issue] = []
    alpha0 = profile.alpha0
    if alpha0 is None or not math.isfinite(alpha0) or not 0.0 < alpha0 <= 2.0:
        issues.append((f"{path}.alpha0", "must lie in (0, 2]"))
    elif profile.kind is not ProfileKind.CONSTANT and alpha0 >= ALPHA_CAP:
        issues.append((f"{path}.alpha0", f"must be below {ALPHA_CAP} for a non-constant profile"))

    if profile.kind is ProfileKind.UNIQUE_MIN:
        if profile.t0 is None or not math.isfinite(profile.t0):
            issues.append((f"{path}.t0", "required for unique_min"))
        for key in ("M", "beta"):
            if not _is_positive(getattr(profile, key)):
                issues.append((f"{path}.{key}", "must be a positive number"))
    elif profile.kind is ProfileKind.PLATEAU:
        for key in ("M", "beta", "M_tilde", "beta_tilde"):
            if not _is_positive(getattr(profile, key)):
                issues.append((f"{path}.{key}", "must be a positive number"))
        if profile.a is None or profile.b is None or not profile.a < profile.b:
            issues.append((f"{path}.a", "plateau needs a < b"))

    if profile.delta_log is not None and not (math.isfinite(profile.delta_log) and profile.delta_log > 1.0):
        issues.append((f"{path}.delta_log", "must exceed 1"))
    return issues


class VarianceScale:
    """Local variance scale C_i: evaluated on points of shape (..., k)."""

    form: ClassVar[str] = ""

    def __call__(self, points: Any) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ConstantScale(VarianceScale):
    value: float
    form: ClassVar[str] = "constant"

    def __call__(self, points: Any) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.full(pts.shape[:-1], self.value, dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        return {"form": self.form, "value": self.value}


@dataclass(frozen=True, eq=False)
class SeparableScale(VarianceScale):
    """Product over axes of per-axis polynomials (ascending coefficient order)."""

    coefficients: Tuple[Tuple[float, ...], ...]
    form: ClassVar[str] = "separable"

    def __call__(self, points: Any) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        result = np.ones(pts.shape[:-1], dtype=float)
        for axis, coefs in enumerate(self.coefficients):
            result = result * np.polynomial.polynomial.polyval(pts[..., axis], coefs)
        return result

    def to_dict(self) -> Dict[str, Any]:
        return {"form": self.form, "coefficients": [list(c) for c in self.coefficients]}


@dataclass(frozen=True, eq=False)
class GridScale(VarianceScale):
    """Tabulated scale with multilinear interpolation (linear extrapolation off the table)."""

    points: Tuple[Tuple[float, ...], ...]
    values: np.ndarray
    form: ClassVar[str] = "grid"
    _interpolator: RegularGridInterpolator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        axes = tuple(np.asarray(axis, dtype=float) for axis in self.points)
        table = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", table)
        object.__setattr__(
            self,
            "_interpolator",
            RegularGridInterpolator(axes, table, method="linear", bounds_error=False, fill_value=None),
        )

    def __call__(self, points: Any) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, pts.shape[-1])
        return self._interpolator(flat).reshape(pts.shape[:-1])

    def to_dict(self) -> Dict[str, Any]:
        return {"form": self.form, "points": [list(p) for p in self.points], "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class MfbmLocalScale(VarianceScale):
    """scale * t_axis^(-alpha(t_axis)): the local scale of a standardized mfBm coordinate."""

    axis: int
    scale: float
    profile: AlphaProfile
    form: ClassVar[str] = "mfbm_local"

    def __call__(self, points: Any) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        t = pts[..., self.axis]
        with np.errstate(divide="ignore"):
            return self.scale * t ** (-self.profile(t))

    def to_dict(self) -> Dict[str, Any]:
        return {"form": self.form, "axis": self.axis, "scale": self.scale}


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """An alpha(t)-locally stationary field on [lower, T]^k."""

    k: int
    k1: int
    T: float
    profiles: Tuple[AlphaProfile, ...]
    variance_scales: Tuple[VarianceScale, ...]
    lower: float = 0.0
    covariance: Optional[str] = None
    name: str = "field"

    def __post_init__(self) -> None:
        object.__setattr__(self, "profiles", tuple(self.profiles))
        object.__setattr__(self, "variance_scales", tuple(self.variance_scales))
        issues = _spec_issues(self)
        if issues:
            raise FieldSpecError(issues)

    @property
    def k2(self) -> int:
        return self.k - self.k1

    @property
    def alphas(self) -> Tuple[float, ...]:
        return tuple(profile.alpha0 for profile in self.profiles)

    def local_scales(self, point: Any) -> np.ndarray:
        pts = np.asarray(point, dtype=float)
        return np.stack([scale(pts) for scale in self.variance_scales], axis=-1)

    def local_alphas(self, point: Any) -> np.ndarray:
        pts = np.asarray(point, dtype=float)
        return np.stack([profile(pts[..., i]) for i, profile in enumerate(self.profiles)], axis=-1)

    def minimizer_box(self) -> List[Tuple[float, float]]:
        """Per-axis [lo, hi] of the set O (points for unique minima, plateau intervals otherwise)."""
        return [profile.minimum_set(self.lower, self.T) for profile in self.profiles]

    def contains(self, point: Any) -> bool:
        pts = np.asarray(point, dtype=float)
        return bool(np.all(pts >= self.lower) and np.all(pts <= self.T))

    def require_model(self, purpose: str) -> str:
        if self.covariance is None:
            raise CovarianceModelError(
                f"{purpose} needs a covariance model; field '{self.name}' sets none "
                f"(choose one of {', '.join(COVARIANCE_MODELS)})"
            )
        return self.covariance

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"name": self.name, "k": self.k, "k1": self.k1, "T": self.T, "lower": self.lower}
        if self.covariance is not None:
            data["covariance"] = self.covariance
        data["profiles"] = [profile.to_dict() for profile in self.profiles]
        data["variance_scales"] = [scale.to_dict() for scale in self.variance_scales]
        return data

    @classmethod
    def from_dict(cls, data: Any) -> "FieldSpec":
        return parse_field_spec(data)

    @classmethod
    def aggregate_mfbm(
        cls,
        profiles: Sequence[AlphaProfile],
        lower: float,
        T: float,
        name: str = "aggregate_mfbm",
    ) -> "FieldSpec":
        """Aggregate of independent standardized mfBm's with their exact D4 scales t^(-alpha)/(2k)."""
        k = len(profiles)
        k1 = sum(1 for profile in profiles if profile.kind is ProfileKind.UNIQUE_MIN)
        scales = [MfbmLocalScale(i, 1.0 / (2.0 * k), profile) for i, profile in enumerate(profiles)]
        return cls(k, k1, T, tuple(profiles), tuple(scales), lower=lower, covariance="aggregate_mfbm", name=name)

    @classmethod
    def stationary(
        cls,
        alphas: Sequence[float],
        scales: Sequence[float],
        lower: float,
        T: float,
        name: str = "stationary_powexp",
    ) -> "FieldSpec":
        profiles = tuple(AlphaProfile.constant(alpha) for alpha in alphas)
        variance = tuple(ConstantScale(float(value)) for value in scales)
        return cls(len(profiles), 0, T, profiles, variance, lower=lower, covariance="stationary_powexp", name=name)


def _spec_issues(spec: FieldSpec) -> List[Issue]:
    issues: List[Issue] = []
    if not isinstance(spec.k, int) or spec.k < 1:
        return [("k", "must be a positive integer")]
    if not isinstance(spec.k1, int) or not 0 <= spec.k1 <= spec.k:
        issues.append(("k1", f"must be an integer in [0, {spec.k}]"))
    if not (math.isfinite(spec.lower) and spec.lower >= 0.0):
        issues.append(("lower", "must be a non-negative number"))
    if not (math.isfinite(spec.T) and spec.T > spec.lower):
        issues.append(("T", "must exceed lower"))
    if len(spec.profiles) != spec.k:
        issues.append(("profiles", f"expected {spec.k} profiles, got {len(spec.profiles)}"))
    if len(spec.variance_scales) != spec.k:
        issues.append(("variance_scales", f"expected {spec.k} scales, got {len(spec.variance_scales)}"))
    if spec.covariance is not None and spec.covariance not in COVARIANCE_MODELS:
        issues.append(("covariance", f"must be one of {', '.join(COVARIANCE_MODELS)}"))
    if issues:
        return issues

    for i, profile in enumerate(spec.profiles):
        path = f"profiles[{i}]"
        if profile.kind is ProfileKind.UNIQUE_MIN and not spec.lower <= profile.t0 <= spec.T:
            issues.append((f"{path}.t0", f"must lie in [{spec.lower}, {spec.T}]"))
        if profile.kind is ProfileKind.PLATEAU and not (spec.lower < profile.a and profile.b < spec.T):
            issues.append((f"{path}.a", f"plateau must satisfy {spec.lower} < a < b < {spec.T}"))
    for i, scale in enumerate(spec.variance_scales):
        if isinstance(scale, MfbmLocalScale) and scale.axis != i:
            issues.append((f"variance_scales[{i}].axis", f"must equal {i}"))
        if isinstance(scale, SeparableScale) and len(scale.coefficients) != spec.k:
            issues.append((f"variance_scales[{i}].coefficients", f"expected {spec.k} coefficient lists"))
        if isinstance(scale, GridScale) and len(scale.points) != spec.k:
            issues.append((f"variance_scales[{i}].points", f"expected {spec.k} axes"))

    if spec.covariance == "aggregate_mfbm" and spec.lower <= 0.0:
        issues.append(("lower", "aggregate_mfbm needs lower > 0 (standardization is undefined at 0)"))
    if spec.covariance == "aggregate_mfbm":
        # the sampler draws the true mfBm, so the declared C_i must be its local scales
        target = 1.0 / (2.0 * spec.k)
        for i, scale in enumerate(spec.variance_scales):
            exact = (
                isinstance(scale, MfbmLocalScale)
                and math.isclose(scale.scale, target, rel_tol=1e-9)
                and scale.profile == spec.profiles[i]
            )
            if not exact:
                issues.append(
                    (f"variance_scales[{i}]", f"aggregate_mfbm fixes C_{i + 1} to mfbm_local with scale {target:g}")
                )
    if spec.covariance == "stationary_powexp":
        for i, profile in enumerate(spec.profiles):
            if profile.kind is not ProfileKind.CONSTANT:
                issues.append((f"profiles[{i}].kind", "stationary_powexp needs constant profiles"))
        for i, scale in enumerate(spec.variance_scales):
            if not isinstance(scale, ConstantScale):
                issues.append((f"variance_scales[{i}].form", "stationary_powexp needs constant scales"))
    return issues


_PROFILE_KEYS = ("t0", "M", "beta", "a", "b", "M_tilde", "beta_tilde", "delta_log")


def _number(data: Dict[str, Any], key: str, path: str, issues: List[Issue], required: bool = True) -> Optional[float]:
    value = data.get(key)
    if value is None:
        if required:
            issues.append((f"{path}.{key}", "missing"))
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        issues.append((f"{path}.{key}", "must be a number"))
        return None
    return float(value)


def _parse_profile(data: Any, path: str, issues: List[Issue]) -> Optional[AlphaProfile]:
    if not isinstance(data, dict):
        issues.append((path, "must be an object"))
        return None
    kind_raw = data.get("kind")
    try:
        kind = ProfileKind(kind_raw)
    except ValueError:
        issues.append((f"{path}.kind", f"must be one of {', '.join(k.value for k in ProfileKind)}"))
        return None
    before = len(issues)
    alpha0 = _number(data, "alpha0", path, issues)
    required = {
        ProfileKind.CONSTANT: (),
        ProfileKind.UNIQUE_MIN: ("t0", "M", "beta"),
        ProfileKind.PLATEAU: ("a", "b", "M", "beta", "M_tilde", "beta_tilde"),
    }[kind]
    values = {key: _number(data, key, path, issues, required=key in required) for key in _PROFILE_KEYS}
    if len(issues) > before:
        return None
    try:
        return AlphaProfile(kind, alpha0, **values)
    except FieldSpecError as exc:
        issues.extend((issue_path.replace("profile", path, 1), message) for issue_path, message in exc.issues)
        return None


def _parse_scale(
    data: Any, path: str, axis: int, profile: Optional[AlphaProfile], issues: List[Issue]
) -> Optional[VarianceScale]:
    if not isinstance(data, dict):
        issues.append((path, "must be an object"))
        return None
    form = data.get("form")
    if form == ConstantScale.form:
        value = _number(data, "value", path, issues)
        return ConstantScale(value) if value is not None else None
    if form == SeparableScale.form:
        coefs = data.get("coefficients")
        if not isinstance(coefs, list) or not all(
            isinstance(row, list) and row and all(isinstance(c, (int, float)) for c in row) for row in coefs
        ):
            issues.append((f"{path}.coefficients", "must be a list of non-empty numeric lists"))
            return None
        return SeparableScale(tuple(tuple(float(c) for c in row) for row in coefs))
    if form == GridScale.form:
        points = data.get("points")
        values = data.get("values")
        if not isinstance(points, list) or not points:
            issues.append((f"{path}.points", "must be a list of per-axis node lists"))
            return None
        try:
            axes = tuple(tuple(float(x) for x in axis_nodes) for axis_nodes in points)
            table = np.asarray(values, dtype=float)
        except (TypeError, ValueError):
            issues.append((f"{path}.values", "must be a numeric table"))
            return None
        if table.shape != tuple(len(nodes) for nodes in axes):
            issues.append((f"{path}.values", f"shape {table.shape} does not match points"))
            return None
        if any(len(nodes) < 2 or np.any(np.diff(nodes) <= 0) for nodes in axes):
            issues.append((f"{path}.points", "each axis needs at least two strictly increasing nodes"))
            return None
        return GridScale(axes, table)
    if form == MfbmLocalScale.form:
        scale = _number(data, "scale", path, issues)
        axis_value = data.get("axis", axis)
        if not isinstance(axis_value, int) or isinstance(axis_value, bool):
            issues.append((f"{path}.axis", "must be an integer"))
            return None
        if scale is None or profile is None:
            return None
        return MfbmLocalScale(axis_value, scale, profile)
    issues.append((f"{path}.form", "must be one of constant, separable, grid, mfbm_local"))
    return None


def parse_field_spec(data: Any) -> FieldSpec:
    if not isinstance(data, dict):
        raise FieldSpecError([("$", "document must be a JSON object")])
    issues: List[Issue] = []
    k = data.get("k")
    k1 = data.get("k1", 0)
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        issues.append(("k", "must be a positive integer"))
    if not isinstance(k1, int) or isinstance(k1, bool):
        issues.append(("k1", "must be an integer"))
    T = _number(data, "T", "$", issues)
    lower = _number(data, "lower", "$", issues, required=False)
    covariance = data.get("covariance")
    name = str(data.get("name", "field"))

    raw_profiles = data.get("profiles")
    raw_scales = data.get("variance_scales")
    if not isinstance(raw_profiles, list):
        issues.append(("profiles", "must be a list"))
        raw_profiles = []
    if not isinstance(raw_scales, list):
        issues.append(("variance_scales", "must be a list"))
        raw_scales = []

    profiles = [_parse_profile(entry, f"profiles[{i}]", issues) for i, entry in enumerate(raw_profiles)]
    scales = [
        _parse_scale(entry, f"variance_scales[{i}]", i, profiles[i] if i < len(profiles) else None, issues)
        for i, entry in enumerate(raw_scales)
    ]
    issues = [(path.replace("$.", ""), message) for path, message in issues]
    if issues:
        raise FieldSpecError(issues)
    return FieldSpec(
        k=k,
        k1=k1,
        T=T,
        profiles=tuple(profiles),
        variance_scales=tuple(scales),
        lower=0.0 if lower is None else lower,
        covariance=covariance,
        name=name,
    )


def load_field_spec(path: Path | str) -> FieldSpec:
    spec_path = Path(path)
    if not spec_path.exists():
        raise FileNotFoundError(f"Field specification not found: {spec_path}")
    try:
        data = json.loads(spec_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FieldSpecError([("$", f"invalid JSON: {exc.msg} (line {exc.lineno})")]) from exc
    spec = parse_field_spec(data)
    logging.info(f"Loaded field specification '{spec.name}' (k={spec.k}, k1={spec.k1}) from {spec_path}")
    return spec


def structural_modulus(t: Any, alpha: Sequence[float]) -> np.ndarray:
    """|t|_alpha = sum_i |t_i|^alpha_i over the last axis."""
    pts = np.asarray(t, dtype=float)
    exps = np.asarray(alpha, dtype=float)
    return np.sum(np.abs(pts) ** exps, axis=-1)


def _domain_sample(spec: FieldSpec) -> np.ndarray:
    per_axis = max(2, int(D3_SAMPLE_BUDGET ** (1.0 / spec.k)))
    axis = np.linspace(spec.lower, spec.T, per_axis)
    mesh = np.meshgrid(*([axis] * spec.k), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, spec.k)


def structural_checks(spec: FieldSpec) -> List[ConditionCheck]:
    """Machine-checkable preconditions: D2, D3, A1 and A2 (D1/D4 need a covariance model)."""
    checks: List[ConditionCheck] = []
    sample = _domain_sample(spec)

    alpha_values = spec.local_alphas(sample)
    d2_ok = bool(np.all(np.isfinite(alpha_values)) and np.all(alpha_values > 0) and np.all(alpha_values <= 2))
    checks.append(
        ConditionCheck(
            "D2",
            d2_ok,
            f"alpha range on sample grid [{alpha_values.min():.6g}, {alpha_values.max():.6g}]",
        )
    )

    d3_details = []
    d3_ok = True
    for i, scale in enumerate(spec.variance_scales):
        values = scale(sample)
        finite = bool(np.all(np.isfinite(values)))
        low = float(np.min(values)) if finite else float("nan")
        high = float(np.max(values)) if finite else float("inf")
        axis_ok = finite and low > 0.0
        d3_ok = d3_ok and axis_ok
        d3_details.append(f"C_{i + 1}: inf={low:.6g}, sup={high:.6g}")
    checks.append(ConditionCheck("D3", d3_ok, "; ".join(d3_details)))

    a1_problems = []
    for i, profile in enumerate(spec.profiles):
        if i < spec.k1 and profile.kind is not ProfileKind.UNIQUE_MIN:
            lo, hi = profile.minimum_set(spec.lower, spec.T)
            a1_problems.append(f"alpha_{i + 1} attains its minimum on [{lo:.6g}, {hi:.6g}], not at a unique point")
        if i >= spec.k1 and profile.kind is ProfileKind.UNIQUE_MIN:
            a1_problems.append(f"alpha_{i + 1} has no plateau at its minimum")
    checks.append(
        ConditionCheck(
            "A1",
            not a1_problems,
            "; ".join(a1_problems) or "minimum structure matches k1",
        )
    )

    a2_details = []
    a2_ok = True
    for i, profile in enumerate(spec.profiles[: spec.k1]):
        if profile.kind is not ProfileKind.UNIQUE_MIN:
            continue
        worst = max(profile.expansion_error(h) for h in A2_CHECK_STEPS)
        a2_ok = a2_ok and worst < A2_REMAINDER_TOL
        delta = "not supplied" if profile.delta_log is None else f"{profile.delta_log:g}"
        a2_details.append(f"alpha_{i + 1}: M={profile.M:g}, beta={profile.beta:g}, delta={delta}, remainder={worst:.3g}")
    for i, profile in enumerate(spec.profiles[spec.k1 :], start=spec.k1):
        if profile.kind is ProfileKind.PLATEAU:
            a2_details.append(
                f"alpha_{i + 1}: edges M={profile.M:g}/beta={profile.beta:g}, "
                f"M~={profile.M_tilde:g}/beta~={profile.beta_tilde:g}"
            )
    checks.append(ConditionCheck("A2", a2_ok, "; ".join(a2_details) or "no expansion constraints"))
    return checks
