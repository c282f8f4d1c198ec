from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr

from fields.covariance import FbmKernel, build_cov_matrix
from fields.profiles import structural_modulus
from simulation.parallel import run_blocks
from simulation.rng import rng_metadata
from simulation.sampling import EmbeddingError, Grid, draw_gaussian, fbm_spectral_batch
from utils.settings import (
    DEFAULT_BLOCK_SIZE,
    PICKANDS_HORIZON_HEAVY,
    PICKANDS_HORIZON_ROUGH,
    PICKANDS_STEP,
    PICKANDS_TRACE_FRACTIONS,
)

SQRT2 = math.sqrt(2.0)
KNOWN_PICKANDS = {1.0: 1.0, 2.0: 1.0 / math.sqrt(math.pi)}


def default_horizon(alpha: float) -> float:
    return PICKANDS_HORIZON_HEAVY if alpha >= 1.0 else PICKANDS_HORIZON_ROUGH


@dataclass(frozen=True)
class TracePoint:
    horizon: float
    estimate: float
    std_error: float

    def to_dict(self) -> Dict[str, float]:
        return {"horizon": self.horizon, "estimate": self.estimate, "std_error": self.std_error}


@dataclass(frozen=True)
class PickandsEstimate:
    """Estimate of H_alpha (interval domain) or H_(k,alpha)[D] (grid domain)."""

    alpha: Tuple[float, ...]
    domain: Dict[str, Any]
    horizon: float
    step: float
    reps: int
    estimate: float
    std_error: float
    trace: Tuple[TracePoint, ...]
    method: str = "monte_carlo"
    seed: Optional[int] = None
    slope: Optional[float] = None
    slope_std_error: Optional[float] = None
    richardson: Optional[Dict[str, float]] = None
    notes: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not (self.estimate > 0.0 and math.isfinite(self.estimate)):
            raise ValueError(f"Pickands estimate must be positive and finite, got {self.estimate}")
        if self.std_error < 0.0:
            raise ValueError("standard error must be non-negative")
        if not self.trace:
            raise ValueError("trace must contain at least one horizon")

    @property
    def trace_spread(self) -> float:
        values = np.array([point.estimate for point in self.trace])
        return float((values.max() - values.min()) / values.mean())

    def to_dict(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {
            "alpha": list(self.alpha) if len(self.alpha) > 1 else self.alpha[0],
            "domain": self.domain,
            "horizon": self.horizon,
            "step": self.step,
            "reps": self.reps,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "trace": [point.to_dict() for point in self.trace],
            "trace_spread": self.trace_spread,
            "method": self.method,
            "seed": self.seed,
            "slope": self.slope,
            "slope_std_error": self.slope_std_error,
            "richardson": self.richardson,
            "notes": list(self.notes),
        }
        if self.seed is not None and self.method == "monte_carlo":
            record["rng"] = rng_metadata(self.seed)
        return record


@dataclass(frozen=True)
class PickandsConstant:
    """A Pickands constant as consumed by the tail formulas."""

    alpha: float
    value: float
    std_error: float = 0.0
    source: str = "supplied"

    def __post_init__(self) -> None:
        if not (self.value > 0.0 and math.isfinite(self.value)):
            raise ValueError(f"Pickands constant for alpha={self.alpha} must be positive")

    def to_dict(self) -> Dict[str, Any]:
        return {"alpha": self.alpha, "value": self.value, "std_error": self.std_error, "source": self.source}


def known_pickands(alpha: float) -> PickandsConstant:
    """Closed-form constants: H_1 = 1 and H_2 = 1/sqrt(pi)."""
    for key, value in KNOWN_PICKANDS.items():
        if math.isclose(alpha, key, rel_tol=0.0, abs_tol=1e-12):
            return PickandsConstant(alpha=key, value=value, source="closed_form")
    raise ValueError(f"No closed form for H_alpha at alpha={alpha}; supply an estimate")


def parse_pickands_constants(data: Any, use_slope: bool = False) -> Dict[float, PickandsConstant]:
    """Read an estimate record or a {"constants": [...]} document into a lookup by alpha.

    With ``use_slope`` an estimate record contributes its slope (E_T - E_{T/2})/(T/2),
    which carries no boundary term, instead of the point estimate.
    """
    entries: List[Mapping[str, Any]]
    if use_slope and not (isinstance(data, Mapping) and "estimate" in data):
        raise ValueError("the slope is only available from a pickands.json estimate record")
    if isinstance(data, Mapping) and "constants" in data:
        entries = list(data["constants"])
    elif isinstance(data, Mapping) and "estimate" in data:
        alpha = data["alpha"]
        if isinstance(alpha, list):
            raise ValueError("a domain-constant record cannot stand in for per-coordinate H_alpha")
        if use_slope:
            if data.get("slope") is None:
                raise ValueError("estimate record has no slope; re-run pickands with a Monte Carlo or quadrature trace")
            entry = {"value": data["slope"], "std_error": data.get("slope_std_error") or 0.0, "source": "slope"}
        else:
            entry = {"value": data["estimate"], "std_error": data.get("std_error", 0.0), "source": "estimate"}
        entries = [{"alpha": alpha, **entry}]
    elif isinstance(data, list):
        entries = data
    else:
        raise ValueError("Pickands document needs a 'constants' list or an estimate record")

    table: Dict[float, PickandsConstant] = {}
    for i, entry in enumerate(entries):
        try:
            constant = PickandsConstant(
                alpha=float(entry["alpha"]),
                value=float(entry["value"]),
                std_error=float(entry.get("std_error", 0.0)),
                source=str(entry.get("source", "supplied")),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"constants[{i}] needs numeric 'alpha' and 'value'") from exc
        table[constant.alpha] = constant
    return table


def resolve_pickands(alphas: Sequence[float], table: Optional[Mapping[float, PickandsConstant]] = None) -> List[PickandsConstant]:
    """Per-coordinate constants: supplied values first, closed forms otherwise."""
    resolved = []
    for alpha in alphas:
        match = None
        for key, constant in (table or {}).items():
            if math.isclose(alpha, key, rel_tol=0.0, abs_tol=1e-12):
                match = constant
                break
        resolved.append(match if match is not None else known_pickands(alpha))
    return resolved


def _mean_exp(log_values: np.ndarray) -> Tuple[float, float]:
    """Mean and standard error of exp(log_values) with the max factored out."""
    n = log_values.size
    top = float(np.max(log_values))
    scaled = np.exp(log_values - top)
    mean = math.fsum(scaled) / n
    var = math.fsum((scaled - mean) ** 2) / (n - 1) if n > 1 else 0.0
    scale = math.exp(top)
    return scale * mean, scale * math.sqrt(var / n)


def _fbm_axis_draws(alpha: float, nodes: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, len(nodes)) draws of B_alpha (Var B(t) = |t|^alpha) at the given nodes."""
    if np.all(nodes == 0.0):
        return np.zeros((count, nodes.size))
    if alpha == 2.0:
        return np.outer(rng.standard_normal(count), nodes)
    diffs = np.diff(nodes)
    if nodes[0] == 0.0 and nodes.size > 1 and np.allclose(diffs, diffs[0], rtol=1e-12, atol=0.0):
        try:
            return fbm_spectral_batch(alpha, float(diffs[0]), nodes.size, count, rng)
        except EmbeddingError as exc:
            logging.warning(f"Spectral fBm failed ({exc}); using Cholesky sampling")
    out = np.zeros((count, nodes.size))
    live = nodes != 0.0
    factorized = build_cov_matrix(nodes[live], FbmKernel(alpha))
    out[:, live] = draw_gaussian(factorized, count, rng)
    return out


def _interval_nodes(horizon: float, step: float) -> Tuple[np.ndarray, float]:
    intervals = max(1, int(round(horizon / step)))
    effective = intervals * step
    if not math.isclose(effective, horizon, rel_tol=1e-9):
        logging.warning(f"Horizon {horizon:g} is not a multiple of step {step:g}; using {effective:g}")
    return step * np.arange(intervals + 1, dtype=float), effective


def _quadrature_expectation(nodes: np.ndarray) -> float:
    """E exp(max_j (sqrt2 t_j N - t_j^2)) for B_2(t) = t N, integrated piecewise in closed form.

    On the N-interval where node t_j attains the max the integrand equals the
    normal density shifted by sqrt2 t_j, so each piece is a difference of Phi.
    """
    edges = np.concatenate([[-np.inf], (nodes[:-1] + nodes[1:]) / SQRT2, [np.inf]])
    shift = SQRT2 * nodes
    upper = edges[1:] - shift
    lower = edges[:-1] - shift
    # difference of upper tails is accurate where both edges sit far in the right tail
    pieces = np.where(lower > 0.0, ndtr(-lower) - ndtr(-upper), ndtr(upper) - ndtr(lower))
    return math.fsum(pieces)


def _pickands_quadrature(horizon: float, step: float, refine: bool) -> PickandsEstimate:
    nodes, effective = _interval_nodes(horizon, step)
    trace = []
    for fraction in PICKANDS_TRACE_FRACTIONS:
        stop = int(round(fraction * (nodes.size - 1)))
        sub = nodes[: stop + 1]
        trace.append(TracePoint(horizon=float(sub[-1]), estimate=_quadrature_expectation(sub) / max(sub[-1], step), std_error=0.0))
    full = _quadrature_expectation(nodes)
    half = _quadrature_expectation(nodes[: (nodes.size - 1) // 2 + 1])
    half_horizon = float(nodes[(nodes.size - 1) // 2])
    richardson = None
    if refine:
        fine_nodes, _ = _interval_nodes(effective, step / 2.0)
        fine = _quadrature_expectation(fine_nodes) / effective
        richardson = _richardson(full / effective, fine, step, 2.0)
    return PickandsEstimate(
        alpha=(2.0,),
        domain={"kind": "interval", "lower": 0.0, "upper": effective},
        horizon=effective,
        step=step,
        reps=0,
        estimate=full / effective,
        std_error=0.0,
        trace=tuple(trace),
        method="quadrature",
        slope=(full - half) / (effective - half_horizon),
        slope_std_error=0.0,
        richardson=richardson,
    )


def _richardson(coarse: float, fine: float, step: float, alpha: float) -> Dict[str, float]:
    """Extrapolate H(step) and H(step/2) assuming an error of order step^(alpha/2)."""
    gain = 2.0 ** (alpha / 2.0)
    return {
        "step": step,
        "estimate_step": coarse,
        "step_half": step / 2.0,
        "estimate_half": fine,
        "rate": alpha / 2.0,
        "extrapolated": (gain * fine - coarse) / (gain - 1.0),
    }


def estimate_pickands(
    alpha: float,
    horizon: Optional[float] = None,
    step: float = PICKANDS_STEP,
    reps: int = 10_000,
    seed: int = 0,
    threads: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
    refine: bool = False,
) -> PickandsEstimate:
    """Estimate H_alpha as T^-1 E exp(max_j sqrt2 B_alpha(t_j) - t_j^alpha) on {0, step, ..., T}.

    The trace at T/4, T/2 and T reuses the same paths. With ``refine`` the
    paths are drawn at step/2 and evaluated on both grids for the Richardson
    diagnostic; the point estimate always refers to ``step``.
    """
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2]")
    horizon = default_horizon(alpha) if horizon is None else float(horizon)
    if step <= 0.0 or step > horizon:
        raise ValueError("step must be positive and not exceed the horizon")
    if reps < 1:
        raise ValueError("reps must be a positive integer")
    if alpha == 2.0:
        return _pickands_quadrature(horizon, step, refine)

    nodes, effective = _interval_nodes(horizon, step)
    stride = 2 if refine else 1
    draw_nodes = _interval_nodes(effective, step / 2.0)[0] if refine else nodes
    drift = draw_nodes**alpha
    # column indices (on the draw grid) of the trace horizons
    stops = [stride * int(round(f * (nodes.size - 1))) for f in PICKANDS_TRACE_FRACTIONS]
    half_stop = stride * ((nodes.size - 1) // 2)

    def work(rng: np.random.Generator, count: int) -> np.ndarray:
        paths = _fbm_axis_draws(alpha, draw_nodes, count, rng)
        exponent = SQRT2 * paths - drift
        coarse = np.maximum.accumulate(exponent[:, ::stride], axis=1)
        rows = [coarse[:, stop // stride] for stop in stops] + [coarse[:, half_stop // stride]]
        if refine:
            rows.append(exponent.max(axis=1))
        return np.stack(rows)

    logging.info(f"Estimating H_{alpha:g} on [0, {effective:g}] with step {step:g} and {reps} replications")
    sups = np.concatenate(run_blocks(work, reps, seed, threads, block_size), axis=1)

    trace = []
    for j, stop in enumerate(stops):
        level = float(draw_nodes[stop]) if stop > 0 else step
        mean, se = _mean_exp(sups[j])
        trace.append(TracePoint(horizon=float(draw_nodes[stop]), estimate=mean / level, std_error=se / level))
    full_mean, full_se = _mean_exp(sups[len(stops) - 1])

    half_horizon = float(draw_nodes[half_stop])
    top = float(sups[len(stops) - 1].max())
    diffs = np.exp(sups[len(stops) - 1] - top) - np.exp(sups[len(stops)] - top)
    slope_scale = math.exp(top) / (effective - half_horizon)
    slope = slope_scale * math.fsum(diffs) / reps
    slope_se = slope_scale * float(np.std(diffs, ddof=1)) / math.sqrt(reps) if reps > 1 else 0.0

    richardson = None
    if refine:
        fine_mean, fine_se = _mean_exp(sups[-1])
        richardson = _richardson(full_mean / effective, fine_mean / effective, step, alpha)
        richardson["std_error_half"] = fine_se / effective

    return PickandsEstimate(
        alpha=(float(alpha),),
        domain={"kind": "interval", "lower": 0.0, "upper": effective},
        horizon=effective,
        step=step,
        reps=reps,
        estimate=full_mean / effective,
        std_error=full_se / effective,
        trace=tuple(trace),
        method="monte_carlo",
        seed=seed,
        slope=slope,
        slope_std_error=slope_se,
        richardson=richardson,
    )


def estimate_pickands_domain(
    alpha: Sequence[float],
    domain_grid: Grid,
    reps: int = 10_000,
    seed: int = 0,
    mask: Optional[np.ndarray] = None,
    threads: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> PickandsEstimate:
    """Estimate H_(k,alpha)[D] = E exp(max_{t in D} sqrt2 sum_i B_i(t_i) - |t|_alpha).

    ``mask`` (shape ``domain_grid.shape``) selects a non-rectangular D from the grid.
    """
    alphas = np.asarray(alpha, dtype=float).ravel()
    if alphas.size != domain_grid.k:
        raise ValueError(f"alpha has {alphas.size} entries, grid has {domain_grid.k} axes")
    if np.any(alphas <= 0.0) or np.any(alphas > 2.0):
        raise ValueError("alpha entries must lie in (0, 2]")
    if reps < 1:
        raise ValueError("reps must be a positive integer")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != domain_grid.shape:
            raise ValueError("mask shape must match the grid shape")
        if not mask.any():
            raise ValueError("mask selects an empty domain")

    drifts = [np.abs(axis) ** a for axis, a in zip(domain_grid.axes, alphas)]

    def work(rng: np.random.Generator, count: int) -> np.ndarray:
        axis_terms = [
            SQRT2 * _fbm_axis_draws(float(a), axis, count, rng) - drift
            for a, axis, drift in zip(alphas, domain_grid.axes, drifts)
        ]
        if mask is None:
            # separable in the coordinates on a rectangular grid
            return sum(term.max(axis=1) for term in axis_terms)
        total = np.zeros((count,) + domain_grid.shape)
        for i, term in enumerate(axis_terms):
            shape = [count] + [1] * domain_grid.k
            shape[i + 1] = term.shape[1]
            total = total + term.reshape(shape)
        return total.reshape(count, -1)[:, mask.ravel()].max(axis=1)

    sups = np.concatenate(run_blocks(work, reps, seed, threads, block_size))
    mean, se = _mean_exp(sups)
    extent = float(max(np.max(np.abs(axis)) for axis in domain_grid.axes))
    domain = {"kind": "grid", **domain_grid.to_dict()}
    if mask is not None:
        domain["mask_points"] = int(mask.sum())
    points = domain_grid.points() if mask is None else domain_grid.points()[mask.ravel()]
    domain["max_structural_modulus"] = float(np.max(structural_modulus(points, alphas)))
    return PickandsEstimate(
        alpha=tuple(alphas.tolist()),
        domain=domain,
        horizon=extent,
        step=float(domain_grid.steps().max()),
        reps=reps,
        estimate=mean,
        std_error=se,
        trace=(TracePoint(horizon=extent, estimate=mean, std_error=se),),
        method="monte_carlo",
        seed=seed,
    )
