from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import binomtest, norm, qmc

from asymptotics.tail import tail_asymptotic
from fields.covariance import MfbmKernel, build_cov_matrix
from fields.profiles import AlphaProfile, FieldSpec
from simulation.parallel import run_blocks
from simulation.rng import rng_metadata
from simulation.sampling import Grid, draw_gaussian, field_sampler
from utils.settings import (
    CONFIDENCE_LEVEL,
    DEFAULT_BLOCK_SIZE,
    HISTOGRAM_BINS,
    MIN_EXPECTED_HITS,
    MIN_REPS,
    RESOLUTION_FACTOR,
    UNIT_VECTOR_TOL,
)

RATIO_COLUMNS = ["u", "mc_estimate", "ci_lo", "ci_hi", "asymptotic", "ratio"]


class ResolutionError(ValueError):
    """Raised when a grid is coarser than the threshold-adaptive resolution rule."""


def wilson_interval(hits: int, reps: int, confidence: float = CONFIDENCE_LEVEL) -> Tuple[float, float]:
    ci = binomtest(int(hits), int(reps)).proportion_ci(confidence_level=confidence, method="wilson")
    share = hits / reps
    return min(float(ci.low), share), max(float(ci.high), share)


def required_steps(spec: FieldSpec, u: float, factor: float = RESOLUTION_FACTOR) -> np.ndarray:
    """Per-axis step bound factor * u^(-2/alpha_i) with alpha_i the minimum of the i-th profile."""
    level = max(float(u), 1.0)
    return np.array([factor * level ** (-2.0 / alpha) for alpha in spec.alphas])


def grid_for_threshold(spec: FieldSpec, u: float, factor: float = RESOLUTION_FACTOR) -> Grid:
    return Grid.from_step(spec.lower, spec.T, required_steps(spec, u, factor), k=spec.k)


def check_resolution(spec: FieldSpec, grid: Grid, u: float, factor: float = RESOLUTION_FACTOR) -> None:
    if grid.k != spec.k:
        raise ResolutionError(f"grid has {grid.k} axes, field has k={spec.k}")
    bound = required_steps(spec, u, factor)
    steps = grid.steps()
    if np.any(steps > bound * (1.0 + 1e-9)):
        raise ResolutionError(
            f"grid steps {steps.tolist()} exceed {factor:g} * u^(-2/alpha) = {bound.tolist()} at u={u:g}"
        )
    for axis in grid.axes:
        if axis[0] < spec.lower or axis[-1] > spec.T:
            raise ResolutionError(f"grid leaves the domain [{spec.lower}, {spec.T}]")


def _histogram_edges(u: float, bins: int) -> np.ndarray:
    return np.linspace(-2.0, max(float(u), 0.0) + 4.0, bins + 1)


@dataclass(frozen=True)
class McTailEstimate:
    field: str
    u: float
    grid: Dict[str, Any]
    reps: int
    hits: int
    estimate: float
    ci: Tuple[float, float]
    seed: int
    confidence: float = CONFIDENCE_LEVEL
    expected_hits: Optional[float] = None
    flags: Tuple[str, ...] = ()
    jitter: float = 0.0
    refined: Optional[Dict[str, Any]] = None
    histogram: Optional[Dict[str, Any]] = None

    def __post_init__(self) -> None:
        if not 0 <= self.hits <= self.reps:
            raise ValueError("hit count must lie in [0, reps]")
        if not self.ci[0] <= self.estimate <= self.ci[1]:
            raise ValueError("confidence interval must contain the estimate")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "field": self.field,
            "u": self.u,
            "grid": self.grid,
            "reps": self.reps,
            "hits": self.hits,
            "estimate": self.estimate,
            "ci": list(self.ci),
            "confidence": self.confidence,
            "expected_hits": self.expected_hits,
            "flags": list(self.flags),
            "jitter": self.jitter,
            "refined": self.refined,
            "histogram": self.histogram,
            "rng": rng_metadata(self.seed),
        }

    def to_frame(self) -> pd.DataFrame:
        row = {
            "u": self.u,
            "reps": self.reps,
            "hits": self.hits,
            "estimate": self.estimate,
            "ci_lo": self.ci[0],
            "ci_hi": self.ci[1],
            "seed": self.seed,
        }
        if self.refined is not None:
            row["estimate_refined"] = self.refined["estimate"]
        return pd.DataFrame([row])


def estimate_sup_tail(
    spec: FieldSpec,
    u: float,
    grid: Grid,
    reps: int,
    seed: int = 0,
    threads: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
    asymptotic: Optional[float] = None,
    refine: bool = False,
    histogram: bool = False,
    enforce_resolution: bool = True,
) -> McTailEstimate:
    """Crude Monte Carlo of P(max over grid X(t) > u).

    With ``refine`` the paths are drawn on the midpoint refinement and the
    requested grid is read off its even nodes, so both estimates share paths.
    ``asymptotic`` (an approximate probability) drives the underpowered flag.
    """
    if reps < MIN_REPS:
        raise ValueError(f"reps must be at least {MIN_REPS}")
    if enforce_resolution:
        check_resolution(spec, grid, u)
    sample_grid = grid.refine() if refine else grid
    sampler = field_sampler(spec, sample_grid)
    strides = (2, 1) if refine else (1,)
    edges = _histogram_edges(u, HISTOGRAM_BINS)

    def work(rng: np.random.Generator, count: int) -> Tuple[np.ndarray, np.ndarray]:
        sups = sampler.draw_sup(rng, count, strides)
        hits = (sups > u).sum(axis=1)
        counts = np.stack([np.histogram(np.clip(row, edges[0], edges[-1]), bins=edges)[0] for row in sups])
        return hits, counts

    logging.info(f"Monte Carlo for '{spec.name}' at u={u:g}: {reps} replications on {sample_grid.count} points")
    parts = run_blocks(work, reps, seed, threads, block_size)
    hits = np.sum([part[0] for part in parts], axis=0)
    hist = np.sum([part[1] for part in parts], axis=0)

    flags: List[str] = []
    expected = None
    if asymptotic is not None:
        expected = float(asymptotic) * reps
        if expected < MIN_EXPECTED_HITS:
            flags.append("underpowered")
            logging.warning(f"Expected hit count {expected:.3g} at u={u:g} is below {MIN_EXPECTED_HITS:g}")

    coarse_hits = int(hits[0])
    refined = None
    if refine:
        refined_hits = int(hits[1])
        refined = {
            "grid": sample_grid.to_dict(),
            "hits": refined_hits,
            "estimate": refined_hits / reps,
            "ci": list(wilson_interval(refined_hits, reps)),
        }
    hist_record = None
    if histogram:
        hist_record = {"edges": edges.tolist(), "counts": hist[0].astype(int).tolist()}
        if refine:
            hist_record["counts_refined"] = hist[1].astype(int).tolist()

    return McTailEstimate(
        field=spec.name,
        u=float(u),
        grid=grid.to_dict(),
        reps=reps,
        hits=coarse_hits,
        estimate=coarse_hits / reps,
        ci=wilson_interval(coarse_hits, reps),
        seed=seed,
        expected_hits=expected,
        flags=tuple(flags),
        jitter=sampler.jitter,
        refined=refined,
        histogram=hist_record,
    )


def direction_grid(k: int, count: int) -> np.ndarray:
    """Unit vectors on S_(k-1); the first m rows of a larger grid are the m-row grid for k >= 3.

    k = 2 uses equally spaced angles, so a grid of 2m angles contains the one of m.
    """
    if k < 1 or count < 1:
        raise ValueError("k and count must be positive")
    if k == 1:
        return np.array([[1.0], [-1.0]])[: max(1, min(count, 2))]
    if k == 2:
        angles = 2.0 * math.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    # skip the Halton origin, which maps to -inf under the normal quantile
    points = qmc.Halton(d=k, scramble=False).random(count + 1)[1:]
    gaussian = norm.ppf(points)
    return gaussian / np.linalg.norm(gaussian, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class ChiSupReport:
    k: int
    reps: int
    directions: int
    u: float
    gaps: np.ndarray
    exact_direction_error: float
    chi_hits: int
    exact_hits: int
    grid_hits: int
    seed: int

    @property
    def chi_estimate(self) -> float:
        return self.chi_hits / self.reps

    @property
    def exact_estimate(self) -> float:
        return self.exact_hits / self.reps

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "reps": self.reps,
            "directions": self.directions,
            "u": self.u,
            "gap_mean": float(self.gaps.mean()),
            "gap_max": float(self.gaps.max()),
            "gap_min": float(self.gaps.min()),
            "exact_direction_error": self.exact_direction_error,
            "chi_tail": {"hits": self.chi_hits, "estimate": self.chi_estimate, "ci": list(wilson_interval(self.chi_hits, self.reps))},
            "exact_direction_tail": {"hits": self.exact_hits, "estimate": self.exact_estimate},
            "direction_grid_tail": {"hits": self.grid_hits, "estimate": self.grid_hits / self.reps},
            "rng": rng_metadata(self.seed),
        }


def chi_sup_check(
    profile: AlphaProfile,
    k: int,
    grid: Grid,
    directions: np.ndarray,
    reps: int,
    seed: int = 0,
    u: float = 3.0,
    threads: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> ChiSupReport:
    """Compare sup_t |B(t)| with sup over (t, direction grid) of <B(t), v> on shared paths.

    B has k independent standardized mfBm coordinates on the time grid.
    """
    if grid.k != 1:
        raise ValueError("chi_sup_check needs a one-dimensional time grid")
    dirs = np.asarray(directions, dtype=float)
    if dirs.ndim != 2 or dirs.shape[1] != k:
        raise ValueError(f"directions must have shape (m, {k})")
    if np.any(np.abs(np.linalg.norm(dirs, axis=1) - 1.0) > UNIT_VECTOR_TOL):
        raise ValueError("direction grid must contain unit vectors")
    factorized = build_cov_matrix(grid.axes[0], MfbmKernel(profile))

    def work(rng: np.random.Generator, count: int) -> np.ndarray:
        coords = np.stack([draw_gaussian(factorized, count, rng) for _ in range(k)], axis=-1)
        norms = np.linalg.norm(coords, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(norms[..., None] > 0.0, coords / norms[..., None], 0.0)
        exact = np.einsum("...i,...i->...", coords, unit)
        error = np.abs(exact - norms).max(axis=1)
        best = np.full(count, -np.inf)
        for direction in dirs:
            best = np.maximum(best, (coords @ direction).max(axis=1))
        chi_sup = norms.max(axis=1)
        return np.stack([chi_sup, exact.max(axis=1), best, error])

    stats = np.concatenate(run_blocks(work, reps, seed, threads, block_size), axis=1)
    chi_sup, exact_sup, grid_sup, error = stats
    return ChiSupReport(
        k=k,
        reps=reps,
        directions=dirs.shape[0],
        u=float(u),
        gaps=chi_sup - grid_sup,
        exact_direction_error=float(error.max()),
        chi_hits=int((chi_sup > u).sum()),
        exact_hits=int((exact_sup > u).sum()),
        grid_hits=int((grid_sup > u).sum()),
        seed=seed,
    )


@dataclass(frozen=True)
class RatioRow:
    u: float
    mc_estimate: float
    ci_lo: float
    ci_hi: float
    asymptotic: float
    ratio: float
    flags: Tuple[str, ...] = ()


@dataclass(frozen=True)
class RatioReport:
    rows: Tuple[RatioRow, ...]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for row in self.rows:
            if row.mc_estimate > 0.0 and not (math.isfinite(row.ratio) and row.ratio > 0.0):
                raise ValueError(f"ratio at u={row.u} must be finite and positive")

    @property
    def ratios(self) -> List[float]:
        return [row.ratio for row in self.rows]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{name: getattr(row, name) for name in RATIO_COLUMNS} for row in self.rows], columns=RATIO_COLUMNS)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows": [{**{name: getattr(row, name) for name in RATIO_COLUMNS}, "flags": list(row.flags)} for row in self.rows],
            **self.metadata,
        }


def ratio_experiment(
    spec: FieldSpec,
    u_list: Sequence[float],
    reps: int,
    pickands: Sequence[Any],
    seed: int = 0,
    threads: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
    resolution_factor: float = RESOLUTION_FACTOR,
    refine: bool = False,
) -> RatioReport:
    """MC / asymptotic ratios on the threshold-adaptive grid at each u (same seed at every u)."""
    levels = [float(u) for u in u_list]
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("u_list must be a non-empty increasing list")
    rows = []
    grids = []
    for u in levels:
        grid = grid_for_threshold(spec, u, resolution_factor)
        approx = tail_asymptotic(spec, pickands, u)
        mc = estimate_sup_tail(
            spec,
            u,
            grid,
            reps,
            seed=seed,
            threads=threads,
            block_size=block_size,
            asymptotic=approx.probability,
            refine=refine,
            enforce_resolution=False,
        )
        ratio = mc.estimate / approx.probability if mc.estimate > 0.0 else float("nan")
        rows.append(
            RatioRow(
                u=u,
                mc_estimate=mc.estimate,
                ci_lo=mc.ci[0],
                ci_hi=mc.ci[1],
                asymptotic=approx.probability,
                ratio=ratio,
                flags=tuple(dict.fromkeys(approx.flags + mc.flags)),
            )
        )
        grid_record = {"u": u, **grid.to_dict(), "jitter": mc.jitter}
        if mc.refined is not None:
            grid_record["estimate_refined"] = mc.refined["estimate"]
        grids.append(grid_record)
        logging.info(f"u={u:g}: MC {mc.estimate:.5g}, asymptotic {approx.probability:.5g}, ratio {ratio:.4g}")
    metadata = {
        "field": spec.name,
        "reps": reps,
        "resolution_factor": resolution_factor,
        "grids": grids,
        "rng": rng_metadata(seed),
    }
    return RatioReport(rows=tuple(rows), metadata=metadata)
