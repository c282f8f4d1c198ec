from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.fft

from fields.covariance import (
    FactorizedCovariance,
    MfbmKernel,
    build_cov_matrix,
    field_kernel,
)
from fields.profiles import FieldSpec
from simulation.rng import make_stream
from utils.settings import CIRCULANT_CLIP_TOL

HEADER_DTYPE = np.dtype("<u8")
VALUE_DTYPE = np.dtype("<f8")


class EmbeddingError(RuntimeError):
    """Raised when the circulant embedding spectrum is negative beyond round-off."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Rectangular grid given by strictly increasing node lists, one per axis."""

    axes: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if not self.axes:
            raise ValueError("grid needs at least one axis")
        cleaned = []
        for i, nodes in enumerate(self.axes):
            arr = np.asarray(nodes, dtype=float)
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError(f"axis {i} must be a non-empty 1-d node list")
            if not np.all(np.isfinite(arr)) or np.any(np.diff(arr) <= 0):
                raise ValueError(f"axis {i} nodes must be finite and strictly increasing")
            arr.setflags(write=False)
            cleaned.append(arr)
        object.__setattr__(self, "axes", tuple(cleaned))

    @classmethod
    def uniform(cls, lower: Sequence[float] | float, upper: Sequence[float] | float, counts: Sequence[int] | int, k: int = 1) -> "Grid":
        lows = np.broadcast_to(np.asarray(lower, dtype=float), (k,)) if np.ndim(lower) == 0 else np.asarray(lower, dtype=float)
        k = lows.size
        highs = np.broadcast_to(np.asarray(upper, dtype=float), (k,))
        sizes = np.broadcast_to(np.asarray(counts, dtype=int), (k,))
        axes = []
        for lo, hi, n in zip(lows, highs, sizes):
            if n < 1:
                raise ValueError("each axis needs at least one node")
            axes.append(np.array([lo]) if n == 1 else np.linspace(lo, hi, int(n)))
        return cls(tuple(axes))

    @classmethod
    def from_step(cls, lower: Sequence[float] | float, upper: Sequence[float] | float, steps: Sequence[float] | float, k: int = 1) -> "Grid":
        """Uniform grid whose spacing does not exceed the requested per-axis step."""
        lows = np.broadcast_to(np.asarray(lower, dtype=float), (k,)) if np.ndim(lower) == 0 else np.asarray(lower, dtype=float)
        k = lows.size
        highs = np.broadcast_to(np.asarray(upper, dtype=float), (k,))
        widths = np.broadcast_to(np.asarray(steps, dtype=float), (k,))
        if np.any(widths <= 0):
            raise ValueError("grid steps must be positive")
        counts = [int(math.ceil((hi - lo) / h - 1e-9)) + 1 if hi > lo else 1 for lo, hi, h in zip(lows, highs, widths)]
        return cls.uniform(lows, highs, counts)

    @classmethod
    def single(cls, point: Sequence[float]) -> "Grid":
        return cls(tuple(np.array([float(x)]) for x in point))

    @property
    def k(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(axis.size for axis in self.axes)

    @property
    def count(self) -> int:
        return int(np.prod(self.shape))

    def steps(self) -> np.ndarray:
        return np.array([float(np.max(np.diff(axis))) if axis.size > 1 else 0.0 for axis in self.axes])

    def refine(self) -> "Grid":
        """Insert midpoints; the original nodes sit at the even indices of each refined axis."""
        refined = []
        for axis in self.axes:
            out = np.empty(2 * axis.size - 1)
            out[::2] = axis
            out[1::2] = 0.5 * (axis[:-1] + axis[1:])
            refined.append(out)
        return Grid(tuple(refined))

    def points(self) -> np.ndarray:
        """Grid points as a (count, k) array in row-major axis order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "counts": list(self.shape),
            "lower": [float(axis[0]) for axis in self.axes],
            "upper": [float(axis[-1]) for axis in self.axes],
            "max_step": self.steps().tolist(),
        }


@dataclass(frozen=True, eq=False)
class SamplePath:
    grid: Grid
    values: np.ndarray
    seed: int
    stream: int

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=float).ravel()
        if values.size != self.grid.count:
            raise ValueError(f"expected {self.grid.count} values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("sample path contains non-finite values")
        object.__setattr__(self, "values", values)

    def to_frame(self) -> pd.DataFrame:
        points = self.grid.points()
        frame = pd.DataFrame({f"t{i}": points[:, i] for i in range(self.grid.k)})
        frame["value"] = self.values
        return frame

    def to_bytes(self) -> bytes:
        header = np.array([self.grid.k, *self.grid.shape, self.seed, self.stream], dtype=HEADER_DTYPE)
        return header.tobytes() + self.values.astype(VALUE_DTYPE).tobytes()


def read_binary(data: bytes) -> Tuple[Dict[str, Any], np.ndarray]:
    """Decode a SamplePath dump into (header, values)."""
    width = HEADER_DTYPE.itemsize
    if len(data) < width:
        raise ValueError("binary dump is truncated")
    k = int(np.frombuffer(data[:width], dtype=HEADER_DTYPE)[0])
    header_len = (k + 3) * width
    if len(data) < header_len:
        raise ValueError("binary dump is truncated")
    header = np.frombuffer(data[:header_len], dtype=HEADER_DTYPE)
    counts = [int(c) for c in header[1 : k + 1]]
    values = np.frombuffer(data[header_len:], dtype=VALUE_DTYPE).astype(float)
    if values.size != int(np.prod(counts)):
        raise ValueError("binary dump payload does not match its header")
    return {"k": k, "counts": counts, "seed": int(header[k + 1]), "stream": int(header[k + 2])}, values


def draw_gaussian(factorized: FactorizedCovariance, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, n) mean-zero Gaussian rows with covariance L L^T."""
    normals = rng.standard_normal((count, factorized.size))
    return normals @ factorized.factor.T


def cholesky_sample(
    factorized: FactorizedCovariance, grid: Grid, count: int, seed: int, stream: int = 0
) -> List[SamplePath]:
    """Exact paths on ``grid``; path i uses stream ``stream + i``."""
    if factorized.size != grid.count:
        raise ValueError("factorized covariance does not match the grid")
    if count < 1:
        raise ValueError("count must be a positive integer")
    paths = []
    for i in range(count):
        values = draw_gaussian(factorized, 1, make_stream(seed, stream + i))[0]
        paths.append(SamplePath(grid=grid, values=values, seed=seed, stream=stream + i))
    return paths


def fgn_autocovariance(alpha: float, m: int) -> np.ndarray:
    """Autocovariance of unit-step increments of B_alpha at lags 0..m."""
    lags = np.arange(m + 1, dtype=float)
    return 0.5 * (np.abs(lags + 1) ** alpha - 2.0 * lags**alpha + np.abs(lags - 1) ** alpha)


@lru_cache(maxsize=64)
def _circulant_root(alpha: float, m: int) -> np.ndarray:
    gamma = fgn_autocovariance(alpha, m)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eigenvalues = scipy.fft.fft(row).real
    top = float(eigenvalues.max())
    smallest = float(eigenvalues.min())
    if smallest < -CIRCULANT_CLIP_TOL * top:
        raise EmbeddingError(
            f"circulant embedding for alpha={alpha:g}, m={m} has eigenvalue {smallest:.3e} "
            f"below -{CIRCULANT_CLIP_TOL:g}*max"
        )
    if smallest < 0.0:
        logging.warning(f"Clipping circulant eigenvalues down to {smallest:.3e} for alpha={alpha:g}")
        eigenvalues = np.clip(eigenvalues, 0.0, None)
    root = np.sqrt(eigenvalues / row.size)
    root.setflags(write=False)
    return root


def fbm_spectral_batch(alpha: float, step: float, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, n) fBm paths on {0, step, ..., (n-1) step} by circulant embedding.

    Each complex draw yields two independent paths (real and imaginary parts).
    """
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2]")
    if n < 2:
        raise ValueError("spectral fBm needs n >= 2")
    if step <= 0:
        raise ValueError("step must be positive")
    m = n - 1
    root = _circulant_root(float(alpha), m)
    pairs = (count + 1) // 2
    noise = rng.standard_normal((pairs, root.size)) + 1j * rng.standard_normal((pairs, root.size))
    spectrum = scipy.fft.fft(root * noise, axis=-1)[:, :m]
    increments = np.concatenate([spectrum.real, spectrum.imag], axis=0)[:count]
    increments *= step ** (0.5 * alpha)
    paths = np.zeros((count, n))
    np.cumsum(increments, axis=1, out=paths[:, 1:])
    return paths


def fbm_sample_spectral(alpha: float, step: float, n: int, seed: int, stream: int = 0) -> SamplePath:
    values = fbm_spectral_batch(alpha, step, n, 1, make_stream(seed, stream))[0]
    grid = Grid((step * np.arange(n, dtype=float),))
    return SamplePath(grid=grid, values=values, seed=seed, stream=stream)


class FieldSampler:
    """Batches of field values on a fixed grid."""

    def __init__(self, grid: Grid):
        self.grid = grid

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Values with shape (count, *grid.shape)."""
        raise NotImplementedError

    def draw_sup(self, rng: np.random.Generator, count: int, strides: Sequence[int] = (1,)) -> np.ndarray:
        """Per-path maxima over the sub-grids keeping every stride-th node; shape (len(strides), count)."""
        values = self.draw(rng, count)
        out = np.empty((len(strides), count))
        for j, stride in enumerate(strides):
            sub = values[(slice(None),) + (slice(None, None, stride),) * self.grid.k]
            out[j] = sub.reshape(count, -1).max(axis=1)
        return out

    @property
    def jitter(self) -> float:
        raise NotImplementedError


class DenseSampler(FieldSampler):
    def __init__(self, grid: Grid, factorized: FactorizedCovariance):
        super().__init__(grid)
        self.factorized = factorized

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return draw_gaussian(self.factorized, count, rng).reshape((count,) + self.grid.shape)

    @property
    def jitter(self) -> float:
        return self.factorized.jitter


class AxisSumSampler(FieldSampler):
    """k^(-1/2) * sum of independent per-axis processes; each axis factorized on its own nodes."""

    def __init__(self, grid: Grid, factors: Sequence[FactorizedCovariance]):
        super().__init__(grid)
        self.factors = list(factors)

    def _axis_draws(self, rng: np.random.Generator, count: int) -> List[np.ndarray]:
        return [draw_gaussian(factor, count, rng) for factor in self.factors]

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        total = np.zeros((count,) + self.grid.shape)
        for i, values in enumerate(self._axis_draws(rng, count)):
            shape = [count] + [1] * self.grid.k
            shape[i + 1] = values.shape[1]
            total = total + values.reshape(shape)
        return total / math.sqrt(self.grid.k)

    def draw_sup(self, rng: np.random.Generator, count: int, strides: Sequence[int] = (1,)) -> np.ndarray:
        # the sup of a sum of functions of separate coordinates is the sum of the sups
        draws = self._axis_draws(rng, count)
        out = np.empty((len(strides), count))
        for j, stride in enumerate(strides):
            out[j] = sum(values[:, ::stride].max(axis=1) for values in draws) / math.sqrt(self.grid.k)
        return out

    @property
    def jitter(self) -> float:
        return max(factor.jitter for factor in self.factors)


def field_sampler(spec: FieldSpec, grid: Grid) -> FieldSampler:
    if grid.k != spec.k:
        raise ValueError(f"grid has {grid.k} axes, field has k={spec.k}")
    if spec.require_model("sampling") == "aggregate_mfbm":
        factors = [
            build_cov_matrix(axis, MfbmKernel(profile)) for axis, profile in zip(grid.axes, spec.profiles)
        ]
        return AxisSumSampler(grid, factors)
    return DenseSampler(grid, build_cov_matrix(grid.points(), field_kernel(spec)))


def field_paths(spec: FieldSpec, grid: Grid, count: int, seed: int, stream: int = 0) -> List[SamplePath]:
    """SamplePaths of the field model; path i uses stream ``stream + i``."""
    sampler = field_sampler(spec, grid)
    return [
        SamplePath(grid=grid, values=sampler.draw(make_stream(seed, stream + i), 1)[0], seed=seed, stream=stream + i)
        for i in range(count)
    ]
