"""Tests for simulation/sampling.py, simulation/rng.py and simulation/parallel.py modules."""
from __future__ import annotations

import numpy as np
import pytest

from fields.covariance import FbmKernel, MfbmKernel, build_cov_matrix
from fields.profiles import CovarianceModelError, load_field_spec
from simulation.parallel import BLOCK_STREAM_OFFSET, concat_blocks, run_blocks, split_blocks
from simulation.rng import RNG_ALGORITHM, make_stream, rng_metadata
from simulation.sampling import (
    AxisSumSampler,
    DenseSampler,
    Grid,
    SamplePath,
    _circulant_root,
    cholesky_sample,
    fbm_sample_spectral,
    fbm_spectral_batch,
    fgn_autocovariance,
    field_paths,
    field_sampler,
    read_binary,
)


class TestGrid:
    """Tests for Grid."""

    def test_uniform(self):
        """Test equally spaced nodes on each axis."""
        grid = Grid.uniform(0.0, 1.0, 5, k=2)
        assert grid.shape == (5, 5)
        assert grid.count == 25
        np.testing.assert_allclose(grid.steps(), [0.25, 0.25])

    def test_from_step_never_exceeds_requested_step(self):
        """Test that the realized spacing honors the bound."""
        grid = Grid.from_step(0.25, 1.0, 0.1)
        assert grid.steps()[0] <= 0.1
        assert grid.axes[0][0] == 0.25
        assert grid.axes[0][-1] == 1.0

    def test_from_step_exact_division(self):
        """Test that an exact step does not add a spare node."""
        assert Grid.from_step(0.0, 1.0, 0.25).shape == (5,)

    def test_refine_keeps_coarse_nodes_at_even_indices(self):
        """Test the nested midpoint refinement."""
        grid = Grid.uniform(0.0, 1.0, 5)
        fine = grid.refine()
        assert fine.shape == (9,)
        np.testing.assert_array_equal(fine.axes[0][::2], grid.axes[0])

    def test_points_row_major(self):
        """Test the (count, k) point listing."""
        grid = Grid((np.array([0.0, 1.0]), np.array([2.0, 3.0, 4.0])))
        points = grid.points()
        assert points.shape == (6, 2)
        np.testing.assert_array_equal(points[1], [0.0, 3.0])

    def test_rejects_unsorted_axis(self):
        """Test that nodes must increase strictly."""
        with pytest.raises(ValueError):
            Grid((np.array([0.0, 0.5, 0.5]),))

    def test_axes_are_read_only(self):
        """Test that grid nodes cannot be mutated."""
        grid = Grid.uniform(0.0, 1.0, 3)
        with pytest.raises(ValueError):
            grid.axes[0][0] = 5.0

    def test_single_point(self):
        """Test the one-node grid."""
        grid = Grid.single([0.5, 0.75])
        assert grid.count == 1
        np.testing.assert_array_equal(grid.steps(), [0.0, 0.0])


class TestStreams:
    """Tests for make_stream, split_blocks and run_blocks functions."""

    def test_same_stream_same_draws(self):
        """Test reproducibility of a (seed, stream) pair."""
        a = make_stream(11, 3).standard_normal(5)
        b = make_stream(11, 3).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        """Test that neighbouring streams are distinct."""
        a = make_stream(11, 3).standard_normal(5)
        b = make_stream(11, 4).standard_normal(5)
        assert not np.array_equal(a, b)

    def test_negative_stream_rejected(self):
        """Test that stream ids are non-negative."""
        with pytest.raises(ValueError):
            make_stream(1, -1)

    def test_metadata(self):
        """Test the recorded RNG description."""
        meta = rng_metadata(5)
        assert meta["algorithm"] == RNG_ALGORITHM
        assert meta["seed"] == 5

    def test_split_blocks(self):
        """Test fixed-size blocks with a short remainder."""
        assert split_blocks(10, 4) == [(0, 4), (1, 4), (2, 2)]

    def test_results_independent_of_thread_count(self):
        """Test that the worker count never changes the draws."""

        def work(rng, count):
            return rng.standard_normal(count)

        serial = concat_blocks(run_blocks(work, 1000, seed=9, threads=1, block_size=64))
        pooled = concat_blocks(run_blocks(work, 1000, seed=9, threads=4, block_size=64))
        np.testing.assert_array_equal(serial, pooled)

    def test_blocks_use_offset_streams(self):
        """Test that block i draws from stream BLOCK_STREAM_OFFSET + i."""
        parts = run_blocks(lambda rng, count: rng.standard_normal(count), 6, seed=2, block_size=3)
        np.testing.assert_array_equal(parts[1], make_stream(2, BLOCK_STREAM_OFFSET + 1).standard_normal(3))


class TestSamplePath:
    """Tests for SamplePath export."""

    def test_frame_columns(self):
        """Test the CSV layout t0.., value."""
        grid = Grid.uniform(0.0, 1.0, 3, k=2)
        path = SamplePath(grid=grid, values=np.arange(9.0), seed=1, stream=0)
        frame = path.to_frame()
        assert list(frame.columns) == ["t0", "t1", "value"]
        assert len(frame) == 9

    def test_binary_header_and_payload(self):
        """Test the little-endian dump and its reader."""
        grid = Grid.uniform(0.0, 1.0, (2, 3), k=2)
        path = SamplePath(grid=grid, values=np.linspace(-1, 1, 6), seed=42, stream=7)
        header, values = read_binary(path.to_bytes())
        assert header == {"k": 2, "counts": [2, 3], "seed": 42, "stream": 7}
        np.testing.assert_array_equal(values, path.values)

    def test_truncated_binary(self):
        """Test that a short payload is rejected."""
        grid = Grid.uniform(0.0, 1.0, 4)
        data = SamplePath(grid=grid, values=np.zeros(4), seed=1, stream=0).to_bytes()
        with pytest.raises(ValueError):
            read_binary(data[:-8])

    def test_wrong_value_count(self):
        """Test that values must match the grid."""
        with pytest.raises(ValueError):
            SamplePath(grid=Grid.uniform(0.0, 1.0, 4), values=np.zeros(3), seed=1, stream=0)


class TestCholeskySample:
    """Tests for cholesky_sample function."""

    def test_paths_reproducible_and_distinct(self, unique_min_profile):
        """Test per-path streams."""
        grid = Grid.uniform(0.3, 1.0, 20)
        factorized = build_cov_matrix(grid.axes[0], MfbmKernel(unique_min_profile))
        first = cholesky_sample(factorized, grid, 2, seed=5)
        again = cholesky_sample(factorized, grid, 2, seed=5)
        np.testing.assert_array_equal(first[0].values, again[0].values)
        assert not np.array_equal(first[0].values, first[1].values)
        assert [path.stream for path in first] == [0, 1]

    def test_stream_offset_selects_the_same_path(self, unique_min_profile):
        """Test that path i of a batch equals a single draw from stream i."""
        grid = Grid.uniform(0.3, 1.0, 20)
        factorized = build_cov_matrix(grid.axes[0], MfbmKernel(unique_min_profile))
        batch = cholesky_sample(factorized, grid, 3, seed=5)
        single = cholesky_sample(factorized, grid, 1, seed=5, stream=2)
        np.testing.assert_array_equal(batch[2].values, single[0].values)

    def test_empirical_variance_is_one(self, unique_min_profile):
        """Test the marginal variance of the standardized mfBm."""
        grid = Grid.uniform(0.3, 1.0, 15)
        factorized = build_cov_matrix(grid.axes[0], MfbmKernel(unique_min_profile))
        sampler = DenseSampler(grid, factorized)
        values = sampler.draw(make_stream(3, 0), 20000)
        np.testing.assert_allclose(values.var(axis=0), 1.0, atol=0.05)

    def test_grid_mismatch(self, unique_min_profile):
        """Test that the factor must match the grid."""
        factorized = build_cov_matrix(np.linspace(0.3, 1.0, 5), MfbmKernel(unique_min_profile))
        with pytest.raises(ValueError):
            cholesky_sample(factorized, Grid.uniform(0.3, 1.0, 6), 1, seed=1)


class TestSpectralFbm:
    """Tests for circulant-embedding fBm sampling."""

    def test_autocovariance_lag_zero(self):
        """Test unit variance of the increments."""
        assert fgn_autocovariance(1.3, 4)[0] == pytest.approx(1.0)

    def test_brownian_increments_uncorrelated(self):
        """Test that alpha = 1 gives white noise increments."""
        np.testing.assert_allclose(fgn_autocovariance(1.0, 5)[1:], 0.0, atol=1e-15)

    def test_root_is_cached(self):
        """Test that the circulant spectrum is computed once per (alpha, m)."""
        assert _circulant_root(1.4, 32) is _circulant_root(1.4, 32)

    def test_paths_start_at_zero(self):
        """Test B(0) = 0."""
        paths = fbm_spectral_batch(0.7, 0.1, 16, 5, make_stream(1, 0))
        assert paths.shape == (5, 16)
        np.testing.assert_array_equal(paths[:, 0], 0.0)

    def test_odd_count_uses_real_and_imaginary_parts(self):
        """Test that an odd batch still returns the requested paths."""
        assert fbm_spectral_batch(1.2, 0.1, 8, 3, make_stream(1, 0)).shape == (3, 8)

    @pytest.mark.parametrize("alpha", [0.6, 1.0, 1.5])
    def test_terminal_variance(self, alpha):
        """Test Var B(T) = T^alpha on the grid endpoint."""
        step, n = 0.05, 21
        paths = fbm_spectral_batch(alpha, step, n, 20000, make_stream(4, 0))
        horizon = step * (n - 1)
        assert paths[:, -1].var() == pytest.approx(horizon**alpha, rel=0.05)

    def test_matches_cholesky_covariance(self):
        """Test the empirical covariance against the exact fBm kernel."""
        alpha, step, n = 1.4, 0.1, 6
        paths = fbm_spectral_batch(alpha, step, n, 40000, make_stream(8, 0))
        nodes = step * np.arange(n)
        exact = FbmKernel(alpha).pairwise(nodes[:, None], nodes[:, None])
        np.testing.assert_allclose(np.cov(paths[:, 1:], rowvar=False), exact[1:, 1:], atol=0.03)

    def test_single_path_wrapper(self):
        """Test fbm_sample_spectral grid and metadata."""
        path = fbm_sample_spectral(1.0, 0.25, 5, seed=3, stream=2)
        np.testing.assert_allclose(path.grid.axes[0], [0.0, 0.25, 0.5, 0.75, 1.0])
        assert path.stream == 2

    def test_rejects_bad_arguments(self):
        """Test input validation."""
        with pytest.raises(ValueError):
            fbm_spectral_batch(2.5, 0.1, 8, 1, make_stream(1, 0))
        with pytest.raises(ValueError):
            fbm_spectral_batch(1.0, 0.1, 1, 1, make_stream(1, 0))


class TestFieldSampler:
    """Tests for field_sampler and field_paths functions."""

    def test_aggregate_uses_axis_sum(self, mixed_spec):
        """Test that aggregate fields are sampled per coordinate."""
        sampler = field_sampler(mixed_spec, Grid.uniform(0.25, 1.0, 6, k=2))
        assert isinstance(sampler, AxisSumSampler)

    def test_stationary_uses_dense(self, stationary_spec):
        """Test that stationary fields use one dense factor."""
        sampler = field_sampler(stationary_spec, Grid.uniform(0.0, 1.0, 6))
        assert isinstance(sampler, DenseSampler)

    def test_axis_sum_sup_matches_full_field(self, mixed_spec):
        """Test that the sup of the aggregate equals the per-axis sup sum on the same draws."""
        grid = Grid.uniform(0.25, 1.0, 7, k=2)
        sampler = field_sampler(mixed_spec, grid)
        full = sampler.draw(make_stream(6, 0), 50).reshape(50, -1).max(axis=1)
        sups = sampler.draw_sup(make_stream(6, 0), 50)[0]
        np.testing.assert_allclose(sups, full, rtol=1e-12)

    def test_strided_sup_is_nested(self, stationary_spec):
        """Test that the coarse sup never exceeds the fine sup."""
        grid = Grid.uniform(0.0, 1.0, 9)
        sampler = field_sampler(stationary_spec, grid)
        sups = sampler.draw_sup(make_stream(1, 0), 200, strides=(2, 1))
        assert np.all(sups[0] <= sups[1])

    def test_axis_mismatch(self, stationary_spec):
        """Test that the grid dimension must match the field."""
        with pytest.raises(ValueError):
            field_sampler(stationary_spec, Grid.uniform(0.0, 1.0, 3, k=2))

    def test_field_without_model(self, specs_dir):
        """Test that sampling a field with no covariance model is refused."""
        spec = load_field_spec(specs_dir / "unique_min_unit_scale.json")
        with pytest.raises(CovarianceModelError, match="sampling"):
            field_sampler(spec, Grid.uniform(0.0, 1.0, 3))

    def test_field_paths(self, mixed_spec):
        """Test that paths carry their stream ids."""
        paths = field_paths(mixed_spec, Grid.uniform(0.25, 1.0, 4, k=2), 2, seed=8, stream=10)
        assert [path.stream for path in paths] == [10, 11]
        assert paths[0].values.size == 16
