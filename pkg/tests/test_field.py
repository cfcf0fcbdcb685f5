import numpy as np
import pytest

from beliefroadmap.field import (
    FieldConfig,
    FieldConfigError,
    VarianceBox,
    bilinear_weights,
    build_wind_field,
    discretize_along,
    evaluate_realization,
    interpolate_mean,
    kernel_value,
    phi,
    sample_realization,
)


@pytest.fixture(scope="module")
def multi_query_field():
    return build_wind_field(FieldConfig())


@pytest.fixture(scope="module")
def single_query_field():
    return build_wind_field(
        FieldConfig(variance_boxes=(VarianceBox(lo=(3, 3), hi=(7, 7), value=6.0),))
    )


def node_index(field, ix, iy):
    return iy * field.grid.nx + ix


class TestPhi:
    def test_extracts_positions(self):
        assert np.allclose(phi([5, 5, 0, 0, 0, 0]), [5, 5])
        assert np.allclose(phi([2, 2, 1, -1, 0, 0]), [2, 2])
        assert np.allclose(phi([0, 10, 3, 3, 3, 3]), [0, 10])

    def test_batch(self):
        out = phi(np.arange(12.0).reshape(2, 6))
        assert out.shape == (2, 2)

    def test_rejects_short_state(self):
        with pytest.raises(ValueError):
            phi([1.0])


class TestBuildWindField:
    def test_rotational_mean_at_nodes(self, multi_query_field):
        # counterclockwise flow [(5-y)/4, (x-5)/4]
        grid = multi_query_field.grid
        assert np.allclose(grid.mean_samples[node_index(multi_query_field, 5, 5)], [0, 0])
        assert np.allclose(grid.mean_samples[node_index(multi_query_field, 5, 1)], [1, 0])
        assert np.allclose(grid.mean_samples[node_index(multi_query_field, 0, 5)], [0, -1.25])

    def test_variance_layouts(self, multi_query_field, single_query_field):
        assert np.allclose(multi_query_field.grid.variance_samples, 0.2)
        var = single_query_field.grid.variance_samples
        assert var[node_index(single_query_field, 5, 5)] == 6.0
        assert var[node_index(single_query_field, 3, 7)] == 6.0
        assert var[node_index(single_query_field, 2, 5)] == 0.2

    def test_grid_shape(self, multi_query_field):
        grid = multi_query_field.grid
        assert (grid.nx, grid.ny) == (11, 11)
        assert grid.mean_samples.shape == (121, 2)

    def test_psd_projection_invariants(self, multi_query_field, single_query_field):
        for field in (multi_query_field, single_query_field):
            cov = field.grid_cov
            assert np.allclose(cov, cov.T)
            assert np.linalg.eigvalsh(cov)[0] >= -1e-10
            # projection perturbs the assembled diagonal by at most the clip
            diag = np.diag(cov)
            target = np.repeat(field.grid.variance_samples, 2)
            assert np.max(np.abs(diag - target)) <= field.psd_shift + 1e-9

    def test_rejects_bad_config(self):
        with pytest.raises(FieldConfigError):
            build_wind_field(FieldConfig(spacing=-1.0))
        with pytest.raises(FieldConfigError):
            build_wind_field(
                FieldConfig(variance_boxes=(VarianceBox(lo=(7, 7), hi=(3, 3), value=6.0),))
            )
        with pytest.raises(FieldConfigError):
            build_wind_field(
                FieldConfig(variance_boxes=(VarianceBox(lo=(3, 3), hi=(7, 7), value=-1.0),))
            )


class TestKernel:
    def test_value_at_zero_distance(self, multi_query_field):
        assert kernel_value(multi_query_field, [1, 1], [1, 1]) == pytest.approx(0.3)

    def test_value_at_three_meters(self, multi_query_field):
        expected = 0.3 - 3.0 / (10.0 * np.sqrt(2.0))
        assert kernel_value(multi_query_field, [0, 0], [3, 0]) == pytest.approx(expected)

    def test_clamps_to_zero(self, multi_query_field):
        assert kernel_value(multi_query_field, [0, 0], [6, 0]) == 0.0


class TestInterpolation:
    def test_weights_nonnegative_sum_to_one(self, multi_query_field):
        rng = np.random.default_rng(7)
        pts = rng.uniform(-2, 12, size=(200, 2))  # includes out-of-extent points
        _, w = bilinear_weights(multi_query_field.grid, pts)
        assert np.all(w >= -1e-15)
        assert np.allclose(w.sum(axis=1), 1.0)

    def test_at_grid_node(self, multi_query_field):
        value = interpolate_mean(multi_query_field, [4.0, 7.0])
        expected = multi_query_field.grid.mean_samples[node_index(multi_query_field, 4, 7)]
        assert np.allclose(value, expected)

    def test_cell_center_averages_corners(self, multi_query_field):
        grid = multi_query_field.grid
        corners = [node_index(multi_query_field, 2 + dx, 3 + dy) for dy in (0, 1) for dx in (0, 1)]
        expected = grid.mean_samples[corners].mean(axis=0)
        assert np.allclose(interpolate_mean(multi_query_field, [2.5, 3.5]), expected)

    def test_reproduces_affine_flow(self, multi_query_field):
        # the rotational mean is affine in position, so interpolation is exact
        assert np.allclose(interpolate_mean(multi_query_field, [5.5, 5.0]), [0.0, 0.125])
        assert np.allclose(interpolate_mean(multi_query_field, [5.5, 5.5]), [-0.125, 0.125])
        rng = np.random.default_rng(3)
        for p in rng.uniform(0, 10, size=(20, 2)):
            exact = [0.25 * (5.0 - p[1]), 0.25 * (p[0] - 5.0)]
            assert np.allclose(interpolate_mean(multi_query_field, p), exact, atol=1e-12)

    def test_out_of_extent_clamps(self, multi_query_field):
        inside = interpolate_mean(multi_query_field, [0.0, 4.0])
        outside = interpolate_mean(multi_query_field, [-3.0, 4.0])
        assert np.allclose(inside, outside)


class TestDiscretizeAlong:
    def test_single_node_trajectory_collapses_to_node_block(self, multi_query_field):
        states = np.tile(np.array([3.0, 4.0, 0, 0, 0, 0]), (7, 1))
        stats = discretize_along(multi_query_field, states)
        i = node_index(multi_query_field, 3, 4)
        node_block = multi_query_field.grid_cov[2 * i : 2 * i + 2, 2 * i : 2 * i + 2]
        for k in range(7):
            for l in range(7):
                block = stats.w_cov[2 * k : 2 * k + 2, 2 * l : 2 * l + 2]
                assert np.allclose(block, node_block, atol=1e-10)

    def test_zero_variance_field(self):
        field = build_wind_field(FieldConfig(variance=0.0))
        states = np.column_stack([np.linspace(1, 4, 5), np.linspace(1, 4, 5), *[np.zeros(5)] * 4])
        stats = discretize_along(field, states)
        assert np.allclose(stats.w_cov, 0.0, atol=1e-12)

    def test_single_step_shapes(self, multi_query_field):
        stats = discretize_along(multi_query_field, np.array([[2.0, 2.0, 0, 0, 0, 0]]))
        assert stats.w_mean.shape == (2,)
        assert stats.w_cov.shape == (2, 2)

    def test_revisit_gives_perfect_correlation(self, multi_query_field):
        states = np.array(
            [
                [2.2, 3.1, 0, 0, 0, 0],
                [4.0, 6.0, 0, 0, 0, 0],
                [2.2, 3.1, 0, 0, 0, 0],
            ]
        )
        stats = discretize_along(multi_query_field, states)
        assert np.allclose(stats.w_mean[0:2], stats.w_mean[4:6])
        diag = stats.w_cov[0:2, 0:2]
        cross = stats.w_cov[0:2, 4:6]
        assert np.allclose(diag, cross, atol=1e-10)


class TestRealizations:
    def test_zero_covariance_returns_mean(self):
        field = build_wind_field(FieldConfig(variance=0.0))
        real = sample_realization(field, seed=5)
        assert np.allclose(real.realized_samples, field.grid.mean_samples, atol=1e-12)

    def test_seed_determinism(self, multi_query_field):
        r1 = sample_realization(multi_query_field, seed=42)
        r2 = sample_realization(multi_query_field, seed=42)
        assert np.array_equal(r1.realized_samples, r2.realized_samples)

    def test_empirical_mean(self, multi_query_field):
        n_draws = 10_000
        draws = np.array(
            [
                sample_realization(multi_query_field, seed=s).realized_samples.reshape(-1)
                for s in range(n_draws)
            ]
        )
        se = np.sqrt(np.diag(multi_query_field.grid_cov) / n_draws) + 1e-12
        mean_err = np.abs(draws.mean(axis=0) - multi_query_field.grid.mean_samples.reshape(-1))
        assert np.all(mean_err <= 3.0 * se)

    def test_empirical_covariance(self, multi_query_field):
        # 20k draws through the same sampling factor as sample_realization
        n_draws = 20_000
        fac = multi_query_field.sampling_factor()
        z = np.random.default_rng(0).standard_normal((n_draws, fac.shape[1]))
        samples = z @ fac.T
        emp = samples.T @ samples / n_draws
        assert np.max(np.abs(emp - multi_query_field.grid_cov)) <= 0.02

    def test_evaluate_matches_interpolate_on_mean(self, multi_query_field):
        real = sample_realization(build_wind_field(FieldConfig(variance=0.0)), seed=1)
        for p in ([2.3, 4.4], [0.0, 0.0], [9.9, 3.2]):
            got = evaluate_realization(real, multi_query_field, p)
            assert np.allclose(got, interpolate_mean(multi_query_field, p), atol=1e-12)

    def test_evaluate_at_node_and_linearity(self, multi_query_field):
        r1 = sample_realization(multi_query_field, seed=1)
        r2 = sample_realization(multi_query_field, seed=2)
        i = node_index(multi_query_field, 6, 2)
        got = evaluate_realization(r1, multi_query_field, [6.0, 2.0])
        assert np.allclose(got, r1.realized_samples[i])
        summed = type(r1)(realized_samples=r1.realized_samples + r2.realized_samples, source_seed=0)
        for p in ([1.5, 8.2], [7.7, 7.7]):
            lhs = evaluate_realization(summed, multi_query_field, p)
            rhs = evaluate_realization(r1, multi_query_field, p) + evaluate_realization(
                r2, multi_query_field, p
            )
            assert np.allclose(lhs, rhs, atol=1e-12)
