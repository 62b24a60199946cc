"""Synthetic data generator invariants."""

import numpy as np
import pytest

from issfa.simulate import Dataset, SimConfig, simulate


def small_cfg(**overrides):
    base = dict(
        grid_dims=(8, 8), t_rows=50, holdout_rows=10, k_true=3,
        activation_prob=0.3, theta_true=(1.0, 50.0), noise_variance=0.5, seed=4,
    )
    base.update(overrides)
    return SimConfig(**base)


class TestSimulate:
    def test_truth_identity(self):
        data = simulate(small_cfg())
        # Y = X + E exactly, and X = W S
        np.testing.assert_allclose(data.x_true, data.w_true @ data.s_true, atol=1e-12)
        noise = data.y - data.x_true
        assert np.std(noise) == pytest.approx(np.sqrt(0.5), rel=0.1)

    def test_unit_normalised_features(self):
        data = simulate(small_cfg())
        np.testing.assert_allclose(np.linalg.norm(data.s_true, axis=1), 1.0, atol=1e-12)

    def test_single_feature_no_noise(self):
        cfg = small_cfg(k_true=1, activation_prob=1.0, noise_variance=0.0, holdout_rows=0)
        data = simulate(cfg)
        np.testing.assert_allclose(data.y, np.outer(data.w_true[:, 0], data.s_true[0]), atol=1e-12)

    def test_mean_active_features(self):
        cfg = small_cfg(t_rows=4000, k_true=8, activation_prob=0.15, grid_dims=(4, 4))
        data = simulate(cfg)
        active = (data.w_true != 0).sum(axis=1)
        target = 8 * 0.15
        se = active.std() / np.sqrt(len(active))
        assert abs(active.mean() - target) < 3 * se

    def test_holdout_block_shape_and_law(self):
        data = simulate(small_cfg())
        assert data.y_holdout.shape == (10, 64)
        np.testing.assert_allclose(data.x_holdout, data.w_holdout @ data.s_true, atol=1e-12)

    def test_seed_reproducibility(self):
        a = simulate(small_cfg())
        b = simulate(small_cfg())
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.y_holdout, b.y_holdout)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(activation_prob=0.0)
        with pytest.raises(ValueError):
            SimConfig(t_rows=0)
        with pytest.raises(ValueError):
            SimConfig(weight_var_range=(1.0, 0.5))
        with pytest.raises(ValueError):
            Dataset(y=np.zeros((2, 4)), grid_dims=(4,), x_true=np.zeros((3, 4)))
