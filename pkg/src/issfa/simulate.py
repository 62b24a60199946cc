"""Synthetic data generation mirroring the simulation study, at desk scale.

Observations are sparse linear combinations of K_true unit-normalised smooth
features drawn from the structured prior, with per-feature weight means and
variances, plus IID Gaussian noise. Ground truth (weights, features, latent
X) and a holdout block drawn from the same law are retained for scoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import AffineCurve, SpectralPrecision, dct_transform


@dataclass
class SimConfig:
    grid_dims: tuple[int, ...] = (32, 32)
    t_rows: int = 400
    holdout_rows: int = 100
    k_true: int = 8
    activation_prob: float = 0.15
    theta_true: tuple[float, float] = (1.0, 100.0)
    weight_mean: float = 1.0
    weight_var_range: tuple[float, float] = (0.5, 1.0)
    noise_variance: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.grid_dims = tuple(int(d) for d in self.grid_dims)
        if not 0 < self.activation_prob <= 1:
            raise ValueError(f"activation_prob must be in (0, 1], got {self.activation_prob}")
        for name in ("t_rows", "k_true"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.holdout_rows < 0:
            raise ValueError("holdout_rows must be >= 0")
        if min(self.grid_dims) < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        lo, hi = self.weight_var_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad weight variance range {self.weight_var_range}")

    @property
    def v_dims(self) -> int:
        return int(np.prod(self.grid_dims))


@dataclass
class Dataset:
    y: np.ndarray                       # (T, V) observations
    grid_dims: tuple[int, ...]
    s_true: np.ndarray | None = None    # (K, V) unit-normalised features
    w_true: np.ndarray | None = None    # (T, K) A o Z
    x_true: np.ndarray | None = None    # (T, V) latent (A o Z) S
    y_holdout: np.ndarray | None = None
    w_holdout: np.ndarray | None = None
    x_holdout: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.x_true is not None:
            # Y = X + E exactly; nothing to check beyond shape here
            if self.x_true.shape != self.y.shape:
                raise ValueError("latent truth shape mismatch")


def simulate(cfg: SimConfig, rng: np.random.Generator | None = None) -> Dataset:
    """Draw a Dataset per the config; a single rng drives every stage."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    transform = dct_transform(*cfg.grid_dims)
    prec = SpectralPrecision(
        transform, AffineCurve(transform.base_eigenvalues()), np.asarray(cfg.theta_true)
    )
    s = prec.sample(rng, size=cfg.k_true)
    s /= np.linalg.norm(s, axis=1, keepdims=True)

    var_lo, var_hi = cfg.weight_var_range
    weight_sd = np.sqrt(rng.uniform(var_lo, var_hi, size=cfg.k_true))

    def draw_block(n_rows: int):
        z = (rng.random((n_rows, cfg.k_true)) < cfg.activation_prob).astype(np.uint8)
        a = cfg.weight_mean + rng.standard_normal((n_rows, cfg.k_true)) * weight_sd
        w = a * z
        x = w @ s
        y = x + np.sqrt(cfg.noise_variance) * rng.standard_normal((n_rows, cfg.v_dims))
        return y, w, x

    y, w, x = draw_block(cfg.t_rows)
    data = Dataset(y=y, grid_dims=cfg.grid_dims, s_true=s, w_true=w, x_true=x, seed=cfg.seed)
    if cfg.holdout_rows:
        data.y_holdout, data.w_holdout, data.x_holdout = draw_block(cfg.holdout_rows)
    return data
