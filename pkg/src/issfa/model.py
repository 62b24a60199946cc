"""Latent state and hyperparameter containers for the structured sparse factor model.

The generative model for a T x V data matrix Y is

    Y = (A o Z) S + E,    Z ~ IBP(alpha, beta),
    A_{t,k} ~ N(tau_k, 1/nu_k),   S_{k,:} ~ N(0, Q(theta)^{-1}),
    E_{t,:} ~ N(0, sigma2 I),

with conjugate/Metropolis hyperpriors on sigma2, alpha, beta, nu_k, tau_k and
independent normal priors on xi = ln theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Hyperparams:
    """Fixed prior parameters. Shapes/rates/precisions must all be positive.

    a, b             inverse-gamma shape/scale for the noise variance sigma2
    e_alpha, f_alpha gamma shape/rate for the IBP strength alpha
    e_beta, f_beta   gamma shape/rate for the IBP repulsion beta
    s_beta           std dev of the random-walk proposal on ln beta
    e_nu, f_nu       gamma shape/rate for the per-column weight precisions nu_k
    m_tau, r_tau     normal mean/precision for the per-column weight means tau_k
    m_xi, r_xi       normal means/precisions for xi = ln theta (length P)
    max_new_features cap on proposed unique features per observation per sweep
    theta_mh         apply the Metropolis correction to the Laplace theta draw
    """

    a: float = 2.0
    b: float = 1.0
    e_alpha: float = 1.0
    f_alpha: float = 1.0
    e_beta: float = 1.0
    f_beta: float = 1.0
    s_beta: float = 0.3
    e_nu: float = 3.0
    f_nu: float = 2.0
    m_tau: float = 1.0
    r_tau: float = 1.0
    m_xi: tuple[float, ...] = (0.0, 0.0)
    r_xi: tuple[float, ...] = (0.1, 0.1)
    max_new_features: int = 6
    theta_mh: bool = False

    def __post_init__(self):
        for name in ("a", "b", "e_alpha", "f_alpha", "e_beta", "f_beta", "s_beta",
                     "e_nu", "f_nu", "r_tau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"hyperparameter {name} must be positive")
        self.m_xi = tuple(float(x) for x in np.atleast_1d(self.m_xi))
        self.r_xi = tuple(float(x) for x in np.atleast_1d(self.r_xi))
        if len(self.m_xi) != len(self.r_xi):
            raise ValueError("m_xi and r_xi must have the same length")
        if any(r <= 0 for r in self.r_xi):
            raise ValueError("r_xi entries must be positive")
        if self.max_new_features < 1:
            raise ValueError("max_new_features must be >= 1")


@dataclass
class ModelState:
    """All latent variables: K+ is implicit as the shared column count of Z, A, S.

    A is stored dense with A[t, k] = 0 wherever Z[t, k] = 0; weights for
    inactive entries never enter a likelihood and are not resampled.
    """

    Z: np.ndarray      # (T, K) uint8
    A: np.ndarray      # (T, K) float
    S: np.ndarray      # (K, V) float
    sigma2: float
    alpha: float
    beta: float
    nu: np.ndarray     # (K,) weight precisions
    tau: np.ndarray    # (K,) weight means
    xi: np.ndarray     # (P,) log precision parameters

    def __post_init__(self):
        self.Z = np.ascontiguousarray(self.Z, dtype=np.uint8)
        self.A = np.ascontiguousarray(self.A, dtype=np.float64)
        self.S = np.ascontiguousarray(self.S, dtype=np.float64)
        self.nu = np.ascontiguousarray(self.nu, dtype=np.float64)
        self.tau = np.ascontiguousarray(self.tau, dtype=np.float64)
        self.xi = np.ascontiguousarray(self.xi, dtype=np.float64)
        self.validate()

    @property
    def n_rows(self) -> int:
        return self.Z.shape[0]

    @property
    def kplus(self) -> int:
        return self.Z.shape[1]

    @property
    def n_dims(self) -> int:
        return self.S.shape[1]

    @property
    def theta(self) -> np.ndarray:
        return np.exp(self.xi)

    def weights(self) -> np.ndarray:
        """W = A o Z; equals A because inactive entries are kept at zero."""
        return self.A * self.Z

    def reconstruction(self) -> np.ndarray:
        """(A o Z) S, the model's noiseless view of the data."""
        if self.kplus == 0:
            return np.zeros((self.n_rows, self.n_dims))
        return self.weights() @ self.S

    def validate(self) -> None:
        t, k = self.Z.shape
        if self.A.shape != (t, k):
            raise ValueError(f"A shape {self.A.shape} != Z shape {(t, k)}")
        if self.S.shape[0] != k:
            raise ValueError(f"S has {self.S.shape[0]} rows, expected {k}")
        if self.nu.shape != (k,) or self.tau.shape != (k,):
            raise ValueError("nu and tau must have one entry per column")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if np.any(~np.isfinite(self.xi)):
            raise ValueError("xi must be finite")
        if k and np.any(self.Z.sum(axis=0) == 0):
            raise ValueError("zero columns must be pruned")

    def copy(self) -> "ModelState":
        return ModelState(
            Z=self.Z.copy(), A=self.A.copy(), S=self.S.copy(),
            sigma2=self.sigma2, alpha=self.alpha, beta=self.beta,
            nu=self.nu.copy(), tau=self.tau.copy(), xi=self.xi.copy(),
        )


@dataclass
class TraceRecord:
    """Per-(thinned)-sweep scalars for diagnostics and the trace CSV."""

    iteration: int
    kplus: int
    sigma2: float
    alpha: float
    beta: float
    theta: tuple[float, ...]
    train_sse: float
    holdout_sse: float
    wall_ms: float

    CSV_HEADER = "iter,Kplus,sigma2,alpha,beta,theta1,theta2,train_sse,holdout_sse,wall_ms"

    def csv_row(self) -> str:
        th = tuple(self.theta) + (float("nan"),) * (2 - len(self.theta))
        vals = [self.sigma2, self.alpha, self.beta, th[0], th[1],
                self.train_sse, self.holdout_sse, self.wall_ms]
        return ",".join([str(self.iteration), str(self.kplus)] + [f"{v:.12g}" for v in vals])
