"""Scoring for the benchmark: rank-K SVD baseline, feature-recovery error,
excess kurtosis, cosine matching, posterior-mean reconstruction."""

from __future__ import annotations

from typing import Iterable, NamedTuple

import numpy as np


class SvdBaseline(NamedTuple):
    weights: np.ndarray         # (T, K)
    features: np.ndarray        # (K, V), orthonormal rows
    reconstruction: np.ndarray  # (T, V)


def svd_baseline(y: np.ndarray, k: int) -> SvdBaseline:
    """Rank-k truncated SVD of the raw (uncentred) data matrix."""
    t_rows, v = y.shape
    if not 1 <= k <= min(t_rows, v):
        raise ValueError(f"rank {k} out of range for a {t_rows} x {v} matrix")
    u, sv, vt = np.linalg.svd(y, full_matrices=False)
    w = u[:, :k] * sv[:k]
    feats = vt[:k]
    return SvdBaseline(w, feats, w @ feats)


def svd_project(y_new: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Reconstruct new rows with frozen orthonormal features (least squares)."""
    w = y_new @ features.T
    return w @ features


def posterior_mean_reconstruction(reconstructions: Iterable[np.ndarray]) -> np.ndarray:
    """Elementwise mean of per-sample reconstructions (A o Z) S."""
    total, count = None, 0
    for recon in reconstructions:
        total = recon.astype(float).copy() if total is None else total + recon
        count += 1
    if count == 0:
        raise ValueError("need at least one posterior sample")
    return total / count


def _unit_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def metric_er(a: np.ndarray, b: np.ndarray) -> float:
    """Feature recovery error: sum_k min_j ||a_k - b_j||^2 after unit-normalising
    rows and flipping signs to best-match (features are defined up to scale/sign)."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if a.size == 0 or b.size == 0:
        raise ValueError("both feature sets must be nonempty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature length mismatch: {a.shape[1]} vs {b.shape[1]}")
    ahat, bhat = _unit_rows(a), _unit_rows(b)
    cos = ahat @ bhat.T
    # with unit rows and optimal sign, ||a - sign b||^2 = 2 - 2|cos|
    d = 2.0 - 2.0 * np.abs(cos)
    return float(np.sum(d.min(axis=1)))


def metric_excess_kurtosis(values: np.ndarray) -> float:
    """m4 / m2^2 - 3 with biased sample moments."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 4:
        raise ValueError(f"need at least 4 values, got {x.size}")
    centred = x - x.mean()
    m2 = float(np.mean(centred**2))
    if m2 <= 0:
        raise ValueError("degenerate sample: zero variance")
    m4 = float(np.mean(centred**4))
    return m4 / m2**2 - 3.0


class FeatureMatch(NamedTuple):
    true_index: int
    est_index: int
    cosine: float  # signed; matching used |cosine|


def match_features(s_true: np.ndarray, s_est: np.ndarray) -> list[FeatureMatch]:
    """Greedy max-|cosine| assignment without replacement between feature sets."""
    ahat, bhat = _unit_rows(np.atleast_2d(s_true)), _unit_rows(np.atleast_2d(s_est))
    cos = ahat @ bhat.T
    score = np.abs(cos).copy()
    pairs = []
    for _ in range(min(score.shape)):
        i, j = np.unravel_index(np.argmax(score), score.shape)
        pairs.append(FeatureMatch(int(i), int(j), float(cos[i, j])))
        score[i, :] = -np.inf
        score[:, j] = -np.inf
    pairs.sort(key=lambda p: p.true_index)
    return pairs
