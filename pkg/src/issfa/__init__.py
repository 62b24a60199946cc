"""Infinite sparse structured factor analysis.

Matrix factorisation Y = (A o Z) S + E with an Indian Buffet Process prior on
the activations Z and latent features S carrying nondiagonal covariance
through spectrally parameterised precision matrices.
"""

__version__ = "0.1.0"

from .ibp import BinaryFeatureMatrix, harmonic, log_pmf, sample_ibp, shared_prior_odds
from .model import Hyperparams, ModelState, TraceRecord
from .sampler import IssfaGibbs
from .spectral import (
    AffineCurve,
    IsotropicCurve,
    OrthoTransform,
    ScaleCurve,
    SpectralCurve,
    SpectralPrecision,
    base_quadratic_form,
    curve_param_mix,
    curve_power_sum,
    dct_transform,
    haar_transform,
    kronecker_sum_eigenvalues,
    laplacian_eigenvalues,
)

__all__ = [
    "AffineCurve",
    "BinaryFeatureMatrix",
    "Hyperparams",
    "IsotropicCurve",
    "IssfaGibbs",
    "ModelState",
    "OrthoTransform",
    "ScaleCurve",
    "SpectralCurve",
    "SpectralPrecision",
    "TraceRecord",
    "base_quadratic_form",
    "curve_param_mix",
    "curve_power_sum",
    "dct_transform",
    "haar_transform",
    "harmonic",
    "kronecker_sum_eigenvalues",
    "laplacian_eigenvalues",
    "log_pmf",
    "sample_ibp",
    "shared_prior_odds",
]
