"""Offline figures from issfa run directories (file interfaces only)."""

__version__ = "0.1.0"

from .artifacts import ArtifactError, RunArtifacts
from .figures import (
    plot_feature_mosaic,
    plot_recon_gallery,
    plot_trace,
    plot_weight_histogram,
    render_all,
)

__all__ = [
    "ArtifactError",
    "RunArtifacts",
    "plot_feature_mosaic",
    "plot_recon_gallery",
    "plot_trace",
    "plot_weight_histogram",
    "render_all",
]
