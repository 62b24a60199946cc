"""Figure builders: trace, feature mosaic, reconstruction gallery, weight histogram.

All figures are deterministic given the run artifacts (fixed figsize/dpi,
Agg backend) so they can be golden-tested pixel-wise.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .artifacts import ArtifactError, RunArtifacts, feature_row_to_image, read_matrix

_DPI = 100


def _new_figure(width=8.0, height=4.5):
    return plt.figure(figsize=(width, height), dpi=_DPI)


def _save(fig, out_path: Path) -> Path:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=_DPI)
    plt.close(fig)
    return out_path


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def greedy_cosine_match(s_true: np.ndarray, s_est: np.ndarray) -> list[tuple[int, int, float]]:
    """Greedy max-|cosine| pairing; duplicated from the sampler side on purpose,
    this package only shares file formats with it."""
    cos = _unit_rows(s_true) @ _unit_rows(s_est).T
    score = np.abs(cos).copy()
    pairs = []
    for _ in range(min(score.shape)):
        i, j = np.unravel_index(np.argmax(score), score.shape)
        pairs.append((int(i), int(j), float(cos[i, j])))
        score[i, :] = -np.inf
        score[:, j] = -np.inf
    return sorted(pairs)


def plot_trace(run: RunArtifacts, out_dir: Path | None = None) -> Path:
    """Holdout reconstruction error per retained sample with a K+ overlay."""
    tr = run.trace
    fig = _new_figure()
    ax = fig.add_subplot(111)
    ax.plot(tr["iter"], tr["holdout_sse"], color="tab:blue", label="holdout SSE")
    ax.set_xlabel("sweep")
    ax.set_ylabel("holdout reconstruction SSE", color="tab:blue")
    ax.tick_params(axis="y", labelcolor="tab:blue")
    ax2 = ax.twinx()
    ax2.step(tr["iter"], tr["Kplus"], color="black", where="post", label="K+")
    ax2.set_ylabel("active features K+")
    ax2.set_ylim(bottom=0)
    ax.set_title("sampling trace")
    fig.tight_layout()
    return _save(fig, (out_dir or run.path) / "trace.png")


def _mosaic(axes_grid, images, titles):
    for ax, img, title in zip(axes_grid, images, titles):
        vmax = float(np.max(np.abs(img))) or 1.0
        ax.imshow(img, cmap="RdBu_r", vmin=-vmax, vmax=vmax, interpolation="nearest")
        ax.set_title(title, fontsize=7)
    for ax in axes_grid:
        ax.set_xticks([])
        ax.set_yticks([])


def plot_feature_mosaic(
    run: RunArtifacts, truth_dir: Path | None = None, out_dir: Path | None = None,
    max_features: int = 10,
) -> Path:
    """Grid of inferred features; with truth available, matched rows align."""
    grid = run.grid_dims()
    s_est = run.features_final()
    if s_est.shape[0] == 0:
        raise ArtifactError("run has no features to plot")
    if s_est.shape[1] != int(np.prod(grid)):
        raise ArtifactError(f"feature length {s_est.shape[1]} does not match grid {grid}")
    if truth_dir is not None:
        s_true = read_matrix(Path(truth_dir) / "S_true.ismx")
        pairs = greedy_cosine_match(s_true, s_est)[:max_features]
        n = len(pairs)
        fig = _new_figure(max(1.6 * n, 4.0), 3.6)
        axes = fig.subplots(2, n, squeeze=False)
        _mosaic(
            axes[0], [feature_row_to_image(s_true[i], grid) for i, _, _ in pairs],
            [f"true {i}" for i, _, _ in pairs],
        )
        _mosaic(
            axes[1], [feature_row_to_image(s_est[j], grid) for _, j, _ in pairs],
            [f"est {j} (cos {c:+.2f})" for _, j, c in pairs],
        )
    else:
        n = min(max_features, s_est.shape[0])
        fig = _new_figure(max(1.6 * n, 4.0), 2.0)
        axes = fig.subplots(1, n, squeeze=False)
        _mosaic(axes[0], [feature_row_to_image(s_est[j], grid) for j in range(n)],
                [f"feature {j}" for j in range(n)])
    fig.tight_layout()
    return _save(fig, (out_dir or run.path) / "feature_mosaic.png")


def plot_recon_gallery(
    run: RunArtifacts, truth_dir: Path | None = None, out_dir: Path | None = None,
    max_rows: int = 8,
) -> Path:
    """Observed / latent-truth / reconstruction strips for the first holdout rows."""
    grid = run.grid_dims()
    recon = run.holdout_recon()
    if recon is None:
        raise ArtifactError("run has no issfa_holdout_recon.ismx")
    n = min(max_rows, recon.shape[0])
    bands: list[tuple[str, np.ndarray]] = []
    if truth_dir is not None:
        td = Path(truth_dir)
        if (td / "holdout_Y.ismx").exists():
            bands.append(("observed", read_matrix(td / "holdout_Y.ismx")))
        if (td / "holdout_X.ismx").exists():
            bands.append(("latent truth", read_matrix(td / "holdout_X.ismx")))
    bands.append(("reconstruction", recon))
    fig = _new_figure(max(1.6 * n, 4.0), 1.8 * len(bands))
    axes = fig.subplots(len(bands), n, squeeze=False)
    for row, (label, mat) in enumerate(bands):
        _mosaic(
            axes[row],
            [feature_row_to_image(mat[i], grid) for i in range(n)],
            [f"{label} {i}" if row == 0 else str(i) for i in range(n)],
        )
        axes[row][0].set_ylabel(label, fontsize=8)
    fig.tight_layout()
    return _save(fig, (out_dir or run.path) / "recon_gallery.png")


def plot_weight_histogram(run: RunArtifacts, out_dir: Path | None = None) -> Path:
    """Histogram of shared-feature weights, annotated with the stored kurtosis."""
    weights = run.weights_final()
    counts = (weights != 0).sum(axis=0)
    values = weights[:, counts > 1].ravel()
    if values.size == 0 or np.all(values == 0):
        raise ArtifactError("weights are degenerate (no shared nonzero entries)")
    fig = _new_figure(6.0, 4.0)
    ax = fig.add_subplot(111)
    ax.hist(values, bins=80, color="tab:purple")
    ax.set_xlabel("weight value (A o Z, shared features)")
    ax.set_ylabel("count")
    kurt = run.metrics.get("excess_kurtosis_weights")
    if kurt is not None and np.isfinite(kurt):
        ax.set_title(f"source weights: excess kurtosis {kurt:.1f}")
    else:
        ax.set_title("source weights")
    fig.tight_layout()
    return _save(fig, (out_dir or run.path) / "weight_hist.png")


def render_all(run_dir: str | Path, truth_dir: str | Path | None = None,
               out_dir: str | Path | None = None) -> list[Path]:
    """All four figure types; reruns overwrite the same files."""
    run = RunArtifacts(run_dir)
    out = Path(out_dir) if out_dir else run.path
    truth = Path(truth_dir) if truth_dir else None
    written = [
        plot_trace(run, out),
        plot_feature_mosaic(run, truth, out),
        plot_weight_histogram(run, out),
    ]
    if run.holdout_recon() is not None:
        written.append(plot_recon_gallery(run, truth, out))
    return written
