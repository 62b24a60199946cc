"""Read-only access to issfa run directories.

Only the documented on-disk interfaces are consumed: the trace CSV, the
metrics JSON, and ISMX1 matrix files with their JSON sidecars. Nothing here
imports the sampler package.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

TRACE_HEADER = "iter,Kplus,sigma2,alpha,beta,theta1,theta2,train_sse,holdout_sse,wall_ms"
_MATRIX_MAGIC = b"ISMX1"


class ArtifactError(ValueError):
    pass


def read_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    buf = path.read_bytes()
    if buf[:5] != _MATRIX_MAGIC:
        raise ArtifactError(f"{path}: not an ISMX1 matrix file")
    (rank,) = struct.unpack_from("<I", buf, 5)
    dims = struct.unpack_from(f"<{rank}Q", buf, 9)
    off = 9 + 8 * rank
    n = int(np.prod(dims)) if rank else 1
    if len(buf) != off + 8 * n:
        raise ArtifactError(f"{path}: truncated matrix file")
    return np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(dims).copy()


def read_sidecar(path: str | Path) -> dict:
    side = Path(path).with_suffix(Path(path).suffix + ".json")
    if not side.exists():
        raise ArtifactError(f"missing sidecar {side}")
    return json.loads(side.read_text())


def read_trace(path: str | Path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != TRACE_HEADER:
        raise ArtifactError(f"{path}: unexpected trace header")
    cols = TRACE_HEADER.split(",")
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(cols):
            raise ArtifactError(f"{path}: malformed CSV row at line {ln}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ArtifactError(f"{path}: malformed CSV row at line {ln}") from None
    if not rows:
        raise ArtifactError(f"{path}: trace has no data rows")
    arr = np.asarray(rows)
    return {name: arr[:, i] for i, name in enumerate(cols)}


class RunArtifacts:
    """A validated view of one run directory."""

    def __init__(self, run_dir: str | Path):
        self.path = Path(run_dir)
        trace_path = self.path / "trace.csv"
        metrics_path = self.path / "metrics.json"
        if not trace_path.exists():
            raise ArtifactError(f"{self.path} is missing trace.csv")
        if not metrics_path.exists():
            raise ArtifactError(f"{self.path} is missing metrics.json")
        self.trace = read_trace(trace_path)
        self.metrics = json.loads(metrics_path.read_text())

    def grid_dims(self) -> tuple[int, ...]:
        grid = self.metrics.get("config", {}).get("simulation", {}).get("grid")
        if grid:
            return tuple(int(d) for d in str(grid).split("x"))
        side = read_sidecar(self.path / "features_final.ismx")
        return tuple(side.get("provenance", {}).get("grid", ()))

    def features_final(self) -> np.ndarray:
        return read_matrix(self.path / "features_final.ismx")

    def weights_final(self) -> np.ndarray:
        return read_matrix(self.path / "weights_final.ismx")

    def holdout_recon(self) -> np.ndarray | None:
        path = self.path / "issfa_holdout_recon.ismx"
        return read_matrix(path) if path.exists() else None


def feature_row_to_image(row: np.ndarray, grid_dims: tuple[int, ...]) -> np.ndarray:
    """2-D grids directly; 3-D volumes as a horizontal strip of axial slices."""
    dims = tuple(grid_dims)
    if int(np.prod(dims)) != row.size:
        raise ArtifactError(f"grid {dims} does not match row length {row.size}")
    if len(dims) == 1:
        return row.reshape(1, -1)
    if len(dims) == 2:
        return row.reshape(dims)
    vol = row.reshape(dims)
    return np.hstack([vol[i] for i in range(dims[0])])
