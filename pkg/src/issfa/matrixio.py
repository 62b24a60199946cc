"""Binary matrix files ("ISMX1") with JSON sidecars, plus 8-bit PGM dumps.

Matrix layout (little-endian): magic b"ISMX1", u32 rank, rank x u64 dims,
then row-major float64 data. A sidecar <name>.json records shape, dtype and
free-form provenance (seed, grid dims, producing stage).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ISMX1"


class MatrixIOError(ValueError):
    pass


def write_matrix(path: str | Path, arr: np.ndarray, provenance: dict | None = None) -> None:
    path = Path(path)
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    head = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    path.write_bytes(head + arr.astype("<f8", copy=False).tobytes())
    sidecar = {"shape": list(arr.shape), "dtype": "float64"}
    if provenance:
        sidecar["provenance"] = provenance
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def read_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    buf = path.read_bytes()
    if buf[:5] != MAGIC:
        raise MatrixIOError(f"{path}: bad magic {buf[:5]!r}; not an ISMX1 matrix file")
    (rank,) = struct.unpack_from("<I", buf, 5)
    if rank > 8:
        raise MatrixIOError(f"{path}: implausible rank {rank}")
    dims = struct.unpack_from(f"<{rank}Q", buf, 9)
    off = 9 + 8 * rank
    n = int(np.prod(dims)) if rank else 1
    expected = off + 8 * n
    if len(buf) != expected:
        raise MatrixIOError(f"{path}: expected {expected} bytes, found {len(buf)}")
    return np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(dims).copy()


def read_sidecar(path: str | Path) -> dict:
    side = Path(path).with_suffix(Path(path).suffix + ".json")
    if not side.exists():
        raise MatrixIOError(f"missing sidecar {side}")
    return json.loads(side.read_text())


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Min-max scaled 8-bit binary PGM (P5) of a 2-D array."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise MatrixIOError(f"PGM needs a 2-D array, got shape {image.shape}")
    lo, hi = float(image.min()), float(image.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pixels = np.clip((image - lo) * scale, 0, 255).astype(np.uint8)
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + pixels.tobytes())


def feature_row_to_image(row: np.ndarray, grid_dims: tuple[int, ...]) -> np.ndarray:
    """Reshape a feature row for viewing: 2-D grids directly, 3-D as a slice strip."""
    dims = tuple(grid_dims)
    if int(np.prod(dims)) != row.size:
        raise MatrixIOError(f"grid {dims} does not match row length {row.size}")
    if len(dims) == 1:
        return row.reshape(1, -1)
    if len(dims) == 2:
        return row.reshape(dims)
    vol = row.reshape(dims)
    return np.hstack([vol[i] for i in range(dims[0])])
