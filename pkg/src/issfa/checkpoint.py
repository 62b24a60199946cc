"""Binary checkpoint container for the full model state.

Layout (all little-endian):

    bytes 0-5    magic b"ISSFA1"
    u16          format version (currently 1)
    u64 x 4      T, K, V, P
    f64 x 3      sigma2, alpha, beta
    f64 x P      xi
    u8  x T*K    Z, row-major
    f64 x T*K    A, row-major
    f64 x K*V    S, row-major
    f64 x K      nu
    f64 x K      tau

Round trips are bit exact: floats are written raw, never formatted.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import ModelState

MAGIC = b"ISSFA1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def state_to_bytes(state: ModelState) -> bytes:
    t, k = state.Z.shape
    v = state.S.shape[1]
    p = state.xi.size
    head = MAGIC + struct.pack("<H", VERSION)
    head += struct.pack("<4Q", t, k, v, p)
    head += struct.pack("<3d", state.sigma2, state.alpha, state.beta)
    body = b"".join(
        np.ascontiguousarray(arr).astype(dt, copy=False).tobytes()
        for arr, dt in (
            (state.xi, "<f8"),
            (state.Z, "u1"),
            (state.A, "<f8"),
            (state.S, "<f8"),
            (state.nu, "<f8"),
            (state.tau, "<f8"),
        )
    )
    return head + body


def state_from_bytes(buf: bytes) -> ModelState:
    if buf[:6] != MAGIC:
        raise CheckpointError(f"bad magic {buf[:6]!r}; not an ISSFA1 checkpoint")
    (version,) = struct.unpack_from("<H", buf, 6)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    t, k, v, p = struct.unpack_from("<4Q", buf, 8)
    sigma2, alpha, beta = struct.unpack_from("<3d", buf, 40)
    off = 64

    def take(count: int, dt: str, shape) -> np.ndarray:
        nonlocal off
        arr = np.frombuffer(buf, dtype=dt, count=count, offset=off)
        off += arr.nbytes
        return arr.reshape(shape).copy()

    xi = take(p, "<f8", (p,))
    z = take(t * k, "u1", (t, k))
    a = take(t * k, "<f8", (t, k))
    s = take(k * v, "<f8", (k, v))
    nu = take(k, "<f8", (k,))
    tau = take(k, "<f8", (k,))
    if off != len(buf):
        raise CheckpointError(f"trailing bytes: expected {off}, file has {len(buf)}")
    return ModelState(Z=z, A=a, S=s, sigma2=sigma2, alpha=alpha, beta=beta,
                      nu=nu, tau=tau, xi=xi)


def save_state(path: str | Path, state: ModelState) -> None:
    Path(path).write_bytes(state_to_bytes(state))


def load_state(path: str | Path) -> ModelState:
    return state_from_bytes(Path(path).read_bytes())
