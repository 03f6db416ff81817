"""Binary snapshot files.

Layout, all little-endian:

    b"PKIN"  u32 version  u32 n_x  u32 n_y  u32 n_r  u32 n_a  u64 step  f64 t
    u32 n_acc  f64[n_acc] audit accumulators
    f64 u[n_x*n_y]  f64 v[n_x*n_y]  f64 p[n_x*n_y]  f64 theta[n_x*n_y]
    f64 phi[n_x*n_y*n_r*n_a]
    u32 n_text  utf-8 scenario text

Arrays are row-major with the x index slowest, so phi is stored as
[x cells][n_r][n_a].
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"PKIN"
VERSION = 1
_HEAD = struct.Struct("<4sIIIIIQd")
_U32 = struct.Struct("<I")


class CorruptCheckpoint(ValueError):
    pass


@dataclass
class Snapshot:
    step: int
    t: float
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    accumulators: np.ndarray
    config_text: str


def encode(snap: Snapshot) -> bytes:
    n_x, n_y = snap.theta.shape
    n_r, n_a = snap.phi.shape[-2:]
    if snap.phi.shape != (n_x, n_y, n_r, n_a):
        raise ValueError("phi shape does not match theta")
    acc = np.ascontiguousarray(snap.accumulators, dtype="<f8")
    parts = [
        _HEAD.pack(MAGIC, VERSION, n_x, n_y, n_r, n_a, int(snap.step), float(snap.t)),
        _U32.pack(acc.size),
        acc.tobytes(),
    ]
    for arr in (snap.u, snap.v, snap.p, snap.theta, snap.phi):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    text = snap.config_text.encode("utf-8")
    parts += [_U32.pack(len(text)), text]
    return b"".join(parts)


def decode(data: bytes) -> Snapshot:
    if len(data) < _HEAD.size + _U32.size:
        raise CorruptCheckpoint("file is shorter than the header")
    magic, version, n_x, n_y, n_r, n_a, step, t = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorruptCheckpoint(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptCheckpoint(f"unsupported format version {version}")
    off = _HEAD.size
    (n_acc,) = _U32.unpack_from(data, off)
    off += _U32.size
    nc = n_x * n_y
    need = off + 8 * (n_acc + 4 * nc + nc * n_r * n_a) + _U32.size
    if len(data) < need:
        raise CorruptCheckpoint("file is truncated")

    def take(count, shape):
        nonlocal off
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shape)
        off += 8 * count
        return arr

    acc = take(n_acc, (n_acc,))
    u, v, p, theta = (take(nc, (n_x, n_y)) for _ in range(4))
    phi = take(nc * n_r * n_a, (n_x, n_y, n_r, n_a))
    (n_text,) = _U32.unpack_from(data, off)
    off += _U32.size
    if len(data) != off + n_text:
        raise CorruptCheckpoint("trailing text block has the wrong length")
    try:
        text = data[off:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptCheckpoint("scenario text is not valid utf-8") from exc
    return Snapshot(int(step), float(t), u, v, p, theta, phi, acc, text)


def write_checkpoint(path, snap: Snapshot):
    """Write atomically: a crash mid-write never leaves a half file at ``path``."""
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(encode(snap))
    os.replace(tmp, path)


def read_checkpoint(path) -> Snapshot:
    with open(path, "rb") as fh:
        return decode(fh.read())
