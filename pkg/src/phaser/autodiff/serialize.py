"""PHSW flat binary weight files.

Layout (little-endian): magic ``b"PHSW"``, u16 version, u32 tensor count, then
per tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims, float32
payload in row-major order.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "VERSION", "write_tensors", "read_tensors", "save_module", "load_module"]

MAGIC = b"PHSW"
VERSION = 1


def _encode(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Write atomically (temp file in the same directory, then rename)."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    with os.fdopen(fd, "wb") as fh:
        fh.write(_encode(tensors))
    os.replace(tmp, path)


def read_tensors(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError("bad magic: not a PHSW file")
    version, count = struct.unpack_from("<HI", buf, 4)
    if version != VERSION:
        raise ValueError(f"unsupported PHSW version {version}")
    off = 10
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off : off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", buf, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", buf, off)
            off += 4 * rank
            n = int(np.prod(dims, dtype=np.int64))
            if off + 4 * n > len(buf):
                raise ValueError(f"truncated payload for tensor {name!r}")
            out[name] = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(dims).copy()
            off += 4 * n
    except struct.error as exc:
        raise ValueError(f"truncated PHSW file: {exc}") from exc
    return out


def save_module(module, path) -> None:
    tensors = {name: p.data for name, p in module.named_parameters().items()}
    for name, b in module.named_buffers().items():
        tensors[f"buffer:{name}"] = b
    write_tensors(path, tensors)


def load_module(module, path) -> None:
    """Load parameters and buffers in place; names must match exactly."""
    tensors = read_tensors(path)
    params = module.named_parameters()
    expected = set(params) | {f"buffer:{b}" for b in module.named_buffers()}
    if set(tensors) != expected:
        missing, extra = expected - set(tensors), set(tensors) - expected
        raise ValueError(f"PHSW tensor names do not match model (missing={sorted(missing)}, extra={sorted(extra)})")
    for name, arr in tensors.items():
        if name.startswith("buffer:"):
            module.set_buffer(name[len("buffer:") :], arr)
        else:
            p = params[name]
            if p.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.shape}")
            p.data = arr.astype(p.dtype)
