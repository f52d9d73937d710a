"""TSDS binary dataset container and CSV import.

TSDS layout (little-endian)::

    b"TSDS" | u16 version=1 | u32 V | u32 T | u32 num_classes | u64 num_samples
    | f64 sample_rate_hz | per sample: u32 label, u32 domain_id, V*T float32

``domain_id == 0xFFFFFFFF`` means no domain.  Payloads are variate-major.
"""

from __future__ import annotations

import csv
import os
import re
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..data import LabeledDataset

__all__ = [
    "DatasetFormatError",
    "BadMagicError",
    "TruncatedPayloadError",
    "LabelRangeError",
    "NO_DOMAIN",
    "write_tsds",
    "read_tsds",
    "read_csv_dataset",
    "write_csv_dataset",
    "load_dataset",
    "atomic_write_bytes",
    "atomic_write_text",
]

MAGIC = b"TSDS"
VERSION = 1
NO_DOMAIN = 0xFFFFFFFF
_HEADER = struct.Struct("<4sHIIIQd")


class DatasetFormatError(ValueError):
    pass


class BadMagicError(DatasetFormatError):
    pass


class TruncatedPayloadError(DatasetFormatError):
    pass


class LabelRangeError(DatasetFormatError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _encode(ds: LabeledDataset) -> bytes:
    n, v, t = ds.x.shape
    head = _HEADER.pack(MAGIC, VERSION, v, t, ds.num_classes, n, float(ds.sample_rate_hz))
    rec = np.dtype([("label", "<u4"), ("domain", "<u4"), ("x", "<f4", (v * t,))])
    body = np.zeros(n, dtype=rec)
    body["label"] = ds.labels
    if ds.domains is None:
        body["domain"] = NO_DOMAIN
    else:
        body["domain"] = np.where(ds.domains < 0, NO_DOMAIN, ds.domains).astype(np.uint32)
    body["x"] = ds.x.reshape(n, v * t)
    return head + body.tobytes()


def write_tsds(path, ds: LabeledDataset) -> None:
    atomic_write_bytes(path, _encode(ds))


def read_tsds(path) -> LabeledDataset:
    buf = Path(path).read_bytes()
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic in {path}: expected TSDS")
    if len(buf) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: header truncated")
    _, version, v, t, k, n, rate = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported TSDS version {version}")
    rec = np.dtype([("label", "<u4"), ("domain", "<u4"), ("x", "<f4", (v * t,))])
    need = _HEADER.size + n * rec.itemsize
    if len(buf) < need:
        raise TruncatedPayloadError(f"{path}: payload truncated ({len(buf)} of {need} bytes)")
    if len(buf) > need:
        raise DatasetFormatError(f"{path}: {len(buf) - need} trailing bytes")
    body = np.frombuffer(buf, dtype=rec, count=n, offset=_HEADER.size)
    labels = body["label"].astype(np.int64)
    if n and labels.max() >= k:
        raise LabelRangeError(f"{path}: label {labels.max()} out of range for {k} classes")
    dom = body["domain"].astype(np.int64)
    domains = None if np.all(dom == NO_DOMAIN) else np.where(dom == NO_DOMAIN, -1, dom)
    x = body["x"].reshape(n, v, t).copy()
    return LabeledDataset(x, labels, k, domains, rate, Path(path).stem)


_COL = re.compile(r"^v(\d+)_t(\d+)$")


def read_csv_dataset(path, num_classes: int | None = None, sample_rate_hz: float = 1.0) -> LabeledDataset:
    """Import a CSV with columns ``domain,label,v0_t0,...,v{V-1}_t{T-1}``.

    Values are stored as float32, matching TSDS.  An empty or negative domain
    means no domain id.
    """
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetFormatError(f"{path}: empty CSV")
    header, rows = rows[0], rows[1:]
    if header[:2] != ["domain", "label"]:
        raise DatasetFormatError(f"{path}: first columns must be domain,label")
    coords = []
    for name in header[2:]:
        m = _COL.match(name)
        if not m:
            raise DatasetFormatError(f"{path}: bad column name {name!r}")
        coords.append((int(m.group(1)), int(m.group(2))))
    v = max(c[0] for c in coords) + 1
    t = max(c[1] for c in coords) + 1
    if sorted(coords) != [(i, j) for i in range(v) for j in range(t)]:
        raise DatasetFormatError(f"{path}: value columns do not form a full V x T grid")
    x = np.zeros((len(rows), v, t), dtype=np.float32)
    labels = np.zeros(len(rows), dtype=np.int64)
    domains = np.full(len(rows), -1, dtype=np.int64)
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise TruncatedPayloadError(f"{path}: row {r + 1} has {len(row)} fields, expected {len(header)}")
        domains[r] = int(row[0]) if row[0].strip() else -1
        labels[r] = int(row[1])
        vals = np.asarray(row[2:], dtype=np.float64).astype(np.float32)
        for (i, j), val in zip(coords, vals):
            x[r, i, j] = val
    k = num_classes if num_classes is not None else (int(labels.max()) + 1 if len(labels) else 1)
    if len(labels) and (labels.min() < 0 or labels.max() >= k):
        raise LabelRangeError(f"{path}: labels out of range for {k} classes")
    dom = None if np.all(domains < 0) else domains
    return LabeledDataset(x, labels, k, dom, sample_rate_hz, Path(path).stem)


def write_csv_dataset(path, ds: LabeledDataset) -> None:
    n, v, t = ds.x.shape
    lines = []
    header = ["domain", "label"] + [f"v{i}_t{j}" for i in range(v) for j in range(t)]
    lines.append(",".join(header))
    for s in range(n):
        dom = "" if ds.domains is None or ds.domains[s] < 0 else str(int(ds.domains[s]))
        vals = ",".join(repr(float(val)) for val in ds.x[s].astype(np.float32).reshape(-1))
        lines.append(f"{dom},{int(ds.labels[s])},{vals}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_dataset(path, **csv_kw) -> LabeledDataset:
    """Read TSDS or (by ``.csv`` suffix) CSV."""
    if str(path).lower().endswith(".csv"):
        return read_csv_dataset(path, **csv_kw)
    return read_tsds(path)
