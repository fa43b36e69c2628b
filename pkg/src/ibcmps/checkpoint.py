"""Self-describing binary checkpoints.

Layout (all integers little-endian uint64 unless noted):

    magic   7 bytes  b"IBCMPS1"
    version uint32
    meta_len, meta JSON bytes
    n_tensors
    per tensor: name_len, name, n_labels, (label_len, label)*,
                dims (n_labels uint64s), n_values, values as (re, im)
                little-endian float64 pairs

Round-trips are bit-exact. Files are written to a temp path and renamed.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import ConfigError
from .tensor import DenseTensor

MAGIC = b"IBCMPS1"
VERSION = 1


def _w_u64(f, v):
    f.write(struct.pack("<Q", v))


def _w_str(f, s):
    b = s.encode("utf-8")
    _w_u64(f, len(b))
    f.write(b)


def _r_u64(f):
    return struct.unpack("<Q", f.read(8))[0]


def _r_str(f):
    n = _r_u64(f)
    return f.read(n).decode("utf-8")


def write_checkpoint(path: str, tensors: dict, metadata: dict):
    """Atomically write named tensors plus a JSON metadata map."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", VERSION))
            meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
            _w_u64(f, len(meta))
            f.write(meta)
            _w_u64(f, len(tensors))
            for name in sorted(tensors):
                t = tensors[name]
                if not isinstance(t, DenseTensor):
                    arr = np.asarray(t, dtype=np.complex128)
                    t = DenseTensor(tuple(f"i{k}" for k in range(arr.ndim)), arr)
                _w_str(f, name)
                _w_u64(f, len(t.labels))
                for lab in t.labels:
                    _w_str(f, lab)
                for dim in t.dims:
                    _w_u64(f, dim)
                data = np.ascontiguousarray(t.data, dtype=np.complex128)
                _w_u64(f, data.size)
                pairs = np.empty((data.size, 2), dtype="<f8")
                flat = data.ravel()
                pairs[:, 0] = flat.real
                pairs[:, 1] = flat.imag
                f.write(pairs.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_checkpoint(path: str):
    """Read a checkpoint; returns (tensors, metadata)."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        version = struct.unpack("<I", f.read(4))[0]
        if version != VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {version}")
        meta = json.loads(f.read(_r_u64(f)).decode("utf-8"))
        tensors = {}
        for _ in range(_r_u64(f)):
            name = _r_str(f)
            n_labels = _r_u64(f)
            labels = tuple(_r_str(f) for _ in range(n_labels))
            dims = tuple(_r_u64(f) for _ in range(n_labels))
            n_values = _r_u64(f)
            raw = np.frombuffer(f.read(16 * n_values), dtype="<f8").reshape(-1, 2)
            data = (raw[:, 0] + 1j * raw[:, 1]).reshape(dims)
            tensors[name] = DenseTensor(labels, data)
    return tensors, meta
