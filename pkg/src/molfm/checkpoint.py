"""Binary checkpoint format: magic, version, JSON header, named f32 tensor table."""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"MFLT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict, meta: dict):
    """Write atomically (temp file + rename). Tensors are stored as little-endian f32."""
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    dirname = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=dirname, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", VERSION))
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            fh.write(struct.pack("<I", len(tensors)))
            for name in sorted(tensors):
                # note: ascontiguousarray would promote 0-d tensors to 1-d
                arr = np.asarray(tensors[name], dtype="<f4", order="C")
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<I", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<I", arr.ndim))
                for dim in arr.shape:
                    fh.write(struct.pack("<Q", dim))
                fh.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what} "
                              f"(wanted {n} bytes at offset {fh.tell() - len(data)})")
    return data


def load_checkpoint(path):
    """Returns (tensors dict of float32 arrays, meta dict)."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r} at offset 0 (expected {MAGIC!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
        (hlen,) = struct.unpack("<Q", _read_exact(fh, 8, "header length"))
        meta = json.loads(_read_exact(fh, hlen, "header").decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, nlen, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            shape = tuple(struct.unpack("<Q", _read_exact(fh, 8, "dim"))[0] for _ in range(rank))
            n_elems = int(np.prod(shape)) if shape else 1
            payload = _read_exact(fh, 4 * n_elems, f"tensor {name!r} payload")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return tensors, meta


def load_into_model(path, model):
    """Load a checkpoint into a model; name-table mismatches are listed fully."""
    tensors, meta = load_checkpoint(path)
    try:
        model.load_state_dict(tensors)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc
    return meta
