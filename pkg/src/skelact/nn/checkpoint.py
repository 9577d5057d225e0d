"""Binary checkpoint format.

Layout::

    SKELACT-CKPT <version>\\n
    <descriptor as compact JSON, sorted keys>\\n
    <number of tensors>\\n
    <name> <ndim> <dim_0> ... <dim_n>\\n       (one line per tensor)
    <raw little-endian float64 data, tensors concatenated in order>

Values are stored as float64 regardless of the in-memory dtype, so float32
and float64 tensors both round-trip bit-exactly.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

MAGIC = "SKELACT-CKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(tensors, descriptor=None):
    """Serialize an ordered list of ``(name, array)`` pairs to bytes."""
    descriptor = {} if descriptor is None else descriptor
    header = [f"{MAGIC} {FORMAT_VERSION}", json.dumps(descriptor, sort_keys=True, separators=(",", ":"))]
    header.append(str(len(tensors)))
    body = []
    seen = set()
    for name, arr in tensors:
        if not name or any(c.isspace() for c in name):
            raise CheckpointError(f"invalid tensor name {name!r}")
        if name in seen:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        seen.add(name)
        arr = np.asarray(arr)
        header.append(" ".join([name, str(arr.ndim), *map(str, arr.shape)]))
        body.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return ("\n".join(header) + "\n").encode("ascii") + b"".join(body)


def loads(data):
    """Inverse of :func:`dumps`; returns ``(descriptor, list of (name, array))``."""
    pos = 0

    def readline():
        nonlocal pos
        end = data.find(b"\n", pos)
        if end < 0:
            raise CheckpointError("truncated checkpoint header")
        line = data[pos:end].decode("ascii")
        pos = end + 1
        return line

    magic = readline().split()
    if len(magic) != 2 or magic[0] != MAGIC:
        raise CheckpointError("not a skelact checkpoint")
    if int(magic[1]) != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {magic[1]}")
    descriptor = json.loads(readline())
    count = int(readline())
    specs = []
    for _ in range(count):
        parts = readline().split()
        name, ndim = parts[0], int(parts[1])
        shape = tuple(int(d) for d in parts[2:2 + ndim])
        specs.append((name, shape))
    tensors = []
    for name, shape in specs:
        n = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * n
        if pos + nbytes > len(data):
            raise CheckpointError(f"truncated data for tensor {name}")
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += nbytes
        tensors.append((name, arr))
    if pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint data")
    return descriptor, tensors


def save(path, tensors, descriptor=None):
    atomic_write_bytes(path, dumps(tensors, descriptor))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
