"""Reader/writer for the TXSTARC1 tensor archive used by the C++ library."""

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"TXSTARC1"
VERSION = 1
_DTYPES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.int64): 2, np.dtype(np.uint8): 3}
_CODES = {v: k for k, v in _DTYPES.items()}


def write_archive(path, meta, tensors):
    """Writes `tensors` (name -> array) in name order; the file is replaced atomically."""
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    meta_bytes = json.dumps(meta, separators=(",", ":"), sort_keys=True).encode()
    chunks += [struct.pack("<Q", len(meta_bytes)), meta_bytes, struct.pack("<Q", len(tensors))]
    for name in sorted(tensors):
        # ascontiguousarray would promote 0-d arrays to 1-d.
        arr = np.asarray(tensors[name]).copy(order="C")
        if arr.dtype not in _DTYPES:
            raise ValueError(f"{name}: unsupported dtype {arr.dtype}")
        encoded = name.encode()
        chunks += [struct.pack("<I", len(encoded)), encoded, struct.pack("<BI", _DTYPES[arr.dtype], arr.ndim)]
        chunks += [struct.pack("<q", d) for d in arr.shape]
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        chunks += [struct.pack("<Q", len(raw)), raw]
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "wb") as f:
        for c in chunks:
            f.write(c)
    os.replace(tmp, path)


def read_archive(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a TXSTARC1 archive")
    pos = 8
    (version,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if version != VERSION:
        raise ValueError(f"{path}: unsupported archive version {version}")
    (meta_len,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    meta = json.loads(data[pos : pos + meta_len])
    pos += meta_len
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos : pos + name_len].decode()
        pos += name_len
        code, ndim = struct.unpack_from("<BI", data, pos)
        pos += 5
        shape = struct.unpack_from(f"<{ndim}q", data, pos)
        pos += 8 * ndim
        (nbytes,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        tensors[name] = np.frombuffer(data[pos : pos + nbytes], dtype=_CODES[code].newbyteorder("<")).reshape(shape)
        pos += nbytes
    return meta, tensors
