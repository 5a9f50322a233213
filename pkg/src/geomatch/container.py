"""Binary container for named float32 tensors.

Layout (all integers little-endian):
    magic "ADMT" | u32 version | u32 entry count
    per entry: u16 name length | UTF-8 name | u8 rank | rank * u64 dims
               | row-major float32 data

Used for descriptor grids, depth maps, external score matrices and
weight bundles, so every artifact on disk is parseable with a few lines
of code in any language.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"ADMT"
VERSION = 1


class FormatError(ValueError):
    """Raised when a container file is malformed."""


def write_tensors(path, entries: dict) -> None:
    """Write named tensors to `path` atomically (temp file + rename)."""
    path = os.fspath(path)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(entries))
    for name, arr in entries.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise FormatError(f"entry name too long: {name!r}")
        if arr.ndim > 0xFF:
            raise FormatError(f"rank {arr.ndim} exceeds container limit")
        blob += struct.pack("<H", len(name_b))
        blob += name_b
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        blob += arr.astype("<f4").tobytes(order="C")
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(bytes(blob))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_tensors(path) -> dict:
    """Read all named tensors from a container file."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic in {path}")
    if len(data) < 12:
        raise FormatError(f"truncated header in {path}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    out = {}
    off = 12
    for _ in range(count):
        try:
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", data, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}Q", data, off)
            off += 8 * rank
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(dims)
            off += 4 * n
        except (struct.error, ValueError) as e:
            raise FormatError(f"truncated entry in {path}: {e}") from e
        out[name] = arr.astype(np.float32)
    if off != len(data):
        raise FormatError(f"trailing bytes in {path}")
    return out
