"""Binary checkpoint format for named float32 tensors.

Layout (all integers little-endian)::

    b"GDCA"                      magic
    u32 version                  = 1
    u64 extractor seed
    u32 tensor count
    per tensor:
        u16 name length, UTF-8 name bytes
        u8  ndim, u32 dims[ndim]
        f32 values, row-major
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, LengthError, VersionError
from .tensor import Tensor

MAGIC = b"GDCA"
VERSION = 1


def encode_checkpoint(tensors: dict[str, Tensor], extractor_seed: int) -> bytes:
    parts = [MAGIC, struct.pack("<IQI", VERSION, int(extractor_seed), len(tensors))]
    for name, t in tensors.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"tensor name too long ({len(raw)} bytes)")
        data = t.data if isinstance(t, Tensor) else np.asarray(t)
        if data.ndim > 255:
            raise ValueError("too many dimensions")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<B{data.ndim}I", data.ndim, *data.shape))
        parts.append(np.ascontiguousarray(data, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            have = len(self.buf) - self.pos
            raise LengthError(f"checkpoint truncated reading {what} at byte offset {self.pos}: "
                              f"expected {n} bytes, got {have}",
                              offset=self.pos, expected=n, actual=have)
        out = self.buf[self.pos:end]
        self.pos = end
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(buf: bytes) -> tuple[dict[str, Tensor], int]:
    r = _Reader(buf)
    magic = buf[:4]
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    r.take(4, "magic")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version}, expected {VERSION}")
    seed, count = r.unpack("<QI", "header")
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H", "name length")
        name = r.take(nlen, "name").decode("utf-8")
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        (ndim,) = r.unpack("<B", f"ndim of {name!r}")
        dims = r.unpack(f"<{ndim}I", f"dims of {name!r}")
        n = int(np.prod(dims)) if ndim else 1
        raw = r.take(4 * n, f"data of {name!r}")
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
        tensors[name] = Tensor(arr)
    return tensors, seed


def save_checkpoint(path, tensors: dict[str, Tensor], extractor_seed: int):
    """Write atomically: a temp file in the target directory, then rename."""
    path = Path(path)
    payload = encode_checkpoint(tensors, extractor_seed)
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=directory)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> tuple[dict[str, Tensor], int]:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(buf)
