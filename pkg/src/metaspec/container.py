"""Bit-exact binary container for pipeline artifacts.

Layout (all integers little-endian):

    magic   4 bytes  b"MSPC"
    version u16      format version (currently 1)
    kind    u8       1=CfrFrameStack 2=SpectrumPair 3=MetaSpectrumPair
                     4=MusicSpectrum 5=Fingerprint
    dims    4 x u32  array shape, unused trailing dims = 1
    dtype   u8       1=f64 2=f32 3=complex-f64 (interleaved re/im pairs) 4=u8
    payload          row-major little-endian values
    footer  u32 + N  UTF-8 "key = value" lines preceded by their byte length

Writes are atomic (temp file + rename) and read(write(x)) round-trips
bit-exactly.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"MSPC"
VERSION = 1

KIND_CFR_STACK = 1
KIND_SPECTRUM_PAIR = 2
KIND_METASPECTRUM = 3
KIND_MUSIC_SPECTRUM = 4
KIND_FINGERPRINT = 5
_KNOWN_KINDS = (
    KIND_CFR_STACK,
    KIND_SPECTRUM_PAIR,
    KIND_METASPECTRUM,
    KIND_MUSIC_SPECTRUM,
    KIND_FINGERPRINT,
)

_DTYPES = {
    1: np.dtype("<f8"),
    2: np.dtype("<f4"),
    3: np.dtype("<c16"),
    4: np.dtype("u1"),
}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}

_HEADER = struct.Struct("<4sHB4IB")


class ContainerError(ValueError):
    pass


@dataclass
class Container:
    """One typed array plus string metadata."""

    kind: int
    values: np.ndarray
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KNOWN_KINDS:
            raise ContainerError(f"unknown container kind {self.kind}")
        if self.values.ndim > 4:
            raise ContainerError("containers support at most 4 dims")


def _dtype_code(arr: np.ndarray) -> int:
    key = arr.dtype.newbyteorder("<")
    if key not in _DTYPE_CODES:
        raise ContainerError(f"unsupported dtype {arr.dtype}")
    return _DTYPE_CODES[key]


def write_container(path, container: Container) -> None:
    """Serialize to ``path`` atomically (write temp file, then rename)."""
    arr = np.ascontiguousarray(container.values)
    code = _dtype_code(arr)
    dims = list(arr.shape) + [1] * (4 - arr.ndim)
    # The reserved ndim key lets readers restore genuine trailing 1-dims.
    items = dict(container.meta)
    items["ndim"] = str(arr.ndim)
    footer = "\n".join(f"{k} = {v}" for k, v in items.items()).encode("utf-8")

    payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
    blob = (
        _HEADER.pack(MAGIC, VERSION, container.kind, *dims, code)
        + payload
        + struct.pack("<I", len(footer))
        + footer
    )
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".mspc-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path) -> Container:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ContainerError("truncated container header")
    magic, version, kind, d0, d1, d2, d3, code = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    if kind not in _KNOWN_KINDS:
        raise ContainerError(f"unknown container kind {kind}")
    if code not in _DTYPES:
        raise ContainerError(f"unknown dtype code {code}")
    dims = (d0, d1, d2, d3)
    dtype = _DTYPES[code]
    count = int(np.prod(dims))
    payload_len = count * dtype.itemsize
    offset = _HEADER.size
    if len(blob) < offset + payload_len + 4:
        raise ContainerError("payload length does not match dims")
    arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).copy()

    (footer_len,) = struct.unpack_from("<I", blob, offset + payload_len)
    footer_start = offset + payload_len + 4
    if len(blob) != footer_start + footer_len:
        raise ContainerError("footer length does not match file size")
    footer = blob[footer_start:].decode("utf-8")
    meta = {}
    for line in footer.splitlines():
        if line.strip():
            key, _, value = line.partition(" = ")
            meta[key] = value

    ndim = int(meta.pop("ndim", 4))
    shape = list(dims)
    while len(shape) > max(ndim, 1) and shape[-1] == 1:
        shape.pop()
    return Container(kind, arr.reshape(shape), meta)
