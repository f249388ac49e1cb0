"""Binary checkpoint files for network parameters.

Layout (little-endian)::

    magic "LLNET1" | u16 version | u32 json length | config json
    | 32-byte sha256 of the json | u32 tensor count
    | per tensor: u8 ndim, ndim * u32 dims, float32 data
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .network import NetworkConfig, NetworkParams

MAGIC = b"LLNET1"
VERSION = 1


def checkpoint_bytes(params: NetworkParams) -> bytes:
    cfg_json = params.config.to_json().encode()
    out = [MAGIC, struct.pack("<HI", VERSION, len(cfg_json)), cfg_json,
           hashlib.sha256(cfg_json).digest(), struct.pack("<I", len(params.tensors))]
    for t in params.tensors:
        out.append(struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        out.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("checkpoint is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def params_from_bytes(data: bytes, expected: NetworkConfig = None) -> NetworkParams:
    r = _Reader(data)
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    version, n = r.unpack("<HI")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    cfg_json = r.take(n)
    digest = r.take(32)
    if hashlib.sha256(cfg_json).digest() != digest:
        raise FormatError("checkpoint config hash does not match its config")
    config = NetworkConfig.from_dict(json.loads(cfg_json))
    if expected is not None and expected.digest() != digest:
        raise FormatError("checkpoint was trained with a different network config")
    (count,) = r.unpack("<I")
    tensors = []
    for _ in range(count):
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        raw = r.take(4 * size)
        tensors.append(np.frombuffer(raw, dtype="<f4").astype(float).reshape(shape))
    if r.pos != len(data):
        raise FormatError("trailing bytes after checkpoint tensors")
    return NetworkParams(config, tensors)


def save_checkpoint(params: NetworkParams, path):
    Path(path).write_bytes(checkpoint_bytes(params))


def load_checkpoint(path, expected: NetworkConfig = None) -> NetworkParams:
    return params_from_bytes(Path(path).read_bytes(), expected)
