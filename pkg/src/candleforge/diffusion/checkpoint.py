"""Bit-exact checkpoint file: magic CFCK, version, config JSON, named tensors."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ValidationError

MAGIC = b"CFCK"
VERSION = 1
_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_checkpoint(path, config: dict, params: dict) -> None:
    """Serialize config + tensors; identical inputs produce identical bytes."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    cfg_bytes = json.dumps(config, sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(cfg_bytes))
    out += cfg_bytes
    names = sorted(params)
    out += struct.pack("<I", len(names))
    for name in names:
        tensor = np.ascontiguousarray(params[name])
        tag = _DTYPE_TAGS.get(tensor.dtype)
        if tag is None:
            raise ValidationError(f"tensor {name} has unsupported dtype {tensor.dtype}")
        name_bytes = name.encode("utf-8")
        out += struct.pack("<I", len(name_bytes))
        out += name_bytes
        out += struct.pack("<BB", tag, tensor.ndim)
        out += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
        out += tensor.astype(_TAG_DTYPES[tag], copy=False).tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> tuple[dict, dict]:
    data = Path(path).read_bytes()
    view = memoryview(data)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(data):
            raise ValidationError(f"checkpoint truncated at byte {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise ValidationError(f"{path} is not a CFCK checkpoint")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise ValidationError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    config = json.loads(bytes(take(cfg_len)).decode("utf-8"))
    (n_tensors,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        tag, rank = struct.unpack("<BB", take(2))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        dtype = _TAG_DTYPES.get(tag)
        if dtype is None:
            raise ValidationError(f"tensor {name}: unknown dtype tag {tag}")
        count = int(np.prod(dims)) if rank else 1
        payload = take(count * dtype.itemsize)
        arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
        params[name] = arr.astype(dtype.newbyteorder("="), copy=True)
    if pos != len(data):
        raise ValidationError(f"{len(data) - pos} trailing bytes in checkpoint")
    return config, params
