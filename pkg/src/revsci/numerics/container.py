"""RVT1 binary tensor container.

Layout: magic ``b"RVT1"``, u8 dtype code (0 = float32, 1 = float64), u8 ndim,
ndim little-endian u32 extents, then the row-major little-endian payload.
Optional semantic metadata lives in a JSON sidecar next to the file
(``name.rvt`` -> ``name.json``).
"""
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ContainerError

MAGIC = b"RVT1"
_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_OF = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def encode(array):
    array = np.asarray(array)
    if array.dtype not in _CODE_OF:
        raise ContainerError(f"unsupported dtype {array.dtype}; RVT1 stores float32 or float64")
    if array.ndim > 255:
        raise ContainerError("too many dimensions")
    code = _CODE_OF[array.dtype]
    header = MAGIC + struct.pack("<BB", code, array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype=_CODES[code]).tobytes(order="C")
    return header + payload


def decode(blob):
    if len(blob) < 6 or blob[:4] != MAGIC:
        raise ContainerError("missing RVT1 magic")
    code, ndim = struct.unpack_from("<BB", blob, 4)
    if code not in _CODES:
        raise ContainerError(f"unknown dtype code {code}")
    end = 6 + 4 * ndim
    if len(blob) < end:
        raise ContainerError("truncated header")
    shape = struct.unpack_from(f"<{ndim}I", blob, 6)
    dtype = _CODES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(blob) - end != expected:
        raise ContainerError(f"payload has {len(blob) - end} bytes, header implies {expected}")
    data = np.frombuffer(blob, dtype=dtype, offset=end).reshape(shape)
    return data.astype(dtype.newbyteorder("="), copy=True)


def write_tensor(path, array, meta=None):
    path = Path(path)
    path.write_bytes(encode(array))
    if meta is not None:
        sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return path


def read_tensor(path):
    return decode(Path(path).read_bytes())


def read_meta(path):
    side = sidecar_path(path)
    if not side.exists():
        return {}
    return json.loads(side.read_text())
