"""Binary checkpoint io for named parameter collections.

Layout: magic ``GTCK``, format version (u32 LE), then for each parameter in
sorted name order: name length (u32 LE), utf-8 name, rank (u32 LE), each
dim (u64 LE), raw float64 LE values in row-major order. Values are always
stored at double precision regardless of the training dtype.
"""

import struct

import numpy as np

from .autodiff import Tensor
from .errors import DataError

MAGIC = b"GTCK"
VERSION = 1


def save_params(path, params: dict) -> None:
    """Write ``{name: Tensor-or-array}`` to ``path``; sorted by name."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name in sorted(params):
            arr = params[name]
            if isinstance(arr, Tensor):
                arr = arr.data
            arr = np.asarray(arr, dtype="<f8")
            if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<Q", dim))
            f.write(arr.tobytes(order="C"))


def load_params(path) -> dict:
    """Read a checkpoint back as ``{name: float64 ndarray}``."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic {raw[:4]!r})")
    if len(raw) < 8:
        raise DataError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    out: dict = {}
    while pos < len(raw):
        try:
            (name_len,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            name = raw[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", raw, pos) if rank else ()
            pos += 8 * rank
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            nbytes = 8 * count
            if pos + nbytes > len(raw):
                raise struct.error("values run past end of file")
            values = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(shape)
            pos += nbytes
        except (struct.error, UnicodeDecodeError) as e:
            raise DataError(f"{path}: corrupt checkpoint near byte {pos}: {e}") from e
        if name in out:
            raise DataError(f"{path}: duplicate parameter {name!r}")
        out[name] = values.copy()
    return out
