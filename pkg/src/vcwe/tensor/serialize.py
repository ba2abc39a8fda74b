"""Flat binary serialization for named arrays.

Arrays are concatenated little-endian in manifest order; the manifest
records (name, shape, dtype, byte offset) so readers in any language can
slice the blob directly.
"""

from __future__ import annotations

import numpy as np

from ..errors import CheckpointFormatError

_DTYPES = {"<f8": np.dtype("<f8"), "<f4": np.dtype("<f4")}


def pack_arrays(arrays: dict[str, np.ndarray]) -> tuple[list[dict], bytes]:
    """Serialize arrays in the given (insertion) order."""
    manifest = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        code = "<f4" if arr.dtype == np.float32 else "<f8"
        raw = arr.astype(_DTYPES[code], copy=False).tobytes()
        manifest.append({"name": name, "shape": list(arr.shape),
                         "dtype": code, "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    return manifest, b"".join(chunks)


def unpack_arrays(manifest: list[dict], blob: bytes) -> dict[str, np.ndarray]:
    out = {}
    for entry in manifest:
        try:
            name = entry["name"]
            shape = tuple(entry["shape"])
            dtype = _DTYPES[entry["dtype"]]
            offset = entry["offset"]
        except (KeyError, TypeError) as exc:
            raise CheckpointFormatError(f"bad manifest entry: {entry!r}") from exc
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * dtype.itemsize
        if end > len(blob):
            raise CheckpointFormatError(
                f"blob truncated: entry {name!r} needs bytes up to {end}, have {len(blob)}")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape)
        out[name] = arr.copy()
    return out
