"""Named-tensor checkpoint container: text header + flat little-endian binary.

Header lines: magic/version, tensor count, then one `name dtype shape offset`
line per tensor (offset relative to the data section), a `---` terminator,
and the raw bytes. Round-trips are bit-exact.
"""

from __future__ import annotations

import zlib
from pathlib import Path

import numpy as np

from .core import DuplexkitError

MAGIC = "DPXTENSOR"
VERSION = 1


class TensorStoreError(DuplexkitError):
    pass


def tensor_checksum(arr: np.ndarray) -> int:
    """crc32 over the little-endian raw bytes."""
    le = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
    return zlib.crc32(le.tobytes())


def write_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    header_lines = [f"{MAGIC} {VERSION}", str(len(tensors))]
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        if " " in name or "\n" in name:
            raise TensorStoreError(f"tensor name {name!r} may not contain whitespace")
        arr = np.asarray(arr)
        le = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        raw = le.tobytes()
        shape = ",".join(str(d) for d in arr.shape) if arr.ndim else "scalar"
        header_lines.append(f"{name} {le.dtype.str} {shape} {offset}")
        blobs.append(raw)
        offset += len(raw)
    header_lines.append("---")
    payload = "\n".join(header_lines).encode("utf-8") + b"\n" + b"".join(blobs)
    Path(path).write_bytes(payload)


def read_tensors(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    sep = raw.find(b"---\n")
    if sep < 0:
        raise TensorStoreError(f"{path}: missing header terminator")
    header = raw[:sep].decode("utf-8").splitlines()
    data = raw[sep + 4:]
    if not header or not header[0].startswith(MAGIC):
        raise TensorStoreError(f"{path}: bad magic")
    try:
        n = int(header[1])
    except (IndexError, ValueError) as exc:
        raise TensorStoreError(f"{path}: bad tensor count") from exc
    tensors: dict[str, np.ndarray] = {}
    for line in header[2:2 + n]:
        name, dtype_str, shape_str, offset_str = line.split(" ")
        dtype = np.dtype(dtype_str)
        shape = () if shape_str == "scalar" else tuple(int(d) for d in shape_str.split(","))
        count = int(np.prod(shape)) if shape else 1
        offset = int(offset_str)
        end = offset + count * dtype.itemsize
        if end > len(data):
            raise TensorStoreError(f"{path}: tensor {name!r} extends past end of file")
        arr = np.frombuffer(data[offset:end], dtype=dtype).reshape(shape)
        tensors[name] = arr.copy()
    if len(tensors) != n:
        raise TensorStoreError(f"{path}: header promised {n} tensors, found {len(tensors)}")
    return tensors
