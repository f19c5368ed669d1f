"""Binary tensor container and checkpoint files.

Single tensor ("DLGT" container), all integers little-endian:

    magic   4 bytes  b"DLGT"
    version u16      1
    rank    u8
    dims    u32 * rank
    dtype   u8       0 = float32
    payload raw little-endian values, row-major

A checkpoint is a sequence of length-prefixed (name, container) records:

    name_len u32, name utf-8 bytes, blob_len u32, container bytes

Records are written in sorted-name order, so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"DLGT"
VERSION = 1
DTYPE_F32 = 0


class ContainerError(ValueError):
    """Malformed container; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    if arr.dtype != np.float32:
        raise ValueError(f"container stores float32 only, got {arr.dtype}")
    if arr.ndim > 4:
        raise ValueError(f"rank {arr.ndim} > 4")
    head = MAGIC + struct.pack("<HB", VERSION, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    head += struct.pack("<B", DTYPE_F32)
    if arr.dtype.byteorder == ">":  # pragma: no cover - big-endian hosts
        arr = arr.astype("<f4")
    return head + arr.astype("<f4", copy=False).tobytes()


def tensor_from_bytes(buf: bytes, base_offset: int = 0) -> np.ndarray:
    off = 0

    def need(n: int, what: str):
        nonlocal off
        if off + n > len(buf):
            raise ContainerError(f"truncated while reading {what}", base_offset + off)
        piece = buf[off:off + n]
        off += n
        return piece

    if need(4, "magic") != MAGIC:
        raise ContainerError("bad magic", base_offset)
    version, rank = struct.unpack("<HB", need(3, "version/rank"))
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}", base_offset + 4)
    if rank > 4:
        raise ContainerError(f"rank {rank} > 4", base_offset + 6)
    dims = struct.unpack(f"<{rank}I", need(4 * rank, "dims"))
    (dtype_code,) = struct.unpack("<B", need(1, "dtype"))
    if dtype_code != DTYPE_F32:
        raise ContainerError(f"unknown dtype code {dtype_code}", base_offset + off - 1)
    count = int(np.prod(dims)) if rank else 1
    payload = need(4 * count, "payload")
    if off != len(buf):
        raise ContainerError(f"{len(buf) - off} trailing bytes", base_offset + off)
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


def save_tensors(path, tensors: dict) -> None:
    """Write named float32 arrays as a checkpoint file (sorted by name)."""
    chunks = []
    for name in sorted(tensors):
        blob = tensor_to_bytes(np.asarray(tensors[name], dtype=np.float32))
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)) + nb + struct.pack("<I", len(blob)) + blob)
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path) -> "OrderedDict[str, np.ndarray]":
    buf = Path(path).read_bytes()
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    off = 0
    while off < len(buf):
        if off + 4 > len(buf):
            raise ContainerError("truncated record header", off)
        (name_len,) = struct.unpack_from("<I", buf, off)
        off += 4
        if off + name_len > len(buf):
            raise ContainerError("truncated record name", off)
        name = buf[off:off + name_len].decode("utf-8")
        off += name_len
        if off + 4 > len(buf):
            raise ContainerError("truncated record length", off)
        (blob_len,) = struct.unpack_from("<I", buf, off)
        off += 4
        if off + blob_len > len(buf):
            raise ContainerError(f"truncated container for {name!r}", off)
        out[name] = tensor_from_bytes(buf[off:off + blob_len], base_offset=off)
        off += blob_len
    return out
