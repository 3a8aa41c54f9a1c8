"""Raw tensor files (FMCT), checkpoints (FMCW) and plain-text annotations.

All integers are little-endian.

FMCT: b"FMCT", dtype u8 (0 = float32), rank u8, extents u32 x rank, then the
float32 payload in C order.

FMCW: b"FMCW", version u16, tensor count u32, then per tensor: name length
u32, UTF-8 name, dtype u8, rank u8, extents u32 x rank, payload offset u64
(relative to the start of the payload section). The payload section follows
the last record and holds every tensor's float32 values back to back.
"""
from __future__ import annotations

import os
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import FileFormatError

TENSOR_MAGIC = b"FMCT"
CHECKPOINT_MAGIC = b"FMCW"
CHECKPOINT_VERSION = 1
DTYPE_F32 = 0
_F32 = np.dtype("<f4")


def _atomic_write(path: Path, blob: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, blob: bytes, source: str):
        self.blob, self.pos, self.source = blob, 0, source

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.blob):
            raise FileFormatError(f"{self.source}: truncated header")
        vals = struct.unpack_from(fmt, self.blob, self.pos)
        self.pos += size
        return vals

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FileFormatError(f"{self.source}: truncated data")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out


def _shape_header(arr: np.ndarray) -> bytes:
    if arr.ndim > 255:
        raise FileFormatError("rank exceeds 255")
    return struct.pack(f"<BB{arr.ndim}I", DTYPE_F32, arr.ndim, *arr.shape)


def _read_shape(r: _Reader) -> tuple[int, ...]:
    dtype, rank = r.take("<BB")
    if dtype != DTYPE_F32:
        raise FileFormatError(f"{r.source}: unsupported dtype tag {dtype}")
    return tuple(r.take(f"<{rank}I")) if rank else ()


def encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.require(np.asarray(arr, dtype=_F32), requirements="C")
    return TENSOR_MAGIC + _shape_header(arr) + arr.tobytes()


def decode_tensor(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    r = _Reader(blob, source)
    if r.raw(4) != TENSOR_MAGIC:
        raise FileFormatError(f"{source}: not an FMCT tensor file")
    shape = _read_shape(r)
    n = int(np.prod(shape, dtype=np.int64))
    data = r.raw(4 * n)
    if r.pos != len(blob):
        raise FileFormatError(f"{source}: {len(blob) - r.pos} trailing bytes")
    return np.frombuffer(data, dtype=_F32).reshape(shape).astype(np.float64)


def save_tensor(path, arr: np.ndarray) -> None:
    _atomic_write(Path(path), encode_tensor(arr))


def load_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes(), str(path))


def encode_checkpoint(tensors: dict[str, np.ndarray]) -> bytes:
    header = [CHECKPOINT_MAGIC, struct.pack("<HI", CHECKPOINT_VERSION, len(tensors))]
    payload = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.require(np.asarray(arr, dtype=_F32), requirements="C")
        raw_name = name.encode("utf-8")
        header.append(struct.pack("<I", len(raw_name)) + raw_name + _shape_header(arr) + struct.pack("<Q", offset))
        payload.append(arr.tobytes())
        offset += arr.nbytes
    return b"".join(header + payload)


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> "OrderedDict[str, np.ndarray]":
    r = _Reader(blob, source)
    if r.raw(4) != CHECKPOINT_MAGIC:
        raise FileFormatError(f"{source}: not an FMCW checkpoint")
    version, count = r.take("<HI")
    if version != CHECKPOINT_VERSION:
        raise FileFormatError(f"{source}: unsupported checkpoint version {version}")
    records = []
    for _ in range(count):
        (name_len,) = r.take("<I")
        name = r.raw(name_len).decode("utf-8")
        shape = _read_shape(r)
        (offset,) = r.take("<Q")
        records.append((name, shape, offset))
    base = r.pos
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    for name, shape, offset in records:
        n = int(np.prod(shape, dtype=np.int64))
        start = base + offset
        if start + 4 * n > len(blob):
            raise FileFormatError(f"{source}: tensor {name!r} runs past the end of the file")
        if name in out:
            raise FileFormatError(f"{source}: duplicate tensor {name!r}")
        out[name] = np.frombuffer(blob, dtype=_F32, count=n, offset=start).reshape(shape).astype(np.float64)
    return out


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    _atomic_write(Path(path), encode_checkpoint(tensors))


def load_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    return decode_checkpoint(Path(path).read_bytes(), str(path))


# ---------------------------------------------------------------------------
# Annotations: one ``image_id class cx cy w h`` line per box
# ---------------------------------------------------------------------------

def write_annotations(path, records: dict[int, np.ndarray]) -> None:
    lines = []
    for img in sorted(records):
        for k, cx, cy, w, h in np.asarray(records[img], dtype=np.float64).reshape(-1, 5):
            lines.append(f"{img} {int(k)} {cx:.8f} {cy:.8f} {w:.8f} {h:.8f}")
    _atomic_write(Path(path), ("\n".join(lines) + ("\n" if lines else "")).encode("ascii"))


def read_annotations(path, image_ids=None) -> dict[int, np.ndarray]:
    """Every id in ``image_ids`` gets an entry, possibly empty."""
    out: dict[int, list] = {int(i): [] for i in (image_ids or [])}
    text = Path(path).read_text(encoding="ascii")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise FileFormatError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
        try:
            img, k = int(parts[0]), int(parts[1])
            vals = [float(v) for v in parts[2:]]
        except ValueError as exc:
            raise FileFormatError(f"{path}:{lineno}: {exc}") from None
        out.setdefault(img, []).append([k] + vals)
    return {img: np.array(rows, dtype=np.float64).reshape(-1, 5) for img, rows in out.items()}
