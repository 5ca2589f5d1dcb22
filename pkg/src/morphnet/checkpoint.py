"""Binary model persistence.

Layout (integers little-endian):

    magic ``MNET`` | u32 format version | u32 descriptor length | descriptor UTF-8
    u32 tensor count
    per tensor: u16 name length | name UTF-8 | u8 rank | rank x u32 extents
                | row-major float32 values
    trailing u64 checksum = first 8 bytes of the SHA-256 of everything above

Parameters are stored under ``param.<name>``, optimizer moments under
``adam.<kind>.<name>``, and scalar bookkeeping (step, epoch, best
validation loss, learning rate) under ``meta.*`` as rank-0 tensors, so
one container round-trips the full training state.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FORMAT_VERSION",
    "Checkpoint",
    "CheckpointError",
    "IntegrityError",
    "VersionError",
    "save_checkpoint",
    "load_checkpoint",
]

MAGIC = b"MNET"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Base class for persistence failures."""


class IntegrityError(CheckpointError):
    """The file is truncated, corrupted, or not a checkpoint at all."""


class VersionError(CheckpointError):
    """The file is a checkpoint, but in an unsupported format version."""


@dataclass
class Checkpoint:
    """Everything needed to resume or serve a model."""

    descriptor: str
    params: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)  # m.<name> / v.<name>
    step: int = 0
    epoch: int = 0
    best_val_loss: float = math.inf
    lr: float = 0.0


def _flatten(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for name, value in ckpt.params.items():
        out[f"param.{name}"] = value
    for name, value in ckpt.optimizer.items():
        out[f"adam.{name}"] = value
    out["meta.step"] = np.float32(ckpt.step)
    out["meta.epoch"] = np.float32(ckpt.epoch)
    out["meta.best_val_loss"] = np.float32(ckpt.best_val_loss)
    out["meta.lr"] = np.float32(ckpt.lr)
    return out


def _unflatten(descriptor: str, tensors: dict[str, np.ndarray]) -> Checkpoint:
    params: dict[str, np.ndarray] = {}
    optimizer: dict[str, np.ndarray] = {}
    meta: dict[str, float] = {}
    for name, value in tensors.items():
        if name.startswith("param."):
            params[name[len("param."):]] = value
        elif name.startswith("adam."):
            optimizer[name[len("adam."):]] = value
        elif name.startswith("meta."):
            meta[name[len("meta."):]] = float(value)
        else:
            raise IntegrityError(f"unrecognized tensor name {name!r}")
    return Checkpoint(
        descriptor=descriptor,
        params=params,
        optimizer=optimizer,
        step=int(meta.get("step", 0)),
        epoch=int(meta.get("epoch", 0)),
        best_val_loss=meta.get("best_val_loss", math.inf),
        lr=meta.get("lr", 0.0),
    )


def _encode(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    desc = ckpt.descriptor.encode("utf-8")
    parts.append(struct.pack("<I", len(desc)))
    parts.append(desc)
    tensors = _flatten(ckpt)
    parts.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        raw = name.encode("utf-8")
        # asarray, not ascontiguousarray: the latter promotes 0-d scalars
        # to 1-d, and tobytes() already emits C order for any layout
        arr = np.asarray(tensors[name], dtype="<f4")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    checksum = hashlib.sha256(body).digest()[:8]
    return body + checksum


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Serialize atomically: write a sibling temp file, then rename over."""
    blob = _encode(ckpt)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Cursor:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise IntegrityError(
                f"checkpoint truncated: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.blob) - self.pos}"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 + 8:
        raise IntegrityError(f"file too short to be a checkpoint ({len(blob)} bytes)")
    if blob[: len(MAGIC)] != MAGIC:
        raise IntegrityError(f"bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}")
    body, stored = blob[:-8], blob[-8:]
    if hashlib.sha256(body).digest()[:8] != stored:
        raise IntegrityError("checksum mismatch: checkpoint content is corrupted")

    cur = _Cursor(body)
    cur.take(len(MAGIC))
    (version,) = cur.unpack("<I")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported checkpoint format version {version}, expected {FORMAT_VERSION}")
    (desc_len,) = cur.unpack("<I")
    descriptor = cur.take(desc_len).decode("utf-8")
    (count,) = cur.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        (rank,) = cur.unpack("<B")
        shape = cur.unpack(f"<{rank}I") if rank else ()
        n_values = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(cur.take(4 * n_values), dtype="<f4").reshape(shape)
        tensors[name] = np.array(data, dtype=np.float32)  # writable copy
    if cur.pos != len(body):
        raise IntegrityError(f"{len(body) - cur.pos} trailing bytes after the last tensor")
    return _unflatten(descriptor, tensors)
