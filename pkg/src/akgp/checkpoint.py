"""Binary checkpoints with byte-exact round trips.

Layout (all integers little-endian):

    magic "AKGP1"
    u32 length + UTF-8 JSON config snapshot
    u32 tensor count, then tensor records
    u32 optimizer buffer count, then records in the same shape
    u64 stage, u64 epochs_done, u64 adam_t
    u32 generator word count, then u64 words

A record is: u32 name length, name bytes, u32 rank, one u64 per dim, then
the row-major float64 payload. Saving the result of a load reproduces the
original file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"AKGP1"
_MAX_RANK = 8
_MAX_DIM = 1 << 32
_MAX_ELEMENTS = 1 << 28  # 2 GiB of float64 payload


class CheckpointError(ValueError):
    """Checkpoint file is unreadable."""


class BadMagicError(CheckpointError):
    """File does not start with the expected magic bytes."""


class TruncatedCheckpointError(CheckpointError):
    """File ended before a complete structure could be read."""


class DimOverflowError(CheckpointError):
    """A recorded tensor declares an implausibly large shape."""


@dataclass
class CheckpointData:
    config: dict
    tensors: dict[str, np.ndarray]
    opt_buffers: dict[str, np.ndarray]
    stage: int
    epochs_done: int
    adam_t: int
    rng_state: tuple[int, ...]


def _write_record(fh, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", array.ndim))
    for dim in array.shape:
        fh.write(struct.pack("<Q", dim))
    fh.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def save_checkpoint(path, config_json: str, tensors: dict[str, np.ndarray],
                    opt_buffers: dict[str, np.ndarray], stage: int,
                    epochs_done: int, adam_t: int,
                    rng_state: tuple[int, ...]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        raw = config_json.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<I", len(tensors)))
        for name, array in tensors.items():
            _write_record(fh, name, array)
        fh.write(struct.pack("<I", len(opt_buffers)))
        for name, array in opt_buffers.items():
            _write_record(fh, name, array)
        fh.write(struct.pack("<QQQ", stage, epochs_done, adam_t))
        fh.write(struct.pack("<I", len(rng_state)))
        for word in rng_state:
            fh.write(struct.pack("<Q", word))


def _read_exact(fh, n: int, what: str) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise TruncatedCheckpointError(f"file ended while reading {what}")
    return raw


def _read_record(fh) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "record name length"))
    name = _read_exact(fh, name_len, "record name").decode("utf-8")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"rank of {name}"))
    if rank > _MAX_RANK:
        raise DimOverflowError(f"tensor {name} declares rank {rank}")
    dims = []
    total = 1
    for _ in range(rank):
        (dim,) = struct.unpack("<Q", _read_exact(fh, 8, f"dims of {name}"))
        if dim > _MAX_DIM:
            raise DimOverflowError(f"tensor {name} declares dimension {dim}")
        dims.append(dim)
        total *= dim
    if total > _MAX_ELEMENTS:
        raise DimOverflowError(f"tensor {name} declares {total} elements")
    payload = _read_exact(fh, total * 8, f"payload of {name}")
    array = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    return name, array


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        try:
            config = json.loads(_read_exact(fh, cfg_len, "config snapshot").decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"config snapshot is not valid JSON: {exc}") from exc

        tensors: dict[str, np.ndarray] = {}
        (n_tensors,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        for _ in range(n_tensors):
            name, array = _read_record(fh)
            tensors[name] = array

        opt_buffers: dict[str, np.ndarray] = {}
        (n_buffers,) = struct.unpack("<I", _read_exact(fh, 4, "optimizer buffer count"))
        for _ in range(n_buffers):
            name, array = _read_record(fh)
            opt_buffers[name] = array

        stage, epochs_done, adam_t = struct.unpack("<QQQ", _read_exact(fh, 24, "counters"))
        (n_words,) = struct.unpack("<I", _read_exact(fh, 4, "generator state size"))
        words = struct.unpack(f"<{n_words}Q", _read_exact(fh, 8 * n_words, "generator state"))
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after checkpoint payload")
    return CheckpointData(config=config, tensors=tensors, opt_buffers=opt_buffers,
                          stage=stage, epochs_done=epochs_done, adam_t=adam_t,
                          rng_state=tuple(words))
