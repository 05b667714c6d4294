"""Binary checkpoint format.

Layout (little-endian): magic ``TVAE``, version u16, config length u32,
config text (UTF-8), layer count u16, then per layer rows u32, cols u32,
weights (rows*cols f64) and biases (cols f64); then the Adam first moments
for every layer (weights, biases) followed by the second moments in the same
order; then step count u64, best validation loss f64, seed u64.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainConfig, format_config, parse_config
from .optim import AdamState

MAGIC = b"TVAE"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: TrainConfig
    weights: list[tuple[np.ndarray, np.ndarray]]
    adam: AdamState
    best_val_loss: float
    seed: int

    @property
    def input_dim(self) -> int:
        return self.weights[0][0].shape[0]


def to_bytes(ckpt: Checkpoint) -> bytes:
    out = io.BytesIO()
    blob = format_config(ckpt.config).encode("utf-8")
    out.write(MAGIC)
    out.write(struct.pack("<HI", VERSION, len(blob)))
    out.write(blob)
    out.write(struct.pack("<H", len(ckpt.weights)))
    f64 = np.dtype("<f8")
    for W, b in ckpt.weights:
        rows, cols = W.shape
        out.write(struct.pack("<II", rows, cols))
        out.write(np.ascontiguousarray(W, f64).tobytes())
        out.write(np.ascontiguousarray(b, f64).reshape(-1).tobytes())
    for moments in (ckpt.adam.m, ckpt.adam.v):
        for arr in moments:
            out.write(np.ascontiguousarray(arr, f64).tobytes())
    out.write(struct.pack("<QdQ", ckpt.adam.t, ckpt.best_val_loss, ckpt.seed))
    return out.getvalue()


def from_bytes(raw: bytes) -> Checkpoint:
    buf = memoryview(raw)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError("truncated checkpoint")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    def take_f64(count):
        return np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, blob_len = struct.unpack("<HI", take(6))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    config = parse_config(bytes(take(blob_len)).decode("utf-8"))
    (n_layers,) = struct.unpack("<H", take(2))
    weights, shapes = [], []
    for _ in range(n_layers):
        rows, cols = struct.unpack("<II", take(8))
        W = take_f64(rows * cols).reshape(rows, cols)
        b = take_f64(cols).reshape(1, cols)
        weights.append((W, b))
        shapes += [(rows, cols), (1, cols)]
    m = [take_f64(r * c).reshape(r, c) for r, c in shapes]
    v = [take_f64(r * c).reshape(r, c) for r, c in shapes]
    t, best, seed = struct.unpack("<QdQ", take(24))
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes in checkpoint")
    return Checkpoint(config, weights, AdamState(m=m, v=v, t=t), best, seed)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
