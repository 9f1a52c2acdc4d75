"""Binary checkpoint: magic "GFNN", then config ints and per-layer state.

Layout (little endian):
    magic b"GFNN" | version u32 | n_config u32 | config i64 * n_config
    | layer_count u32
    | per layer: tag u32 | n_spec u32 | spec i64 * n_spec | n_arrays u32
                 | per array: ndim u32 | dims u32 * ndim | values f64
Layers appear in depth-first module order, so the bytes are deterministic
for a given model.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .layers import Module

MAGIC = b"GFNN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def stateful_layers(model: Module) -> list[Module]:
    return [m for m in model.modules() if m.tag != 0]


def checkpoint_bytes(model: Module, config_ints=()) -> bytes:
    buf = io.BytesIO()
    cfg = [int(v) for v in config_ints]
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(cfg)))
    buf.write(struct.pack(f"<{len(cfg)}q", *cfg))
    layers = stateful_layers(model)
    buf.write(struct.pack("<I", len(layers)))
    for layer in layers:
        spec = layer.spec_ints()
        arrays = layer.state_arrays()
        buf.write(struct.pack("<II", layer.tag, len(spec)))
        buf.write(struct.pack(f"<{len(spec)}q", *spec))
        buf.write(struct.pack("<I", len(arrays)))
        for a in arrays:
            a = np.asarray(a, dtype="<f8")
            buf.write(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
            buf.write(a.tobytes(order="C"))
    return buf.getvalue()


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("unexpected end of checkpoint")
        out = self.blob[self.pos: self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_config(blob: bytes) -> tuple[int, ...]:
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic")
    version, n_cfg = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    return r.unpack(f"<{n_cfg}q")


def load_into(model: Module, blob: bytes) -> tuple[int, ...]:
    """Fill an already-built model from checkpoint bytes; returns the stored config ints."""
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic")
    version, n_cfg = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    cfg = r.unpack(f"<{n_cfg}q")
    layers = stateful_layers(model)
    (count,) = r.unpack("<I")
    if count != len(layers):
        raise CheckpointError(f"checkpoint has {count} layers, model has {len(layers)}")
    for layer in layers:
        tag, n_spec = r.unpack("<II")
        spec = list(r.unpack(f"<{n_spec}q"))
        if tag != layer.tag or spec != layer.spec_ints():
            raise CheckpointError(f"layer mismatch: stored tag {tag} spec {spec}, "
                                  f"model tag {layer.tag} spec {layer.spec_ints()}")
        (n_arr,) = r.unpack("<I")
        arrays = []
        for _ in range(n_arr):
            (ndim,) = r.unpack("<I")
            dims = r.unpack(f"<{ndim}I")
            count_vals = int(np.prod(dims)) if ndim else 1
            arrays.append(np.frombuffer(r.take(8 * count_vals), dtype="<f8").reshape(dims).astype(np.float64))
        layer.load_state_arrays(arrays)
    if r.pos != len(blob):
        raise CheckpointError("trailing bytes after checkpoint")
    return cfg


def save_checkpoint(model: Module, path, config_ints=()) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, config_ints))


def load_checkpoint(model: Module, path) -> tuple[int, ...]:
    return load_into(model, Path(path).read_bytes())
