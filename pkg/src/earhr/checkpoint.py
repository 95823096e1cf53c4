"""Binary denoiser checkpoints.

Little-endian layout::

    b"EBT1"  u32 version  u32 len  config JSON (utf-8)  f64 norm_constant
    u32 n_tensors
    per tensor: u32 name_len  name  u32 ndim  u32 dims[ndim]  f32 data

The JSON block carries the :class:`UNetConfig` fields and the training
metadata (epochs, loss history).
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, fields

import numpy as np
import torch

from .errors import ConfigError, FormatError, ShapeError
from .unet import DenoiserModel, TrainingMeta, UNet, UNetConfig

MAGIC = b"EBT1"
VERSION = 1


def save_checkpoint(m: DenoiserModel) -> bytes:
    m.check_finite()
    cfg = {"unet": asdict(m.config),
           "meta": {"epochs": m.meta.epochs, "loss_history": list(m.meta.loss_history)}}
    blob = json.dumps(cfg, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<d", m.norm_constant)]
    state = m.net.state_dict()
    parts.append(struct.pack("<I", len(state)))
    for name, t in state.items():
        arr = t.detach().cpu().numpy()
        key = name.encode()
        parts.append(struct.pack("<I", len(key)) + key)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.data):
            raise FormatError(f"checkpoint truncated at byte {self.pos} (needed {n} more)")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(data: bytes, expect: UNetConfig | None = None) -> DenoiserModel:
    """Rebuild a model; ``expect`` pins the architecture the caller requires."""
    r = _Reader(bytes(data))
    if bytes(r.take(4)) != MAGIC:
        raise FormatError("not a denoiser checkpoint (bad magic)")
    version, n_json = r.unpack("<II")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        cfg = json.loads(bytes(r.take(n_json)).decode())
        known = {f.name for f in fields(UNetConfig)}
        unet_cfg = UNetConfig(**{k: v for k, v in cfg["unet"].items() if k in known})
        meta = TrainingMeta(int(cfg["meta"]["epochs"]), list(cfg["meta"]["loss_history"]))
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"corrupt config block: {e}") from None
    if expect is not None and expect != unet_cfg:
        raise ShapeError(f"checkpoint architecture {unet_cfg} does not match expected {expect}")
    (norm_constant,) = r.unpack("<d")
    net = UNet(unet_cfg)
    state = net.state_dict()
    (n_tensors,) = r.unpack("<I")
    if n_tensors != len(state):
        raise ShapeError(f"checkpoint has {n_tensors} tensors, model needs {len(state)}")
    loaded = {}
    for _ in range(n_tensors):
        (n_name,) = r.unpack("<I")
        name = bytes(r.take(n_name)).decode()
        (ndim,) = r.unpack("<I")
        dims = r.unpack(f"<{ndim}I")
        if name not in state:
            raise ShapeError(f"unexpected tensor {name!r}")
        if tuple(state[name].shape) != tuple(dims):
            raise ShapeError(f"{name}: checkpoint shape {dims} vs model {tuple(state[name].shape)}")
        count = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims)
        loaded[name] = torch.from_numpy(arr.copy()).to(state[name].dtype)
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes after the last tensor")
    net.load_state_dict(loaded)
    try:
        m = DenoiserModel(unet_cfg, norm_constant, net=net, meta=meta)
        m.check_finite()
    except ConfigError as e:
        raise FormatError(str(e)) from None
    return m
