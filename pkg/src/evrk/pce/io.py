"""PCE1 model files.

Layout (little-endian):
  b"PCE1", u16 version
  descriptor: u8 n_kernels, u8 kernel sizes; u8 n_stages, u16 channel plan;
              u32 hidden, f64 dropout, u16 blocks, u16 scalars, u32 window
              length, u32 output length, u8 compute dtype (0 f64, 1 f32)
  names:      input channels, scalar channels, target; each list as u16
              count then u16-length-prefixed UTF-8 strings
  norm:       u16 count, then (name, f64 min, f64 max) per channel
  meta:       u32 length, UTF-8 JSON with sorted keys
  params:     every tensor as f64 in CnnArchitecture.param_shapes() order,
              C order within a tensor
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..prep import ChannelRange, NormalizationParams
from .network import CnnArchitecture, CnnModel

PCE_MAGIC = b"PCE1"
PCE_VERSION = 1
_DTYPES = (np.dtype(np.float64), np.dtype(np.float32))


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _pack_names(names) -> bytes:
    return struct.pack("<H", len(names)) + b"".join(_pack_str(n) for n in names)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def unpack(self, fmt: str):
        values = struct.unpack_from("<" + fmt, self.data, self.pos)
        self.pos += struct.calcsize("<" + fmt)
        return values if len(values) > 1 else values[0]

    def string(self) -> str:
        n = self.unpack("H")
        raw = self.data[self.pos:self.pos + n]
        self.pos += n
        return raw.decode("utf-8")

    def names(self) -> tuple:
        return tuple(self.string() for _ in range(self.unpack("H")))


def dumps(model: CnnModel) -> bytes:
    arch = model.arch
    if model.norm is None:
        raise ValueError("cannot save a model without normalisation parameters")
    out = [PCE_MAGIC, struct.pack("<H", PCE_VERSION)]
    out.append(struct.pack(f"<B{len(arch.kernel_sizes)}B", len(arch.kernel_sizes), *arch.kernel_sizes))
    out.append(struct.pack(f"<B{len(arch.channel_plan)}H", len(arch.channel_plan), *arch.channel_plan))
    out.append(struct.pack("<IdHHIIB", arch.hidden, arch.dropout, arch.n_blocks, arch.n_scalars,
                           arch.window_len, arch.out_len, _DTYPES.index(model.dtype)))
    out += [_pack_names(model.input_names), _pack_names(model.scalar_names), _pack_str(model.target_name)]
    out.append(struct.pack("<H", len(model.norm.channels)))
    for ch in model.norm.channels:
        out.append(_pack_str(ch.name) + struct.pack("<dd", ch.min, ch.max))
    meta = json.dumps(model.meta, sort_keys=True, default=str).encode("utf-8")
    out.append(struct.pack("<I", len(meta)) + meta)
    for name, shape in arch.param_shapes().items():
        value = model.params[name]
        if value.shape != tuple(shape):
            raise ValueError(f"parameter {name} has shape {value.shape}, expected {shape}")
        out.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return b"".join(out)


def loads(data: bytes) -> CnnModel:
    try:
        return _loads(data)
    except (struct.error, UnicodeDecodeError, IndexError) as exc:
        raise ValueError(f"truncated or corrupt PCE1 file: {exc}") from exc


def _loads(data: bytes) -> CnnModel:
    if data[:4] != PCE_MAGIC:
        raise ValueError("not a PCE1 model file")
    r = _Reader(data)
    r.pos = 4
    version = r.unpack("H")
    if version != PCE_VERSION:
        raise ValueError(f"unsupported PCE version {version}")
    kernels = tuple(r.unpack("B") for _ in range(r.unpack("B")))
    plan = tuple(r.unpack("H") for _ in range(r.unpack("B")))
    hidden, dropout, n_blocks, n_scalars, window_len, out_len, dtype_code = r.unpack("IdHHIIB")
    arch = CnnArchitecture(kernels, plan, hidden, dropout, n_blocks, n_scalars, window_len, out_len)
    input_names, scalar_names, target_name = r.names(), r.names(), r.string()
    channels = []
    for _ in range(r.unpack("H")):
        name = r.string()
        lo, hi = r.unpack("dd")
        channels.append(ChannelRange(name, lo, hi))
    meta_len = r.unpack("I")
    meta = json.loads(data[r.pos:r.pos + meta_len].decode("utf-8"))
    r.pos += meta_len
    dtype = _DTYPES[dtype_code]
    params = {}
    for name, shape in arch.param_shapes().items():
        count = int(np.prod(shape))
        values = np.frombuffer(data, dtype="<f8", count=count, offset=r.pos)
        r.pos += 8 * count
        params[name] = values.reshape(shape).astype(dtype)
    if r.pos != len(data):
        raise ValueError("trailing bytes in PCE1 file")
    return CnnModel(arch, params, NormalizationParams(tuple(channels)), input_names, scalar_names, target_name, meta)


def save(model: CnnModel, path: Union[str, Path]) -> None:
    Path(path).write_bytes(dumps(model))


def load(path: Union[str, Path]) -> CnnModel:
    return loads(Path(path).read_bytes())
