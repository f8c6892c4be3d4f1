"""Multi-branch 1D CNN for per-second power estimation.

Each varying input channel gets its own feature extraction block: three
convolutional branches (kernel sizes 3, 5, 7; conv(8) -> pool -> conv(4) ->
pool -> conv(4) -> dropout -> pool, ReLU after every conv) plus a residual
branch of three average pools. With 100 samples per window every branch ends
at length 12, so a block yields 13 x 12 features and five blocks flatten to
780. The two per-window scalars are appended (782) before two fully
connected layers (782 -> H -> 10, ReLU between, linear output).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import SCALAR_CHANNELS, VARYING_CHANNELS, PartitionedWindow
from ..prep import NormalizationParams, WindowArrays, stack_windows
from .layers import (
    avg_pool,
    avg_pool_backward,
    conv_backward,
    conv_forward,
    dropout,
    xavier_init,
)


@dataclass(frozen=True)
class CnnArchitecture:
    kernel_sizes: tuple = (3, 5, 7)
    channel_plan: tuple = (8, 4, 4)
    hidden: int = 128
    dropout: float = 0.2
    n_blocks: int = 5
    n_scalars: int = 2
    window_len: int = 100
    out_len: int = 10

    def __post_init__(self) -> None:
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        object.__setattr__(self, "channel_plan", tuple(int(c) for c in self.channel_plan))
        if any(k % 2 == 0 for k in self.kernel_sizes):
            raise ValueError("kernel sizes must be odd")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.pooled_len < 1:
            raise ValueError("window too short for the pooling stages")

    @property
    def stage_lengths(self) -> tuple:
        lengths = [self.window_len]
        for _ in self.channel_plan:
            lengths.append(lengths[-1] // 2)
        return tuple(lengths)

    @property
    def pooled_len(self) -> int:
        return self.stage_lengths[-1]

    @property
    def block_channels(self) -> int:
        return len(self.kernel_sizes) * self.channel_plan[-1] + 1

    @property
    def flat_len(self) -> int:
        return self.n_blocks * self.block_channels * self.pooled_len

    @property
    def final_len(self) -> int:
        return self.flat_len + self.n_scalars

    def param_shapes(self) -> dict:
        """Parameter shapes in serialisation order."""
        shapes = {}
        for k in self.kernel_sizes:
            c_in = 1
            for layer, c_out in enumerate(self.channel_plan):
                shapes[f"branch{k}.conv{layer}.weight"] = (self.n_blocks, c_out, c_in, k)
                shapes[f"branch{k}.conv{layer}.bias"] = (self.n_blocks, c_out)
                c_in = c_out
        shapes["fc1.weight"] = (self.final_len, self.hidden)
        shapes["fc1.bias"] = (self.hidden,)
        shapes["fc2.weight"] = (self.hidden, self.out_len)
        shapes["fc2.bias"] = (self.out_len,)
        return shapes


@dataclass
class CnnModel:
    arch: CnnArchitecture
    params: dict
    norm: Optional[NormalizationParams] = None
    input_names: tuple = VARYING_CHANNELS
    scalar_names: tuple = SCALAR_CHANNELS
    target_name: str = "act_pow"
    meta: dict = field(default_factory=dict)

    def copy(self) -> "CnnModel":
        return CnnModel(self.arch, {k: v.copy() for k, v in self.params.items()}, self.norm,
                        self.input_names, self.scalar_names, self.target_name, dict(self.meta))

    @property
    def dtype(self) -> np.dtype:
        return self.params["fc2.bias"].dtype

    def astype(self, dtype) -> "CnnModel":
        """Copy with parameters cast to ``dtype`` (the compute precision)."""
        out = self.copy()
        out.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return out

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


def init_model(arch: CnnArchitecture, rng: np.random.Generator, norm: Optional[NormalizationParams] = None,
               input_names=VARYING_CHANNELS, scalar_names=SCALAR_CHANNELS, target_name: str = "act_pow",
               dtype=np.float64) -> CnnModel:
    """Xavier-uniform weights, zero biases; samples are drawn in float64 then cast."""
    if len(input_names) != arch.n_blocks or len(scalar_names) != arch.n_scalars:
        raise ValueError("channel names do not match the architecture")
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        elif name.startswith("fc"):
            params[name] = xavier_init(shape[0], shape[1], rng, shape)
        else:
            _, c_out, c_in, k = shape
            params[name] = xavier_init(c_in * k, c_out * k, rng, shape)
    params = {k: v.astype(dtype) for k, v in params.items()}
    return CnnModel(arch, params, norm, tuple(input_names), tuple(scalar_names), target_name)


def forward_batch(model: CnnModel, x: np.ndarray, s: np.ndarray, training: bool = False,
                  rng: Optional[np.random.Generator] = None, keep_cache: bool = False):
    """Forward pass on normalised inputs x (B, blocks, L) and scalars s (B, n_scalars).

    Returns (output (B, out_len), cache). The cache is None unless ``keep_cache``.
    """
    arch, p = model.arch, model.params
    if x.ndim != 3 or x.shape[1:] != (arch.n_blocks, arch.window_len) or s.shape != (x.shape[0], arch.n_scalars):
        raise ValueError(f"input shapes {x.shape}, {s.shape} do not match architecture")
    if training and arch.dropout > 0 and rng is None:
        raise ValueError("training with dropout needs an rng")
    cache = {"shapes": {}, "branches": []} if keep_cache else None
    x0 = x[:, :, None, :]
    outputs = []
    for k in arch.kernel_sizes:
        h = x0
        layers = []
        for layer in range(len(arch.channel_plan)):
            z, cols = conv_forward(h, p[f"branch{k}.conv{layer}.weight"], p[f"branch{k}.conv{layer}.bias"])
            a = np.maximum(z, 0.0)
            mask = None
            if layer == len(arch.channel_plan) - 1:
                a, mask = dropout(a, arch.dropout, training, rng)
            pre_pool_len = a.shape[-1]
            h = avg_pool(a)
            if keep_cache:
                layers.append((cols, z > 0, mask, pre_pool_len))
                cache["shapes"][f"branch{k}.stage{layer}"] = h.shape
        outputs.append(h)
        if keep_cache:
            cache["branches"].append(layers)
    residual = avg_pool(avg_pool(avg_pool(x0)))
    blocks = np.concatenate(outputs + [residual], axis=2)
    flat = blocks.reshape(x.shape[0], -1)
    feat = np.concatenate([flat, s], axis=1)
    h1 = feat @ p["fc1.weight"] + p["fc1.bias"]
    r1 = np.maximum(h1, 0.0)
    out = r1 @ p["fc2.weight"] + p["fc2.bias"]
    if keep_cache:
        cache["shapes"].update({"residual": residual.shape, "block": blocks.shape, "flat": flat.shape,
                                "concat": feat.shape, "hidden": h1.shape, "output": out.shape})
        cache.update(feat=feat, h1_pos=h1 > 0, r1=r1, block_shape=blocks.shape)
    return out, cache


def backward(model: CnnModel, cache: dict, dout: np.ndarray) -> dict:
    """Gradients of a scalar loss given dLoss/dOutput (B, out_len)."""
    arch, p = model.arch, model.params
    grads = {}
    grads["fc2.weight"] = cache["r1"].T @ dout
    grads["fc2.bias"] = dout.sum(axis=0)
    dh1 = (dout @ p["fc2.weight"].T) * cache["h1_pos"]
    grads["fc1.weight"] = cache["feat"].T @ dh1
    grads["fc1.bias"] = dh1.sum(axis=0)
    dfeat = dh1 @ p["fc1.weight"].T
    dblocks = dfeat[:, :arch.flat_len].reshape(cache["block_shape"])
    width = arch.channel_plan[-1]
    for j, k in enumerate(arch.kernel_sizes):
        dh = dblocks[:, :, j * width:(j + 1) * width, :]
        for layer in reversed(range(len(arch.channel_plan))):
            cols, active, mask, pre_pool_len = cache["branches"][j][layer]
            da = avg_pool_backward(dh, pre_pool_len)
            if mask is not None:
                da = da * mask
            dz = da * active
            dh, dw, db = conv_backward(dz, cols, p[f"branch{k}.conv{layer}.weight"], need_dx=layer > 0)
            grads[f"branch{k}.conv{layer}.weight"] = dw
            grads[f"branch{k}.conv{layer}.bias"] = db
    return grads


def mse_loss(out: np.ndarray, target: np.ndarray):
    """Mean squared error over every output element, and its gradient."""
    diff = out - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


# --- encoding windows -------------------------------------------------------

def encode(model: CnnModel, arrays: WindowArrays):
    """Normalise raw window arrays with the model's ranges -> (x, s, y-or-None)."""
    if model.norm is None:
        raise ValueError("model has no normalisation parameters")
    norm = model.norm
    x = np.stack([norm.normalize(name, arrays.channels[:, i, :]) for i, name in enumerate(model.input_names)], axis=1)
    if model.scalar_names:
        s = np.stack([norm.normalize(name, arrays.scalars[:, i]) for i, name in enumerate(model.scalar_names)], axis=1)
    else:
        s = np.empty((x.shape[0], 0))
    y = None if arrays.target is None else norm.normalize(model.target_name, arrays.target)
    dtype = model.dtype
    return x.astype(dtype, copy=False), s.astype(dtype, copy=False), None if y is None else y.astype(dtype, copy=False)


def predict_normalized(model: CnnModel, x: np.ndarray, s: np.ndarray, batch_size: int = 512) -> np.ndarray:
    out = [forward_batch(model, x[i:i + batch_size], s[i:i + batch_size])[0] for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(out) if out else np.empty((0, model.arch.out_len))


def predict_arrays(model: CnnModel, arrays: WindowArrays) -> np.ndarray:
    """Denormalised power estimates (W), shape (N, out_len)."""
    x, s, _ = encode(model, arrays)
    return model.norm.denormalize(model.target_name, predict_normalized(model, x, s).astype(np.float64))


def predict_windows(model: CnnModel, windows) -> np.ndarray:
    return predict_arrays(model, stack_windows(windows))


def forward(model: CnnModel, window: PartitionedWindow, training: bool = False,
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Normalised 10-value estimate for one window."""
    x, s, _ = encode(model, stack_windows([window]))
    return forward_batch(model, x, s, training, rng)[0][0]


def conv_features(model: CnnModel, x: np.ndarray) -> np.ndarray:
    """Inference-mode flattened block features (B, flat_len) of normalised inputs."""
    arch, p = model.arch, model.params
    x0 = x[:, :, None, :]
    outputs = []
    for k in arch.kernel_sizes:
        h = x0
        for layer in range(len(arch.channel_plan)):
            z, _ = conv_forward(h, p[f"branch{k}.conv{layer}.weight"], p[f"branch{k}.conv{layer}.bias"])
            h = avg_pool(np.maximum(z, 0.0))
        outputs.append(h)
    outputs.append(avg_pool(avg_pool(avg_pool(x0))))
    return np.concatenate(outputs, axis=2).reshape(x.shape[0], -1)


def head(model: CnnModel, flat: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Fully connected layers on flattened features plus normalised scalars."""
    p = model.params
    feat = np.concatenate([flat, s], axis=1)
    return np.maximum(feat @ p["fc1.weight"] + p["fc1.bias"], 0.0) @ p["fc2.weight"] + p["fc2.bias"]


def shape_ledger(model: CnnModel, x: np.ndarray, s: np.ndarray) -> dict:
    """Every intermediate tensor shape of a forward pass."""
    return forward_batch(model, x, s, keep_cache=True)[1]["shapes"]
