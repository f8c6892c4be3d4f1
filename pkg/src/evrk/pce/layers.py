"""Layer primitives with hand-written backward passes.

Tensors are laid out (batch, group, channel, length). A group is one feature
extraction block; every block has its own weights, so convolutions are
grouped. Weights are (group, out_channels, in_channels, kernel).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv1d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-length 1D cross-correlation of a (C_in, L) input.

    The kernel is not flipped; each side is zero padded by (K - 1) / 2.
    """
    x = np.asarray(x, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.ndim != 2 or kernels.ndim != 3 or kernels.shape[1] != x.shape[0] or bias.shape != kernels.shape[:1]:
        raise ValueError(f"shape mismatch: input {x.shape}, kernels {kernels.shape}, bias {bias.shape}")
    out, _ = conv_forward(x[None, None], kernels[None], bias[None])
    return out[0, 0]


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Grouped convolution. Returns the output and the im2col buffer for backward."""
    n, g, c, length = x.shape
    _, o, c_w, k = w.shape
    if c_w != c or k % 2 == 0:
        raise ValueError(f"kernel {w.shape} incompatible with input {x.shape}")
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (0, 0), (pad, pad)))
    cols = sliding_window_view(xp, k, axis=-1)  # (n, g, c, L, k)
    cols = cols.transpose(1, 0, 3, 2, 4).reshape(g, n * length, c * k)
    out = np.matmul(cols, w.reshape(g, o, c * k).transpose(0, 2, 1))  # (g, n*L, o)
    out = out.reshape(g, n, length, o).transpose(1, 0, 3, 2)
    return out + b[None, :, :, None], cols


def conv_backward(dout: np.ndarray, cols: np.ndarray, w: np.ndarray, need_dx: bool = True):
    n, g, o, length = dout.shape
    _, _, c, k = w.shape
    d2 = dout.transpose(1, 0, 3, 2).reshape(g, n * length, o)
    dw = np.matmul(d2.transpose(0, 2, 1), cols).reshape(w.shape)
    db = dout.sum(axis=(0, 3))
    if not need_dx:
        return None, dw, db
    dcols = np.matmul(d2, w.reshape(g, o, c * k))  # (g, n*L, c*k)
    dcols = dcols.reshape(g, n, length, c, k).transpose(1, 0, 3, 2, 4)
    pad = k // 2
    dxp = np.zeros((n, g, c, length + 2 * pad), dtype=dout.dtype)
    for j in range(k):
        dxp[..., j:j + length] += dcols[..., j]
    return dxp[..., pad:pad + length], dw, db


def avg_pool(x: np.ndarray) -> np.ndarray:
    """Window 2, stride 2 average over the last axis; an odd trailing sample is dropped."""
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    length = x.shape[-1]
    if length < 2:
        raise ValueError("avg_pool needs length >= 2")
    half = length // 2
    return 0.5 * (x[..., 0:2 * half:2] + x[..., 1:2 * half:2])


def avg_pool_backward(dout: np.ndarray, length: int) -> np.ndarray:
    dx = np.zeros(dout.shape[:-1] + (length,), dtype=dout.dtype)
    spread = 0.5 * dout
    dx[..., 0:2 * dout.shape[-1]:2] = spread
    dx[..., 1:2 * dout.shape[-1]:2] = spread
    return dx


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def dropout(x: np.ndarray, p: float, training: bool, rng: np.random.Generator):
    """Inverted dropout: survivors are scaled by 1/(1-p) so inference is the identity.

    Returns the output and the scale mask (None when nothing was dropped).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    mask = ((rng.random(x.shape) >= p) / (1.0 - p)).astype(x.dtype, copy=False)
    return x * mask, mask


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def xavier_init(fan_in: int, fan_out: int, rng: np.random.Generator, shape=None) -> np.ndarray:
    """Uniform Glorot sample on [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError("fan_in and fan_out must be >= 1")
    bound = xavier_bound(fan_in, fan_out)
    return rng.uniform(-bound, bound, size=shape if shape is not None else (fan_in, fan_out))
