"""Partitioning, min-max normalisation and the 10 Hz -> 1 Hz re-sampler."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .core import (
    SCALAR_CHANNELS,
    VARYING_CHANNELS,
    WINDOW_HZ,
    WINDOW_SAMPLES,
    WINDOW_SECONDS,
    PartitionedWindow,
    TimeSeries,
)

# Column order of the re-sampled feature table handed to the fine tuner.
RESAMPLED_COLUMNS = VARYING_CHANNELS + SCALAR_CHANNELS
FINE_TUNER_COLUMNS = RESAMPLED_COLUMNS + ("cnn_est",)


@dataclass(frozen=True)
class ChannelRange:
    name: str
    min: float
    max: float

    def __post_init__(self) -> None:
        if not self.max >= self.min:
            raise ValueError(f"channel {self.name}: max < min")

    @property
    def degenerate(self) -> bool:
        return self.max == self.min


class Normalized(NamedTuple):
    values: np.ndarray
    degenerate: bool


def normalize(z, p: ChannelRange) -> Normalized:
    """Min-max scale to [0, 1]; a degenerate (constant) channel maps to zeros."""
    z = np.asarray(z, dtype=np.float64)
    if p.degenerate:
        return Normalized(np.zeros_like(z), True)
    return Normalized((z - p.min) / (p.max - p.min), False)


def denormalize(zhat, p: ChannelRange) -> np.ndarray:
    zhat = np.asarray(zhat, dtype=np.float64)
    if p.degenerate:
        return np.full_like(zhat, p.min)
    return zhat * (p.max - p.min) + p.min


@dataclass(frozen=True)
class NormalizationParams:
    """Per-channel ranges, recorded from training data only."""

    channels: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(self.channels))

    @classmethod
    def fit(cls, arrays: Mapping[str, np.ndarray]) -> "NormalizationParams":
        return cls(tuple(ChannelRange(name, float(np.min(a)), float(np.max(a))) for name, a in arrays.items()))

    @property
    def names(self) -> tuple:
        return tuple(c.name for c in self.channels)

    def __getitem__(self, name: str) -> ChannelRange:
        for c in self.channels:
            if c.name == name:
                return c
        raise KeyError(name)

    def normalize(self, name: str, z) -> np.ndarray:
        return normalize(z, self[name]).values

    def denormalize(self, name: str, zhat) -> np.ndarray:
        return denormalize(zhat, self[name])


def partition(series: Mapping[str, object]) -> list:
    """Cut aligned 10 Hz channels into consecutive 100-sample windows.

    ``series`` maps the five varying channel names plus ``env_temp`` and
    ``batt_soc`` (and optionally a 10 Hz ``act_pow``) to TimeSeries or arrays
    of equal length. Scalars are taken at each window's first sample; the
    target becomes per-second means. An incomplete tail is dropped.
    """
    arrays = {k: np.asarray(v.values if isinstance(v, TimeSeries) else v, dtype=np.float64)
              for k, v in series.items()}
    lengths = {a.size for a in arrays.values()}
    if len(lengths) != 1:
        raise ValueError(f"channel length mismatch: {sorted(lengths)}")
    missing = set(VARYING_CHANNELS + SCALAR_CHANNELS) - arrays.keys()
    if missing:
        raise ValueError(f"missing channels: {sorted(missing)}")
    n = lengths.pop() // WINDOW_SAMPLES
    target = arrays.get("act_pow")
    windows = []
    for j in range(n):
        sl = slice(j * WINDOW_SAMPLES, (j + 1) * WINDOW_SAMPLES)
        windows.append(PartitionedWindow(
            *(arrays[name][sl] for name in VARYING_CHANNELS),
            env_temp=arrays["env_temp"][sl.start],
            batt_soc=arrays["batt_soc"][sl.start],
            act_pow=None if target is None else target[sl].reshape(WINDOW_SECONDS, WINDOW_HZ).mean(axis=1),
            t0_s=float(j * WINDOW_SECONDS),
        ))
    return windows


def per_second_mean(x: np.ndarray) -> np.ndarray:
    """Mean of each consecutive 10-sample second along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(x.shape[:-1] + (-1, WINDOW_HZ)).mean(axis=-1)


def resample_window(w: PartitionedWindow) -> np.ndarray:
    """1 Hz feature table (10 x 7): varying channels averaged per second, scalars repeated."""
    table = np.empty((WINDOW_SECONDS, len(RESAMPLED_COLUMNS)))
    table[:, :len(VARYING_CHANNELS)] = per_second_mean(w.channels()).T
    table[:, len(VARYING_CHANNELS)] = w.env_temp
    table[:, len(VARYING_CHANNELS) + 1] = w.batt_soc
    return table


def resample_windows(windows: Sequence[PartitionedWindow]) -> np.ndarray:
    """Stacked re-sampled tables, shape (N * 10, 7)."""
    if not windows:
        return np.empty((0, len(RESAMPLED_COLUMNS)))
    return np.concatenate([resample_window(w) for w in windows])


def fine_tuner_rows(resampled: np.ndarray, cnn_estimate: np.ndarray) -> np.ndarray:
    return np.column_stack([resampled, np.asarray(cnn_estimate, dtype=np.float64).reshape(-1)])


class WindowArrays(NamedTuple):
    channels: np.ndarray  # (N, 5, 100), grade in place of elevation
    scalars: np.ndarray  # (N, 2): env_temp, batt_soc
    target: np.ndarray  # (N, 10) or None


def stack_windows(windows: Iterable[PartitionedWindow]) -> WindowArrays:
    windows = list(windows)
    if not windows:
        raise ValueError("no windows")
    channels = np.stack([w.channels() for w in windows])
    scalars = np.array([[w.env_temp, w.batt_soc] for w in windows], dtype=np.float64)
    target = None
    if all(w.act_pow is not None for w in windows):
        target = np.stack([w.act_pow for w in windows])
    return WindowArrays(channels, scalars, target)


def fit_normalization(arrays: WindowArrays, channel_names: Sequence[str] = VARYING_CHANNELS,
                      scalar_names: Sequence[str] = SCALAR_CHANNELS,
                      target_name: str = "act_pow") -> NormalizationParams:
    ranges = {name: arrays.channels[:, i, :] for i, name in enumerate(channel_names)}
    ranges.update({name: arrays.scalars[:, i] for i, name in enumerate(scalar_names)})
    if arrays.target is None:
        raise ValueError("training windows need act_pow to fit the target range")
    ranges[target_name] = arrays.target
    return NormalizationParams.fit(ranges)
