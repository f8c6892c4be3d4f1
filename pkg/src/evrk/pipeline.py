"""PCE -> re-sampler -> fine tuner -> SOC calculator, with SOC feedback.

At inference the SOC computed after each window becomes the SOC input of the
next window. Convolutional features do not depend on SOC, so they are
computed for the whole trip in one batch; only the fully connected head, the
fine tuner and the SOC update run window by window.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import SCALAR_CHANNELS, WINDOW_SECONDS, PartitionedWindow, VehicleParams
from .pce.network import CnnModel, conv_features, encode, head, predict_arrays
from .prep import RESAMPLED_COLUMNS, fine_tuner_rows, resample_window, resample_windows, stack_windows

_SOC_COLUMN = RESAMPLED_COLUMNS.index("batt_soc")
TRIP_ESTIMATE_HEADER = ("second", "est_pow_W", "cum_energy_J", "soc_percent")


@dataclass(frozen=True)
class BatteryState:
    soc_percent: float
    capacity_J: float = VehicleParams().battery_capacity_J
    saturated: bool = False
    unclamped_soc: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.capacity_J > 0:
            raise ValueError("capacity must be positive")
        if not 0.0 <= self.soc_percent <= 100.0:
            raise ValueError(f"SOC {self.soc_percent} outside [0, 100]")


def soc_update(state: BatteryState, est_pow) -> BatteryState:
    """SOC after drawing ``est_pow`` (W, one value per second) from the battery."""
    energy = float(np.sum(np.asarray(est_pow, dtype=np.float64)))
    raw = state.soc_percent - energy / state.capacity_J * 100.0
    clamped = min(max(raw, 0.0), 100.0)
    return BatteryState(clamped, state.capacity_J, clamped != raw, raw)


@dataclass
class TripEstimate:
    power_W: np.ndarray  # per second
    cum_energy_J: np.ndarray  # per second, running sum of power x 1 s
    soc_percent: np.ndarray  # per second, clamped
    window_soc: np.ndarray  # SOC before each window, then the final SOC
    initial_soc: float
    saturated: bool = False
    technique: str = "cnn-bdt"
    meta: dict = field(default_factory=dict)

    @property
    def final_soc(self) -> float:
        return float(self.window_soc[-1])

    @property
    def energy_J(self) -> float:
        return float(self.cum_energy_J[-1]) if self.cum_energy_J.size else 0.0

    def write_csv(self, path: Union[str, Path], header_comment: Optional[str] = None,
                  with_technique: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                for line in header_comment.splitlines():
                    fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRIP_ESTIMATE_HEADER + (("technique",) if with_technique else ()))
            for i in range(self.power_W.size):
                row = [i, repr(float(self.power_W[i])), repr(float(self.cum_energy_J[i])),
                       repr(float(self.soc_percent[i]))]
                writer.writerow(row + ([self.technique] if with_technique else []))


class IdentityFineTuner:
    """Test double that returns the CNN estimate column unchanged."""

    def predict_rows(self, rows: np.ndarray) -> np.ndarray:
        return np.asarray(rows)[:, -1].copy()


def _check_models(cnn: CnnModel) -> None:
    if cnn.norm is None:
        raise ValueError("CNN model carries no normalisation parameters")
    if tuple(cnn.scalar_names) != SCALAR_CHANNELS:
        raise ValueError("the pipeline needs a CNN fed with env_temp and batt_soc")
    missing = [n for n in tuple(cnn.input_names) + tuple(cnn.scalar_names) + (cnn.target_name,)
               if n not in cnn.norm.names]
    if missing:
        raise ValueError(f"normalisation parameters lack {missing}")


def estimate_trip(cnn: CnnModel, bdt, windows: Sequence[PartitionedWindow], initial_soc: float,
                  capacity_J: float = VehicleParams().battery_capacity_J, feedback: bool = True,
                  finetune: bool = True) -> TripEstimate:
    """Estimate per-second power and SOC over an ordered trip.

    With ``feedback`` the SOC input of every window after the first is the
    SOC computed from the estimates so far (the window's own SOC field is
    ignored). Without it each window keeps its recorded SOC and windows are
    independent. ``bdt`` may be None when ``finetune`` is False.
    """
    windows = list(windows)
    if not windows:
        raise ValueError("a trip needs at least one window")
    _check_models(cnn)
    if finetune and bdt is None:
        raise ValueError("fine tuning requested without a fine-tuner model")
    arrays = stack_windows(windows)
    x, s, _ = encode(cnn, arrays)
    flat = conv_features(cnn, x)
    norm = cnn.norm
    temp_n = s[:, 0]

    state = BatteryState(float(initial_soc), capacity_J)
    saturated = False
    powers, socs = [], [state.soc_percent]
    raw_soc = state.soc_percent
    for i, w in enumerate(windows):
        soc_in = state.soc_percent if feedback else w.batt_soc
        scalars = np.array([[temp_n[i], norm.normalize("batt_soc", soc_in)]], dtype=cnn.dtype)
        est = norm.denormalize(cnn.target_name, head(cnn, flat[i:i + 1], scalars).astype(np.float64))[0]
        if finetune:
            table = resample_window(w)
            table[:, _SOC_COLUMN] = soc_in
            est = np.asarray(bdt.predict_rows(fine_tuner_rows(table, est)), dtype=np.float64)
        powers.append(est)
        state = soc_update(state, est)
        raw_soc -= float(np.sum(est)) / capacity_J * 100.0
        saturated |= state.saturated
        socs.append(state.soc_percent)

    power = np.concatenate(powers)
    cum = np.cumsum(power)
    # Per-second SOC inside each window, measured from that window's starting SOC.
    start = np.repeat(np.array(socs[:-1]), WINDOW_SECONDS)
    within = cum - np.repeat(np.concatenate(([0.0], cum[WINDOW_SECONDS - 1:-1:WINDOW_SECONDS])), WINDOW_SECONDS)
    per_second = np.clip(start - within / capacity_J * 100.0, 0.0, 100.0)
    return TripEstimate(power, cum, per_second, np.array(socs), float(initial_soc), saturated,
                        "cnn-bdt" if finetune else "cnn",
                        {"unclamped_final_soc": raw_soc, "feedback": feedback})


def estimate_window_latency(cnn: CnnModel, bdt, window: PartitionedWindow, finetune: bool = True) -> float:
    """Wall-clock seconds for one window's full pipeline pass."""
    start = time.perf_counter()
    estimate_trip(cnn, bdt, [window], window.batt_soc, finetune=finetune)
    return time.perf_counter() - start


def median_window_latency(cnn: CnnModel, bdt, window: PartitionedWindow, repeats: int = 5,
                          finetune: bool = True) -> float:
    estimate_window_latency(cnn, bdt, window, finetune)  # warm-up
    return statistics.median(estimate_window_latency(cnn, bdt, window, finetune) for _ in range(repeats))


def fine_tuner_training_set(cnn: CnnModel, windows: Sequence[PartitionedWindow]):
    """Fine-tuner rows (N*10, 8) from CNN estimates on recorded inputs, and 1 Hz targets."""
    arrays = stack_windows(windows)
    if arrays.target is None:
        raise ValueError("windows need act_pow targets")
    est = predict_arrays(cnn, arrays)
    return fine_tuner_rows(resample_windows(windows), est), arrays.target.reshape(-1)
