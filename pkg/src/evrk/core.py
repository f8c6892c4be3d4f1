"""Domain types shared across the package.

All physical quantities are SI (W, m/s, m/s^2, J, m); percentages are 0-100 reals.
Containers are frozen and hold read-only float64 arrays, so they can be shared
freely between threads and processes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

WINDOW_HZ = 10
WINDOW_SECONDS = 10
WINDOW_SAMPLES = WINDOW_HZ * WINDOW_SECONDS

# Varying channels of a window, in model order.
VARYING_CHANNELS = ("veh_sp", "road_el", "veh_acc", "aux_ld", "wind_sp")
SCALAR_CHANNELS = ("env_temp", "batt_soc")
TARGET_CHANNEL = "act_pow"

# Below this travelled distance per sample (m) a grade cannot be recovered from
# elevation differences; the previous grade is carried instead.
_MIN_STEP_DISTANCE = 1e-3


class Unit(str, enum.Enum):
    MPS = "m/s"
    MPS2 = "m/s^2"
    PERCENT = "%"
    WATT = "W"
    CELSIUS = "degC"
    METRE = "m"
    FRACTION = "1"


def _frozen_array(values: Any) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    sample_rate_hz: float
    unit: Unit

    def __post_init__(self) -> None:
        arr = _frozen_array(self.values)
        if arr.size == 0:
            raise ValueError("time series must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("time series contains non-finite values")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "unit", Unit(self.unit))

    def __len__(self) -> int:
        return self.values.size

    @property
    def duration_s(self) -> float:
        return self.values.size / self.sample_rate_hz


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: Optional[str] = None

    def __bool__(self) -> bool:
        return self.ok


class InvalidWindow(ValueError):
    pass


def validate_window(w: Any) -> ValidationResult:
    """Check the PartitionedWindow invariants.

    Accepts a window or a plain mapping of its fields, so that broken inputs
    can be inspected without constructing a window. The first violated
    invariant is reported by name: "channel length", "target length",
    "non-finite" or "soc range".
    """
    get = w.get if isinstance(w, Mapping) else lambda k, d=None: getattr(w, k, d)
    for name in VARYING_CHANNELS:
        arr = np.asarray(get(name), dtype=np.float64).reshape(-1)
        if arr.size != WINDOW_SAMPLES:
            return ValidationResult(False, "channel length")
        if not np.all(np.isfinite(arr)):
            return ValidationResult(False, "non-finite")
    target = get("act_pow")
    if target is not None:
        arr = np.asarray(target, dtype=np.float64).reshape(-1)
        if arr.size != WINDOW_SECONDS:
            return ValidationResult(False, "target length")
        if not np.all(np.isfinite(arr)):
            return ValidationResult(False, "non-finite")
    for name in SCALAR_CHANNELS:
        value = get(name)
        if np.ndim(value) != 0 or not math.isfinite(float(value)):
            return ValidationResult(False, "non-finite")
    if not 0.0 <= float(get("batt_soc")) <= 100.0:
        return ValidationResult(False, "soc range")
    return ValidationResult(True)


@dataclass(frozen=True)
class PartitionedWindow:
    """One 10 s, 10 Hz slice of the seven model inputs plus the 1 Hz target.

    ``road_el`` is the road elevation in metres; learners consume the grade
    derived from it (see :attr:`grade`). ``t0_s`` is the window start time
    relative to its trip start.
    """

    veh_sp: np.ndarray
    road_el: np.ndarray
    veh_acc: np.ndarray
    aux_ld: np.ndarray
    wind_sp: np.ndarray
    env_temp: float
    batt_soc: float
    act_pow: Optional[np.ndarray] = None
    t0_s: float = 0.0

    def __post_init__(self) -> None:
        for name in VARYING_CHANNELS:
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        if self.act_pow is not None:
            object.__setattr__(self, "act_pow", _frozen_array(self.act_pow))
        object.__setattr__(self, "env_temp", float(self.env_temp))
        object.__setattr__(self, "batt_soc", float(self.batt_soc))
        object.__setattr__(self, "t0_s", float(self.t0_s))
        result = validate_window(self)
        if not result:
            raise InvalidWindow(result.reason)

    @property
    def grade(self) -> np.ndarray:
        return grade_from_elevation(self.road_el, self.veh_sp, 1.0 / WINDOW_HZ)

    def channels(self) -> np.ndarray:
        """The five varying channels as a (5, 100) array, grade in place of elevation."""
        return np.stack([self.veh_sp, self.grade, self.veh_acc, self.aux_ld, self.wind_sp])

    def with_soc(self, soc: float) -> "PartitionedWindow":
        return PartitionedWindow(
            self.veh_sp, self.road_el, self.veh_acc, self.aux_ld, self.wind_sp,
            self.env_temp, soc, self.act_pow, self.t0_s,
        )


def grade_from_elevation(elevation: np.ndarray, speed: np.ndarray, dt: float) -> np.ndarray:
    """Recover road grade (fraction) from elevation by backward differencing.

    grade[n] = (h[n] - h[n-1]) / (v[n] * dt). Samples where the vehicle barely
    moves carry the previous grade; leading undefined samples take the first
    defined one, and an all-undefined window is flat.
    """
    h = np.asarray(elevation, dtype=np.float64)
    v = np.asarray(speed, dtype=np.float64)
    step = v * dt
    grade = np.full(h.shape, np.nan)
    moving = step[1:] > _MIN_STEP_DISTANCE
    grade[1:][moving] = (h[1:][moving] - h[:-1][moving]) / step[1:][moving]
    defined = ~np.isnan(grade)
    if not defined.any():
        return np.zeros_like(h)
    idx = np.where(defined, np.arange(h.size), 0)
    np.maximum.accumulate(idx, out=idx)
    first = int(np.argmax(defined))
    idx[:first] = first
    return grade[idx]


def elevation_from_grade(grade: np.ndarray, speed: np.ndarray, dt: float, h0: float = 0.0) -> np.ndarray:
    h = np.empty(len(grade))
    steps = np.asarray(grade) * np.asarray(speed) * dt
    h[0] = h0
    np.cumsum(steps[1:], out=h[1:])
    h[1:] += h0
    return h


@dataclass(frozen=True)
class VehicleParams:
    """Nissan Leaf-like defaults.

    battery_capacity_J defaults to 24 kWh; rated_power_W caps battery
    discharge before temperature/SOC derating.
    """

    mass_kg: float = 1521.0
    frontal_area_m2: float = 2.27
    drag_coeff: float = 0.28
    rolling_resist_coeff: float = 0.015
    mass_factor: float = 1.1
    trans_eff: float = 0.9
    motor_eff: float = 0.9
    elec_eff: float = 0.8
    battery_capacity_J: float = 8.64e7
    accessory_base_W: float = 0.0
    rated_power_W: float = 80e3

    def __post_init__(self) -> None:
        for name in ("trans_eff", "motor_eff", "elec_eff"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {value}")
        for name in ("mass_kg", "frontal_area_m2", "battery_capacity_J", "rated_power_W"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mass_factor < 1.0:
            raise ValueError("mass_factor must be >= 1")
        if self.drag_coeff < 0 or self.rolling_resist_coeff < 0 or self.accessory_base_W < 0:
            raise ValueError("drag, rolling resistance and accessory base must be non-negative")


@dataclass(frozen=True)
class EnvConditions:
    air_density: float = 1.2
    gravity: float = 9.81
    grade_profile: np.ndarray = field(default_factory=lambda: _frozen_array([]))
    wind_profile: np.ndarray = field(default_factory=lambda: _frozen_array([]))
    temp_C: float = 20.0

    def __post_init__(self) -> None:
        if not self.air_density > 0 or not self.gravity > 0:
            raise ValueError("air_density and gravity must be positive")
        grade = _frozen_array(self.grade_profile)
        if grade.size and np.max(np.abs(grade)) > 0.25:
            raise ValueError("grade values must lie within [-0.25, 0.25]")
        object.__setattr__(self, "grade_profile", grade)
        object.__setattr__(self, "wind_profile", _frozen_array(self.wind_profile))


@dataclass(frozen=True)
class TripSpan:
    """A contiguous run of windows from one drive (one generation grid cell)."""

    label: str
    start: int
    stop: int
    initial_soc: float
    final_soc: Optional[float] = None

    def __len__(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class Dataset:
    windows: tuple
    provenance: str = ""
    norm_params: Any = None
    trips: tuple = ()
    warnings: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "windows", tuple(self.windows))
        object.__setattr__(self, "trips", tuple(self.trips))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    def __len__(self) -> int:
        return len(self.windows)

    def trip_windows(self, trip: TripSpan) -> tuple:
        return self.windows[trip.start:trip.stop]

    def subset(self, indices: Sequence[int], provenance: Optional[str] = None) -> "Dataset":
        return Dataset(
            tuple(self.windows[i] for i in indices),
            provenance if provenance is not None else self.provenance,
            self.norm_params,
        )


def infer_trips(windows: Sequence[PartitionedWindow]) -> tuple:
    """Split an ordered window sequence into trips wherever time is not continuous."""
    trips = []
    start = 0
    for i in range(1, len(windows) + 1):
        if i == len(windows) or windows[i].t0_s != windows[i - 1].t0_s + WINDOW_SECONDS:
            trips.append(TripSpan(f"trip{len(trips)}", start, i, windows[start].batt_soc))
            start = i
    return tuple(trips)
