"""Synthetic 10 Hz driving data with ground-truth battery power.

Stands in for a full vehicle simulator: drive cycles come from bundled
breakpoint tables or seeded generators, power from longitudinal dynamics with a
temperature/SOC discharge cap, and SOC from integrating that power.

Grade profile shapes below are our own choices (flat, rolling, uphill- and
downhill-biased segment profiles), not tabulated reference data.
"""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    WINDOW_HZ,
    WINDOW_SAMPLES,
    WINDOW_SECONDS,
    Dataset,
    EnvConditions,
    PartitionedWindow,
    TimeSeries,
    TripSpan,
    Unit,
    VehicleParams,
    elevation_from_grade,
    grade_from_elevation,
)
from .physics import motive_power, power_cap, regen_fraction, road_load

__all__ = [
    "BEAUFORT_SCALE",
    "BeaufortClass",
    "GenerationGrid",
    "Profile",
    "classify_wind",
    "generate",
    "ground_truth_power",
    "regen_fraction",
]

log = logging.getLogger(__name__)

DT = 1.0 / WINDOW_HZ
MAX_CATCHUP_ACCEL = 2.5  # m/s^2 while recovering from a power-limited stretch


@dataclass(frozen=True)
class BeaufortClass:
    index: int
    name: str
    low_mps: float
    high_mps: float  # exclusive; inf for the last class

    def contains(self, speed: float) -> bool:
        return self.low_mps <= speed < self.high_mps

    @property
    def typical_mps(self) -> float:
        if math.isinf(self.high_mps):
            return self.low_mps
        return 0.5 * (self.low_mps + self.high_mps)


# Published lower bounds; each class runs up to the next lower bound so the
# classes tile [0, inf) with no gaps.
_BEAUFORT_LOWER = (
    ("Calm", 0.0), ("Light Air", 0.5), ("Light Breeze", 1.6), ("Gentle Breeze", 3.4),
    ("Moderate Breeze", 5.5), ("Fresh Breeze", 8.0), ("Strong Breeze", 10.8),
    ("Near Gale", 13.9), ("Gale", 17.2), ("Strong Gale", 20.8), ("Storm", 24.5),
    ("Violent Storm", 28.5), ("Hurricane", 32.7),
)
BEAUFORT_SCALE = tuple(
    BeaufortClass(i, name, low, _BEAUFORT_LOWER[i + 1][1] if i + 1 < len(_BEAUFORT_LOWER) else math.inf)
    for i, (name, low) in enumerate(_BEAUFORT_LOWER)
)
DRIVABLE_WIND_CLASSES = BEAUFORT_SCALE[:8]


def classify_wind(speed_mps: float) -> BeaufortClass:
    speed = float(speed_mps)
    if not math.isfinite(speed) or speed < 0:
        raise ValueError(f"wind speed must be finite and non-negative, got {speed_mps}")
    for cls in reversed(BEAUFORT_SCALE):
        if speed >= cls.low_mps:
            return cls
    raise AssertionError("unreachable")


def ground_truth_power(v, dvdt, grade, wind, aux_W, temp_C, soc, params: VehicleParams,
                       env: EnvConditions, derate: bool = True):
    """Battery power (W) of the simulated vehicle.

    Motive power plus auxiliary load plus the vehicle's accessory baseline,
    capped at the temperature/SOC dependent discharge limit when ``derate``.
    """
    power = motive_power(v, dvdt, grade, wind, np.add(aux_W, params.accessory_base_W), params, env)
    if derate:
        power = np.minimum(power, power_cap(temp_C, soc, params))
        return float(power) if np.ndim(power) == 0 else power
    return power


# --- drive cycles -----------------------------------------------------------

# UDDS-like schedule: (time s, speed km/h) breakpoints, linearly interpolated.
# Shape follows the urban dynamometer schedule (1369 s, 91.2 km/h peak) but the
# points are our own approximation, not the regulatory trace.
UDDS_LIKE_BREAKPOINTS = (
    (0, 0), (20, 0), (25, 5), (35, 24), (48, 48), (60, 50), (80, 40), (100, 48), (118, 30),
    (125, 0), (163, 0), (175, 25), (190, 60), (200, 80), (210, 88), (240, 90), (260, 91.2),
    (290, 85), (310, 80), (330, 45), (340, 0), (360, 0), (370, 20), (380, 40), (395, 52),
    (410, 40), (430, 56), (445, 0), (460, 0), (470, 30), (480, 42), (500, 48), (515, 32),
    (525, 0), (545, 0), (560, 35), (575, 56), (590, 50), (600, 25), (615, 0), (630, 0),
    (640, 20), (655, 40), (670, 48), (690, 35), (700, 0), (715, 0), (730, 30), (745, 48),
    (760, 44), (775, 52), (790, 30), (800, 0), (820, 0), (835, 35), (850, 48), (870, 40),
    (885, 25), (895, 0), (910, 0), (925, 30), (945, 50), (960, 40), (975, 20), (985, 0),
    (1000, 0), (1015, 30), (1030, 45), (1050, 45), (1065, 25), (1075, 0), (1090, 0),
    (1105, 25), (1120, 40), (1140, 35), (1155, 0), (1170, 0), (1185, 30), (1200, 48),
    (1220, 40), (1235, 15), (1245, 0), (1260, 0), (1275, 25), (1290, 40), (1305, 32),
    (1320, 20), (1335, 10), (1350, 0), (1369, 0),
)


@dataclass(frozen=True)
class Profile:
    name: str
    series: TimeSeries

    @property
    def values(self) -> np.ndarray:
        return self.series.values


def _from_breakpoints(name: str, breakpoints, kmh: bool = True) -> Profile:
    t, v = np.asarray(breakpoints, dtype=np.float64).T
    if kmh:
        v = v / 3.6
    grid = np.arange(0.0, t[-1] + 1e-9, DT)
    return Profile(name, TimeSeries(np.interp(grid, t, v), WINDOW_HZ, Unit.MPS))


def udds_like() -> Profile:
    return _from_breakpoints("udds_like", UDDS_LIKE_BREAKPOINTS)


def trapezoidal(cruise_mps: float = 15.0, ramp_s: float = 12.0, hold_s: float = 60.0,
                idle_s: float = 10.0, repeats: int = 3) -> Profile:
    points, t = [(0.0, 0.0)], 0.0
    for _ in range(repeats):
        t += idle_s
        points.append((t, 0.0))
        t += ramp_s
        points.append((t, cruise_mps))
        t += hold_s
        points.append((t, cruise_mps))
        t += ramp_s
        points.append((t, 0.0))
    points.append((t + idle_s, 0.0))
    return _from_breakpoints("trapezoidal", points, kmh=False)


def saw_tooth(low_mps: float = 6.0, high_mps: float = 20.0, period_s: float = 40.0,
              teeth: int = 12) -> Profile:
    ramp = (high_mps - low_mps) / 2.5
    points = [(0.0, 0.0), (low_mps / 2.0, low_mps)]
    t = points[-1][0]
    for _ in range(teeth):
        t += period_s - ramp
        points.append((t, high_mps))
        t += ramp
        points.append((t, low_mps))
    points.append((t + low_mps / 2.0, 0.0))
    return _from_breakpoints("saw_tooth", points, kmh=False)


def stop_and_go(peak_mps: float = 8.0, accel: float = 1.2, cruise_s: float = 6.0,
                stop_s: float = 8.0, hops: int = 25) -> Profile:
    ramp = peak_mps / accel
    points, t = [(0.0, 0.0)], 0.0
    for _ in range(hops):
        t += stop_s
        points.append((t, 0.0))
        t += ramp
        points.append((t, peak_mps))
        t += cruise_s
        points.append((t, peak_mps))
        t += ramp
        points.append((t, 0.0))
    points.append((t + stop_s, 0.0))
    return _from_breakpoints("stop_and_go", points, kmh=False)


def random_micro_trips(rng: np.random.Generator, duration_s: float = 900.0,
                       name: str = "random") -> Profile:
    """Seeded sequence of idle/accelerate/cruise/brake micro-trips."""
    points, t = [(0.0, 0.0)], 0.0
    while t < duration_s:
        t += rng.uniform(3.0, 15.0)
        points.append((t, 0.0))
        v = 0.0
        for _ in range(rng.integers(1, 4)):
            target = rng.uniform(4.0, 27.0)
            t += abs(target - v) / rng.uniform(0.6, 2.2)
            points.append((t, target))
            t += rng.uniform(5.0, 45.0)
            target = max(0.5, target + rng.normal(0.0, 1.5))
            points.append((t, target))
            v = target
        t += v / rng.uniform(0.8, 2.8)
        points.append((t, 0.0))
    points.append((t + 5.0, 0.0))
    return _from_breakpoints(name, points, kmh=False)


def bundled_cycles() -> list:
    return [udds_like(), trapezoidal(), saw_tooth(), stop_and_go()]


# --- exogenous profiles -----------------------------------------------------

def _smooth(x: np.ndarray, width: int) -> np.ndarray:
    kernel = np.ones(width) / width
    padded = np.pad(x, (width // 2, width - 1 - width // 2), mode="edge")
    return np.convolve(padded, kernel, mode="valid")


def segment_grade_profile(rng: np.random.Generator, mean: float, std: float,
                          n_samples: int = 12000, name: str = "segments") -> Profile:
    """Piecewise grade segments (20-80 s) drawn around ``mean``, clipped to +/-20 %."""
    values = np.empty(n_samples)
    i = 0
    while i < n_samples:
        span = int(rng.uniform(20.0, 80.0) * WINDOW_HZ)
        values[i:i + span] = rng.normal(mean, std)
        i += span
    values = np.clip(_smooth(np.clip(values, -0.2, 0.2), 5 * WINDOW_HZ), -0.2, 0.2)
    return Profile(name, TimeSeries(values, WINDOW_HZ, Unit.FRACTION))


def flat_grade(n_samples: int = 12000) -> Profile:
    return Profile("flat", TimeSeries(np.zeros(n_samples), WINDOW_HZ, Unit.FRACTION))


def rolling_grade(amplitude: float = 0.06, period_s: float = 150.0, n_samples: int = 12000) -> Profile:
    t = np.arange(n_samples) * DT
    values = amplitude * np.sin(2 * np.pi * t / period_s)
    return Profile("rolling", TimeSeries(values, WINDOW_HZ, Unit.FRACTION))


def _ar1(rng: np.random.Generator, n: int, mean: float, std: float, corr_s: float = 20.0) -> np.ndarray:
    phi = math.exp(-DT / corr_s)
    noise = rng.normal(0.0, std * math.sqrt(1 - phi * phi), n)
    x = np.empty(n)
    x[0] = mean + rng.normal(0.0, std)
    for i in range(1, n):
        x[i] = mean + phi * (x[i - 1] - mean) + noise[i]
    return x


def wind_profile(rng: np.random.Generator, beaufort_index: int, n_samples: int = 12000) -> Profile:
    """Headwind that stays inside one Beaufort class."""
    cls = BEAUFORT_SCALE[beaufort_index]
    hi = cls.high_mps if math.isfinite(cls.high_mps) else cls.low_mps * 1.2
    mean = 0.15 if cls.index == 0 else cls.typical_mps
    std = 0.02 if cls.index == 0 else 0.03 * mean
    values = np.clip(_ar1(rng, n_samples, mean, std), cls.low_mps, np.nextafter(hi, 0.0))
    return Profile(f"wind_b{cls.index}", TimeSeries(values, WINDOW_HZ, Unit.MPS))


def aux_profile(rng: np.random.Generator, level_W: float, n_samples: int = 12000) -> Profile:
    """Auxiliary load hovering around ``level_W``; zero level gives a constant zero load."""
    if level_W == 0:
        values = np.zeros(n_samples)
    else:
        values = np.clip(_ar1(rng, n_samples, level_W, 0.04 * level_W), 0.97 * level_W, 1.15 * level_W)
    return Profile(f"aux_{int(level_W)}", TimeSeries(values, WINDOW_HZ, Unit.WATT))


# --- grid and generation ----------------------------------------------------

@dataclass(frozen=True)
class GenerationGrid:
    temps_C: tuple
    grade_profiles: tuple
    initial_socs: tuple
    drive_cycles: tuple
    wind_profiles: tuple
    aux_profiles: tuple
    rng_seed: int = 0
    env: EnvConditions = field(default_factory=EnvConditions)

    def __post_init__(self) -> None:
        for name in ("temps_C", "grade_profiles", "initial_socs", "drive_cycles",
                     "wind_profiles", "aux_profiles"):
            items = tuple(getattr(self, name))
            if not items:
                raise ValueError(f"grid list {name} is empty")
            object.__setattr__(self, name, items)
        for soc in self.initial_socs:
            if not 0 <= soc <= 100:
                raise ValueError("initial SOC must lie in [0, 100]")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be unsigned")

    def __len__(self) -> int:
        return (len(self.temps_C) * len(self.grade_profiles) * len(self.initial_socs)
                * len(self.drive_cycles) * len(self.wind_profiles) * len(self.aux_profiles))

    def cells(self):
        return itertools.product(self.temps_C, self.grade_profiles, self.initial_socs,
                                 self.drive_cycles, self.wind_profiles, self.aux_profiles)


def default_grid(seed: int = 0, temps=(-5.0, 15.0, 35.0), socs=(30.0, 70.0),
                 n_random_cycles: int = 2, wind_classes=(0, 6), aux_levels=(0.0, 977.0),
                 grades=("flat", "uphill", "downhill"), bundled: bool = True) -> GenerationGrid:
    """Desk-scale grid; every random ingredient is derived from ``seed``.

    ``bundled`` adds the UDDS-like, stop-and-go and saw-tooth cycles to the
    seeded random ones.
    """
    rng = np.random.default_rng(seed)
    grade_makers = {
        "flat": lambda: flat_grade(),
        "rolling": lambda: rolling_grade(),
        "uphill": lambda: segment_grade_profile(rng, 0.012, 0.09, name="uphill"),
        "downhill": lambda: segment_grade_profile(rng, -0.08, 0.099, name="downhill"),
        "mixed": lambda: segment_grade_profile(rng, 0.0, 0.07, name="mixed"),
    }
    grade_profiles = tuple(grade_makers[g]() for g in grades)
    cycles = [udds_like(), stop_and_go(), saw_tooth()] if bundled else []
    cycles += [random_micro_trips(rng, name=f"random{i}") for i in range(n_random_cycles)]
    return GenerationGrid(
        temps_C=tuple(temps),
        grade_profiles=grade_profiles,
        initial_socs=tuple(socs),
        drive_cycles=tuple(cycles),
        wind_profiles=tuple(wind_profile(rng, c) for c in wind_classes),
        aux_profiles=tuple(aux_profile(rng, a) for a in aux_levels),
        rng_seed=seed,
    )


@dataclass
class CellResult:
    label: str
    windows: list
    initial_soc: float
    final_soc: float
    warning: Optional[str] = None


def _fit(values: np.ndarray, n: int, shift: int) -> np.ndarray:
    return np.roll(np.resize(values, max(n, values.size)), -shift)[:n]


def _limit_speed(target: np.ndarray, grade, wind, aux, temp_C: float, soc0: float,
                 params: VehicleParams, env: EnvConditions) -> np.ndarray:
    """Follow the target speed, slowing down wherever the battery cannot deliver."""
    accel = np.gradient(target, DT)
    free = ground_truth_power(target, accel, grade, wind, aux, temp_C, soc0, params, env, derate=False)
    if np.max(free) <= power_cap(temp_C, 0.0, params):
        return target

    m_eff = params.mass_factor * params.mass_kg
    eta = params.trans_eff * params.elec_eff
    base = params.accessory_base_W
    v = np.empty_like(target)
    v[0] = target[0]
    soc = soc0
    for n in range(target.size - 1):
        vn = v[n]
        a = min((target[n + 1] - vn) / DT, MAX_CATCHUP_ACCEL)
        p = ground_truth_power(vn, a, grade[n], wind[n], aux[n], temp_C, soc, params, env, derate=False)
        cap = power_cap(temp_C, soc, params)
        if p > cap and vn > 0:
            rest = float(road_load(vn, 0.0, grade[n], wind[n], params, env))
            a = min(a, ((cap - aux[n] - base) * eta / vn - rest) / m_eff)
            p = cap
        v[n + 1] = max(vn + a * DT, 0.0)
        soc -= p * DT / params.battery_capacity_J * 100.0
    return v


def _soc_trace(power: np.ndarray, soc0: float, capacity_J: float) -> np.ndarray:
    used = np.concatenate(([0.0], np.cumsum(power))) * DT
    return soc0 - used / capacity_J * 100.0


def simulate_cell(label: str, temp_C: float, grade: np.ndarray, soc0: float, speed: np.ndarray,
                  wind: np.ndarray, aux: np.ndarray, params: VehicleParams, env: EnvConditions,
                  derate: bool = True) -> CellResult:
    n = speed.size
    v = _limit_speed(speed, grade, wind, aux, temp_C, soc0, params, env) if derate else speed
    accel = np.gradient(v, DT)
    elevation = elevation_from_grade(grade, v, DT)
    n_windows = n // WINDOW_SAMPLES

    # Physics sees the same grade the learners will recover from elevation.
    grade_seen = np.array(grade, dtype=np.float64)
    for j in range(n_windows):
        sl = slice(j * WINDOW_SAMPLES, (j + 1) * WINDOW_SAMPLES)
        grade_seen[sl] = grade_from_elevation(elevation[sl], v[sl], DT)

    raw = ground_truth_power(v, accel, grade_seen, wind, aux, temp_C, soc0, params, env, derate=False)
    power = raw
    if derate:
        # The cap depends on SOC, which depends on power; iterate to a fixed point.
        for _ in range(20):
            soc = _soc_trace(power, soc0, params.battery_capacity_J)[:-1]
            capped = np.minimum(raw, power_cap(temp_C, soc, params))
            if np.array_equal(capped, power):
                break
            power = capped
    soc = _soc_trace(power, soc0, params.battery_capacity_J)

    warning = None
    bad = np.flatnonzero((soc < 0.0) | (soc > 100.0))
    if bad.size:
        n_windows = min(n_windows, (int(bad[0]) - 1) // WINDOW_SAMPLES)
        warning = f"{label}: SOC left [0, 100] at t={bad[0] * DT:.1f} s; truncated to {n_windows} windows"

    windows = []
    for j in range(n_windows):
        sl = slice(j * WINDOW_SAMPLES, (j + 1) * WINDOW_SAMPLES)
        windows.append(PartitionedWindow(
            veh_sp=v[sl], road_el=elevation[sl], veh_acc=accel[sl], aux_ld=aux[sl], wind_sp=wind[sl],
            env_temp=temp_C, batt_soc=soc[j * WINDOW_SAMPLES],
            act_pow=power[sl].reshape(WINDOW_SECONDS, WINDOW_HZ).mean(axis=1),
            t0_s=float(j * WINDOW_SECONDS),
        ))
    return CellResult(label, windows, soc0, float(soc[n_windows * WINDOW_SAMPLES]), warning)


def _run_cell(args) -> CellResult:
    return simulate_cell(*args)


def _cell_jobs(grid: GenerationGrid, params: VehicleParams, derate: bool):
    for index, (temp, grade, soc, cycle, wind, aux) in enumerate(grid.cells()):
        rng = np.random.default_rng([grid.rng_seed, index])
        n = cycle.values.size
        shifts = rng.integers(0, 10 ** 6, size=3)
        label = f"T{temp:g}_{grade.name}_S{soc:g}_{cycle.name}_{wind.name}_{aux.name}"
        yield (label, float(temp), _fit(grade.values, n, shifts[0] % grade.values.size), float(soc),
               np.asarray(cycle.values), _fit(wind.values, n, shifts[1] % wind.values.size),
               _fit(aux.values, n, shifts[2] % aux.values.size), params, grid.env, derate)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("EVRK_THREADS", "1")))
    except ValueError:
        return 1


def generate(grid: GenerationGrid, params: VehicleParams = VehicleParams(), derate: bool = True,
             workers: Optional[int] = None, provenance: str = "simgen") -> Dataset:
    """Simulate every grid cell and partition the drives into windows.

    Cells are emitted in grid order whatever the worker count. Cells whose
    SOC leaves [0, 100] are truncated and reported in ``Dataset.warnings``.
    """
    workers = worker_count() if workers is None else workers
    jobs = list(_cell_jobs(grid, params, derate))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(job) for job in jobs]

    windows, trips, warnings = [], [], []
    for res in results:
        if res.warning:
            log.warning(res.warning)
            warnings.append(res.warning)
        if not res.windows:
            continue
        start = len(windows)
        windows.extend(res.windows)
        trips.append(TripSpan(res.label, start, len(windows), res.initial_soc, res.final_soc))
    return Dataset(tuple(windows), f"{provenance} seed={grid.rng_seed}", None, tuple(trips), tuple(warnings))


def trip_energy_J(dataset: Dataset, trip: TripSpan) -> float:
    return float(sum(w.act_pow.sum() for w in dataset.trip_windows(trip)))
