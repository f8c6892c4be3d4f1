"""Technique adapters and the comparison table.

A technique turns one trip (an ordered list of windows) into per-second
power estimates, or only a trip energy for trip-level models. The table
scores every technique on every dataset with RMSE, MAE and Corr over all
seconds, MAE_dev over trips (MJ) and MPTDC (seconds per drive cycle,
prediction only).
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .. import baselines
from ..core import Dataset, EnvConditions, VehicleParams
from ..pipeline import estimate_trip
from .metrics import NotAValue, corr, mae, mae_dev, rmse

METRICS = ("rmse", "mae", "corr", "mae_dev", "mptdc")
UNITS = {"rmse": "W", "mae": "W", "corr": "1", "mae_dev": "MJ", "mptdc": "s"}
HIGHER_IS_BETTER = {"corr"}


class Technique:
    name = "technique"
    per_second = True

    def estimate(self, windows: Sequence) -> np.ndarray:
        """Per-second estimates (W) for an ordered trip."""
        raise NotImplementedError

    def trip_energy_J(self, windows: Sequence) -> float:
        return float(np.sum(self.estimate(windows)))


@dataclass
class ProposedTechnique(Technique):
    cnn: object
    bdt: object = None
    capacity_J: float = VehicleParams().battery_capacity_J
    finetune: bool = True
    name: str = "CNN-BDT"

    def estimate(self, windows):
        return estimate_trip(self.cnn, self.bdt, windows, windows[0].batt_soc, self.capacity_J,
                             finetune=self.finetune).power_W


@dataclass
class GalvinTechnique(Technique):
    name: str = "Galvin"

    def estimate(self, windows):
        return baselines.galvin_windows(windows).reshape(-1)


@dataclass
class YangTechnique(Technique):
    params: VehicleParams = VehicleParams()
    env: EnvConditions = EnvConditions()
    name: str = "Yang"

    def estimate(self, windows):
        return baselines.yang_windows(windows, self.params, self.env).reshape(-1)


@dataclass
class ModiTechnique(Technique):
    model: object
    params: VehicleParams = VehicleParams()
    name: str = "Modi"

    def estimate(self, windows):
        return baselines.modi_windows(self.model, windows, self.params).reshape(-1)


@dataclass
class AlvarezTechnique(Technique):
    model: baselines.AlvarezModel
    name: str = "Alvarez"
    per_second = False

    def estimate(self, windows):
        raise TypeError("the Alvarez model only estimates whole-trip energy")

    def trip_energy_J(self, windows):
        return self.model.predict(baselines.alvarez_features(baselines.trip_speed(windows)))


@dataclass
class EvalReport:
    technique: str
    dataset: str
    rmse: float
    mae: float
    corr: float
    mae_dev: float
    mptdc: float
    n_seconds: int = 0
    n_trips: int = 0
    best: set = field(default_factory=set)


def _timed_median(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def evaluate_technique(technique: Technique, dataset: Dataset, label: str, timing_repeats: int = 5,
                       max_timed_trips: Optional[int] = None) -> EvalReport:
    trips = dataset.trips
    if not trips:
        raise ValueError(f"dataset {label} has no trips")
    actual_E, est_E, actual_P, est_P = [], [], [], []
    for trip in trips:
        windows = list(dataset.trip_windows(trip))
        target = np.concatenate([w.act_pow for w in windows])
        actual_E.append(float(np.sum(target)))
        if technique.per_second:
            est = technique.estimate(windows)
            actual_P.append(target)
            est_P.append(est)
            est_E.append(float(np.sum(est)))
        else:
            est_E.append(technique.trip_energy_J(windows))
    timed = trips if max_timed_trips is None else trips[:max_timed_trips]
    predict = technique.estimate if technique.per_second else technique.trip_energy_J
    mptdc = float(np.mean([
        _timed_median(lambda w=list(dataset.trip_windows(t)): predict(w), timing_repeats) for t in timed
    ]))
    dev = mae_dev(np.array(actual_E) / 1e6, np.array(est_E) / 1e6)
    if technique.per_second:
        a, e = np.concatenate(actual_P), np.concatenate(est_P)
        return EvalReport(technique.name, label, rmse(a, e), mae(a, e), corr(a, e), dev, mptdc, a.size, len(trips))
    na = NotAValue("trip-level technique")
    return EvalReport(technique.name, label, na, na, na, dev, mptdc, 0, len(trips))


def comparison_table(techniques: Sequence[Technique], datasets: Mapping[str, Dataset], timing_repeats: int = 5,
                     max_timed_trips: Optional[int] = None) -> list:
    """Score every technique on every dataset and mark the best value per column and dataset."""
    if timing_repeats < 5:
        raise ValueError("MPTDC needs at least 5 timed predictions per cycle")
    reports = [evaluate_technique(t, ds, label, timing_repeats, max_timed_trips)
               for label, ds in datasets.items() for t in techniques]
    for label in datasets:
        rows = [r for r in reports if r.dataset == label]
        for metric in METRICS:
            values = [(getattr(r, metric), r) for r in rows if not math.isnan(getattr(r, metric))]
            if not values:
                continue
            pick = max if metric in HIGHER_IS_BETTER else min
            best = pick(v for v, _ in values)
            for v, r in values:
                if v == best:
                    r.best.add(metric)
    return reports


def _fmt(value: float) -> str:
    return "NA" if math.isnan(value) else repr(float(value))


def write_report_csv(reports: Sequence[EvalReport], path: Union[str, Path], header_comment: str = "",
                     exclude: Sequence[str] = (), only: Optional[Sequence[str]] = None) -> None:
    """One row per technique x dataset x metric (optionally a subset of metrics)."""
    metrics = [m for m in METRICS if m not in exclude and (only is None or m in only)]
    with open(path, "w", newline="") as fh:
        for line in header_comment.splitlines():
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["technique", "dataset", "metric", "unit", "value", "best"])
        for r in reports:
            for metric in metrics:
                writer.writerow([r.technique, r.dataset, metric, UNITS[metric], _fmt(getattr(r, metric)),
                                 int(metric in r.best)])


def format_table(reports: Sequence[EvalReport]) -> str:
    """Aligned text table; best values carry a trailing asterisk."""
    header = ["technique", "dataset", "RMSE (W)", "MAE (W)", "Corr", "MAE_dev (MJ)", "MPTDC (s)"]
    digits = {"rmse": ".1f", "mae": ".1f", "corr": ".4f", "mae_dev": ".4f", "mptdc": ".3g"}
    rows = [header]
    for r in reports:
        cells = [r.technique, r.dataset]
        for metric in METRICS:
            v = getattr(r, metric)
            cells.append("NA" if math.isnan(v) else format(v, digits[metric]) + ("*" if metric in r.best else ""))
        rows.append(cells)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
