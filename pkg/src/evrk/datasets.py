"""Dataset CSV files and the generation manifest.

One row per 10 Hz sample with header
``t_s,veh_sp_mps,road_el_m,veh_acc_mps2,aux_ld_w,wind_sp_mps,env_temp_c,batt_soc_pct,act_pow_w``.
``t_s`` is time since trip start; a trip starts wherever it falls back.
Window scalars (temperature, SOC at window start) repeat on every row of
the window, and the 1 Hz target repeats on the ten rows of its second
(empty when absent). Reals are written with ``repr`` so they round-trip
exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Union

import numpy as np

from .core import WINDOW_HZ, WINDOW_SAMPLES, WINDOW_SECONDS, Dataset, PartitionedWindow, TripSpan, infer_trips

CSV_HEADER = ("t_s", "veh_sp_mps", "road_el_m", "veh_acc_mps2", "aux_ld_w", "wind_sp_mps",
              "env_temp_c", "batt_soc_pct", "act_pow_w")


class SchemaError(ValueError):
    """A dataset file does not follow the CSV schema."""


def write_csv(dataset: Dataset, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for w in dataset.windows:
            temp, soc = repr(w.env_temp), repr(w.batt_soc)
            target = [""] * WINDOW_SECONDS if w.act_pow is None else [repr(float(p)) for p in w.act_pow]
            for i in range(WINDOW_SAMPLES):
                writer.writerow((repr(w.t0_s + i / WINDOW_HZ), repr(float(w.veh_sp[i])), repr(float(w.road_el[i])),
                                 repr(float(w.veh_acc[i])), repr(float(w.aux_ld[i])), repr(float(w.wind_sp[i])),
                                 temp, soc, target[i // WINDOW_HZ]))


def read_csv(path: Union[str, Path], provenance: str = "") -> Dataset:
    """Load windows; trips are recovered from breaks in window start times."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise SchemaError(f"{path}: header {header} does not match {','.join(CSV_HEADER)}")
        rows = list(reader)
    if len(rows) % WINDOW_SAMPLES:
        raise SchemaError(f"{path}: {len(rows)} rows is not a whole number of {WINDOW_SAMPLES}-row windows")
    windows = []
    for start in range(0, len(rows), WINDOW_SAMPLES):
        block = rows[start:start + WINDOW_SAMPLES]
        try:
            data = np.array([[float(v) for v in r[:8]] for r in block])
            targets = [r[8] for r in block[::WINDOW_HZ]]
            act = None if all(t == "" for t in targets) else np.array([float(t) for t in targets])
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"{path}: bad value in rows {start + 2}-{start + WINDOW_SAMPLES + 1}: {exc}") from exc
        if np.any(data[:, 6] != data[0, 6]) or np.any(data[:, 7] != data[0, 7]):
            raise SchemaError(f"{path}: window scalars change inside rows {start + 2}-{start + WINDOW_SAMPLES + 1}")
        windows.append(PartitionedWindow(
            veh_sp=data[:, 1], road_el=data[:, 2], veh_acc=data[:, 3], aux_ld=data[:, 4], wind_sp=data[:, 5],
            env_temp=data[0, 6], batt_soc=data[0, 7], act_pow=act, t0_s=data[0, 0],
        ))
    return Dataset(tuple(windows), provenance or str(path), None, infer_trips(windows))


def with_trips(dataset: Dataset) -> Dataset:
    """The dataset with trip spans inferred when it has none."""
    if dataset.trips:
        return dataset
    return Dataset(dataset.windows, dataset.provenance, dataset.norm_params, infer_trips(dataset.windows),
                   dataset.warnings)


def select_trips(dataset: Dataset, trip_indices, provenance: str = "") -> Dataset:
    """Whole trips, in the given order, as a new dataset with re-based spans."""
    windows, trips = [], []
    for i in trip_indices:
        trip = dataset.trips[i]
        start = len(windows)
        windows.extend(dataset.trip_windows(trip))
        trips.append(TripSpan(trip.label, start, len(windows), trip.initial_soc, trip.final_soc))
    return Dataset(tuple(windows), provenance or dataset.provenance, dataset.norm_params, tuple(trips))


def trip_split(dataset: Dataset, train_fraction: float, seed: int):
    """Seeded split of whole trips into (train, validation) datasets."""
    n = len(dataset.trips)
    if n < 2:
        raise ValueError("need at least two trips to split")
    order = np.random.default_rng([seed, 70]).permutation(n)
    n_train = min(max(int(round(train_fraction * n)), 1), n - 1)
    return (select_trips(dataset, sorted(order[:n_train]), dataset.provenance + " train"),
            select_trips(dataset, sorted(order[n_train:]), dataset.provenance + " valid"))


def sha256_file(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: Union[str, Path], manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path: Union[str, Path]) -> dict:
    return json.loads(Path(path).read_text())
