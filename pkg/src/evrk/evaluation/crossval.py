"""Repeated k-fold cross-validation with a 70/30 fold composition.

Each run shuffles the items and cuts them into k folds (the remainder goes
to the earliest folds). Rotation f validates on folds f, f+1, ..., f+v-1
(mod k) and trains on the rest, so with k=10 and v=3 every rotation is a
70/30 split and every fold is validated three times per run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .metrics import corr, mae, rmse


def fold_partition(n: int, k: int, rng: np.random.Generator) -> list:
    if n < k:
        raise ValueError(f"cannot split {n} items into {k} non-empty folds")
    order = rng.permutation(n)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    return np.split(order, np.cumsum(sizes)[:-1])


@dataclass(frozen=True)
class FoldReport:
    run: int
    fold: int
    train_idx: np.ndarray
    valid_idx: np.ndarray
    valid_folds: tuple
    rmse: float
    mae: float
    corr: float


def repeated_kfold(n_items: int, trainer: Callable, k: int = 10, runs: int = 5, seed: int = 0,
                   n_valid_folds: int = 3) -> list:
    """Run ``trainer(train_idx, valid_idx) -> (actual, estimated)`` on every rotation.

    Items are whatever the caller indexes (windows or whole trips). Returns
    k x runs reports ordered by (run, fold).
    """
    if not 1 <= n_valid_folds < k:
        raise ValueError("n_valid_folds must be in [1, k)")
    reports = []
    for run in range(runs):
        folds = fold_partition(n_items, k, np.random.default_rng([seed, run]))
        for f in range(k):
            chosen = tuple((f + j) % k for j in range(n_valid_folds))
            valid = np.sort(np.concatenate([folds[j] for j in chosen]))
            train = np.sort(np.concatenate([folds[j] for j in range(k) if j not in chosen]))
            actual, estimated = trainer(train, valid)
            reports.append(FoldReport(run, f, train, valid, chosen, rmse(actual, estimated),
                                      mae(actual, estimated), corr(actual, estimated)))
    return reports


def coefficient_of_variation(values: Sequence[float]) -> float:
    x = np.asarray(values, dtype=np.float64)
    return float(np.std(x, ddof=1) / np.mean(x))


def write_cv_csv(reports: Sequence[FoldReport], path: Union[str, Path], header_comment: str = "") -> None:
    with open(path, "w", newline="") as fh:
        for line in header_comment.splitlines():
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", "fold", "metric", "value"])
        for r in reports:
            for metric in ("rmse", "mae", "corr"):
                writer.writerow([r.run, r.fold, metric, repr(float(getattr(r, metric)))])
