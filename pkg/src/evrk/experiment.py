"""End-to-end experiment steps shared by the CLI and the acceptance tests."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import baselines, bdt
from .config import ExperimentConfig
from .core import Dataset
from .datasets import select_trips, trip_split
from .evaluation.compare import (
    AlvarezTechnique,
    GalvinTechnique,
    ModiTechnique,
    ProposedTechnique,
    YangTechnique,
    comparison_table,
)
from .evaluation.crossval import repeated_kfold
from .evaluation.metrics import mae_dev, rmse
from .evaluation.stats import t_test
from .pce.network import CnnArchitecture, CnnModel, init_model, predict_arrays
from .pce.training import TrainResult, train
from .pipeline import fine_tuner_training_set
from .prep import fine_tuner_rows, fit_normalization, resample_windows, stack_windows
from .simgen import default_grid, generate

log = logging.getLogger(__name__)


def train_grid(cfg: ExperimentConfig):
    return default_grid(cfg.seed, cfg.temps_C, cfg.initial_socs, cfg.n_random_cycles, cfg.wind_classes,
                        cfg.aux_levels_W, cfg.grades)


def test_grid(cfg: ExperimentConfig):
    return default_grid(cfg.seed + cfg.test_seed_offset, cfg.test_temps_C, cfg.test_initial_socs,
                        cfg.test_n_random_cycles, cfg.wind_classes, cfg.aux_levels_W, cfg.test_grades,
                        bundled=cfg.test_bundled_cycles)


def generate_splits(cfg: ExperimentConfig, workers: Optional[int] = None) -> dict:
    """Train/validation split (whole trips) of the main grid plus a separately seeded test grid."""
    full = generate(train_grid(cfg), cfg.vehicle, workers=workers, provenance="train-grid")
    train_ds, valid_ds = trip_split(full, cfg.train_fraction, cfg.seed)
    test_ds = generate(test_grid(cfg), cfg.vehicle, workers=workers, provenance="test-grid")
    return {"train": train_ds, "valid": valid_ds, "test": test_ds, "warnings": full.warnings + test_ds.warnings}


def cnn_architecture(cfg: ExperimentConfig) -> CnnArchitecture:
    return CnnArchitecture(hidden=cfg.hidden, dropout=cfg.dropout)


def cap_windows(dataset: Optional[Dataset], cap: int, seed: int, stream: int) -> Optional[Dataset]:
    """Seeded window subsample of at most ``cap`` windows (0 keeps everything); trip spans are dropped."""
    if dataset is None or cap == 0 or len(dataset) <= cap:
        return dataset
    idx = _subsample(len(dataset), cap, seed, stream)
    return Dataset(tuple(dataset.windows[i] for i in idx), provenance=dataset.provenance)


def train_cnn(cfg: ExperimentConfig, train_ds: Dataset, valid_ds: Optional[Dataset] = None,
              epochs: Optional[int] = None, seed: Optional[int] = None) -> TrainResult:
    seed = cfg.seed if seed is None else seed
    train_ds = cap_windows(train_ds, cfg.max_train_windows, seed, 13)
    valid_ds = cap_windows(valid_ds, cfg.max_valid_windows, seed, 14)
    model = init_model(cnn_architecture(cfg), np.random.default_rng([seed, 11]), dtype=cfg.compute_dtype)
    result = train(model, train_ds, valid_ds, cfg.epochs if epochs is None else epochs, cfg.batch_size, seed,
                   cfg.learning_rate, restore_best=cfg.restore_best and valid_ds is not None, in_place=True)
    result.model.meta.update(config_sha256=cfg.checksum())
    return result


@dataclass
class FineTunerFit:
    model: bdt.BdtModel
    tune: Optional[bdt.TuneResult]
    params: tuple


def _subsample(n: int, cap: int, seed: int, stream: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    return np.sort(np.random.default_rng([seed, stream]).choice(n, cap, replace=False))


def train_fine_tuner(cfg: ExperimentConfig, cnn: CnnModel, train_ds: Dataset, seed: Optional[int] = None,
                     params: Optional[tuple] = None, fit_rows: int = 40000) -> FineTunerFit:
    """Tune (unless ``params`` is given) and fit the bagged trees on CNN outputs for the training windows."""
    seed = cfg.seed if seed is None else seed
    rows, targets = fine_tuner_training_set(cnn, train_ds.windows)
    tune = None
    if params is None:
        idx = _subsample(rows.shape[0], cfg.bdt_tune_rows, seed, 21)
        tune = bdt.tune_hyperparams(rows[idx], targets[idx], cfg.bdt_folds, cfg.search_space(), seed)
        params = tune.best
    n_trees, depth, leaf = params
    idx = _subsample(rows.shape[0], fit_rows, seed, 22)
    model = bdt.fit_bagged(rows[idx], targets[idx], n_trees, depth, leaf, seed)
    return FineTunerFit(model, tune, params)


def train_modi(cfg: ExperimentConfig, train_ds: Dataset, valid_ds: Optional[Dataset] = None) -> TrainResult:
    train_ds = cap_windows(train_ds, cfg.max_train_windows, cfg.seed, 13)
    valid_ds = cap_windows(valid_ds, cfg.max_valid_windows, cfg.seed, 14)
    model = baselines.modi_init(np.random.default_rng([cfg.seed, 12]), cfg.hidden, cfg.dropout).astype(
        cfg.compute_dtype)
    tr = baselines.modi_arrays(train_ds.windows, cfg.vehicle)
    model.norm = fit_normalization(tr, baselines.MODI_CHANNELS, (), model.target_name)
    va = baselines.modi_arrays(valid_ds.windows, cfg.vehicle) if valid_ds is not None else None
    result = train(model, tr, va, cfg.modi_epochs, cfg.batch_size, cfg.seed, cfg.learning_rate,
                   restore_best=cfg.restore_best and va is not None, in_place=True)
    result.model.meta.update(config_sha256=cfg.checksum(), technique="modi")
    return result


def train_alvarez(cfg: ExperimentConfig, train_ds: Dataset) -> baselines.AlvarezModel:
    stats, energies = [], []
    for trip in train_ds.trips:
        windows = train_ds.trip_windows(trip)
        stats.append(baselines.alvarez_features(baselines.trip_speed(windows)))
        energies.append(float(sum(w.act_pow.sum() for w in windows)))
    return baselines.alvarez_fit(stats, energies, cfg.alvarez_epochs, rng_seed=cfg.seed)


def techniques(cfg: ExperimentConfig, cnn, fine_tuner, modi=None, alvarez=None) -> list:
    out = [ProposedTechnique(cnn, fine_tuner, cfg.vehicle.battery_capacity_J), GalvinTechnique(),
           YangTechnique(cfg.vehicle)]
    if alvarez is not None:
        out.append(AlvarezTechnique(alvarez))
    if modi is not None:
        out.append(ModiTechnique(modi, cfg.vehicle))
    return out


def evaluate_all(cfg: ExperimentConfig, techs: list, datasets: dict) -> list:
    return comparison_table(techs, datasets, cfg.timing_repeats, cfg.max_timed_trips)


def trip_groups(dataset: Dataset, n_groups: int, seed: int) -> list:
    """Seeded partition of a dataset's trips into ``n_groups`` non-empty groups."""
    n = len(dataset.trips)
    if n < n_groups:
        raise ValueError(f"{n} trips cannot form {n_groups} groups")
    order = np.random.default_rng([seed, 30]).permutation(n)
    return [select_trips(dataset, sorted(part)) for part in np.array_split(order, n_groups)]


def group_metrics(technique, group: Dataset) -> dict:
    actual_E, est_E, actual_P, est_P = [], [], [], []
    for trip in group.trips:
        windows = list(group.trip_windows(trip))
        target = np.concatenate([w.act_pow for w in windows])
        actual_E.append(target.sum())
        if technique.per_second:
            est = technique.estimate(windows)
            actual_P.append(target)
            est_P.append(est)
            est_E.append(est.sum())
        else:
            est_E.append(technique.trip_energy_J(windows))
    out = {"mae_dev": mae_dev(np.array(actual_E) / 1e6, np.array(est_E) / 1e6)}
    if technique.per_second:
        out["rmse"] = rmse(np.concatenate(actual_P), np.concatenate(est_P))
    return out


def run_ttests(cfg: ExperimentConfig, techs: list, dataset: Dataset) -> list:
    """Proposed technique against each baseline on per-group MAE_dev and RMSE."""
    groups = trip_groups(dataset, cfg.ttest_groups, cfg.seed)
    scores = {t.name: [group_metrics(t, g) for g in groups] for t in techs}
    proposed = techs[0].name
    rows = []
    for t in techs[1:]:
        for metric in ("mae_dev", "rmse"):
            if metric not in scores[t.name][0]:
                continue
            a = [s[metric] for s in scores[proposed]]
            b = [s[metric] for s in scores[t.name]]
            rows.append((proposed, t.name, metric, t_test(a, b, cfg.ttest_alpha)))
    return rows


def batch_estimates(cnn: CnnModel, fine_tuner, windows) -> np.ndarray:
    """Per-second CNN-BDT estimates using each window's recorded SOC (no feedback)."""
    est = predict_arrays(cnn, stack_windows(windows))
    if fine_tuner is None:
        return est.reshape(-1)
    return fine_tuner.predict_rows(fine_tuner_rows(resample_windows(windows), est))


def run_cv(cfg: ExperimentConfig, dataset: Dataset, bdt_params: tuple, epochs: Optional[int] = None) -> list:
    """Repeated k-fold over a seeded window subsample; every rotation retrains CNN and fine tuner."""
    idx = _subsample(len(dataset), cfg.cv_max_windows, cfg.seed, 40)
    windows = [dataset.windows[i] for i in idx]

    def trainer(train_idx, valid_idx):
        tr = Dataset(tuple(windows[i] for i in train_idx))
        va = [windows[i] for i in valid_idx]
        cnn = train_cnn(cfg, tr, None, cfg.cv_epochs if epochs is None else epochs).model
        tuner = train_fine_tuner(cfg, cnn, tr, params=bdt_params).model
        return np.concatenate([w.act_pow for w in va]), batch_estimates(cnn, tuner, va)

    return repeated_kfold(len(windows), trainer, cfg.cv_folds, cfg.cv_runs, cfg.seed)


def acceptance_failures(cfg: ExperimentConfig, reports: list, dataset_label: str) -> list:
    """Reasons the proposed technique misses the ordering criteria on one dataset (empty = pass)."""
    rows = [r for r in reports if r.dataset == dataset_label]
    proposed, others = rows[0], rows[1:]
    failures = []
    for r in others:
        if not proposed.mae_dev < r.mae_dev:
            failures.append(f"MAE_dev {proposed.mae_dev:.4f} MJ not below {r.technique} {r.mae_dev:.4f} MJ")
        if r.technique != "Alvarez" and not proposed.rmse < r.rmse:
            failures.append(f"RMSE {proposed.rmse:.1f} W not below {r.technique} {r.rmse:.1f} W")
    if not proposed.corr >= cfg.min_corr:
        failures.append(f"Corr {proposed.corr:.4f} below {cfg.min_corr}")
    return failures
