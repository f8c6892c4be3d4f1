"""Experiment configuration: flat ``key = value`` text with ``#`` comments.

Lists are comma separated; ``none`` means unbounded where a field allows it.
Vehicle constants use a ``vehicle.`` prefix (for example
``vehicle.mass_kg = 1600``).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

from .core import VehicleParams


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "out"
    vehicle: VehicleParams = field(default_factory=VehicleParams)

    # generation grid (train/validation); the test grid reuses it with its own seed
    temps_C: tuple = (-5.0, 35.0)
    initial_socs: tuple = (30.0, 70.0)
    grades: tuple = ("flat", "uphill", "downhill")
    wind_classes: tuple = (0, 6)
    aux_levels_W: tuple = (0.0, 977.0)
    n_random_cycles: int = 8
    train_fraction: float = 0.7
    test_seed_offset: int = 1000
    test_temps_C: tuple = (-5.0, 35.0)
    test_initial_socs: tuple = (50.0,)
    test_grades: tuple = ("uphill", "downhill")
    test_n_random_cycles: int = 1
    test_bundled_cycles: bool = False

    # CNN training
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 0.001
    dropout: float = 0.2
    hidden: int = 128
    compute_dtype: str = "float32"
    restore_best: bool = True
    max_train_windows: int = 16000
    max_valid_windows: int = 4000

    # fine tuner
    bdt_n_trees: tuple = (5, 10, 20)
    bdt_max_depth: tuple = (4, 8, 16, None)
    bdt_min_leaf: tuple = (1, 5, 20)
    bdt_folds: int = 3
    bdt_tune_rows: int = 4000

    # baselines
    modi_epochs: int = 60
    alvarez_epochs: int = 20000

    # evaluation
    cv_folds: int = 10
    cv_runs: int = 5
    cv_epochs: int = 5
    cv_max_windows: int = 1500
    ttest_groups: int = 10
    ttest_alpha: float = 0.05
    timing_repeats: int = 5
    max_timed_trips: int = 5
    min_corr: float = 0.95

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.compute_dtype not in ("float32", "float64"):
            raise ValueError("compute_dtype must be float32 or float64")
        for name in ("epochs", "batch_size", "bdt_folds", "cv_folds", "cv_runs", "ttest_groups"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_train_windows < 0 or self.max_valid_windows < 0:
            raise ValueError("window caps must be >= 0 (0 means no cap)")
        if self.timing_repeats < 5:
            raise ValueError("timing_repeats must be >= 5")

    def search_space(self) -> dict:
        return {"n_trees": self.bdt_n_trees, "max_depth": self.bdt_max_depth, "min_leaf_size": self.bdt_min_leaf}

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = dataclasses.asdict(value) if f.name == "vehicle" else (
                list(value) if isinstance(value, tuple) else value)
        return out

    def checksum(self) -> str:
        """SHA-256 of the canonical JSON form; paths are excluded so moving outputs keeps it."""
        data = self.to_dict()
        data.pop("out_dir")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()

    def provenance(self) -> str:
        return f"config_sha256={self.checksum()} seed={self.seed}"


def _element_type(name: str, default):
    if name in ("grades", "test_grades"):
        return str
    if name in ("wind_classes", "bdt_n_trees", "bdt_min_leaf"):
        return int
    if name == "bdt_max_depth":
        return "depth"
    return float if isinstance(default, tuple) else type(default)


def _parse_scalar(kind, text: str):
    text = text.strip()
    if kind == "depth":
        return None if text.lower() == "none" else int(text)
    if kind is bool:
        if text.lower() in ("true", "yes", "1", "on"):
            return True
        if text.lower() in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return kind(text)


def parse_config_text(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    defaults = {f.name: getattr(base, f.name) for f in fields(base)}
    vehicle_fields = {f.name: f.type for f in fields(VehicleParams)}
    updates, vehicle = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key.startswith("vehicle."):
                name = key[len("vehicle."):]
                if name not in vehicle_fields:
                    raise KeyError(key)
                vehicle[name] = float(value)
            elif key in defaults and key != "vehicle":
                default = defaults[key]
                kind = _element_type(key, default)
                if isinstance(default, tuple):
                    updates[key] = tuple(_parse_scalar(kind, v) for v in value.split(",") if v.strip())
                else:
                    updates[key] = _parse_scalar(kind, value)
            else:
                raise KeyError(key)
        except KeyError:
            raise ValueError(f"line {lineno}: unknown key {key!r}") from None
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from None
    if vehicle:
        updates["vehicle"] = dataclasses.replace(base.vehicle, **vehicle)
    return dataclasses.replace(base, **updates)


def load_config(path: Optional[Union[str, Path]], **overrides) -> ExperimentConfig:
    cfg = parse_config_text(Path(path).read_text()) if path else ExperimentConfig()
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def format_config(cfg: ExperimentConfig, paths: bool = True) -> str:
    """The config in the text format, one key per line (``paths=False`` omits out_dir)."""
    lines = []
    for name, value in cfg.to_dict().items():
        if name == "out_dir" and not paths:
            continue
        if name == "vehicle":
            lines += [f"vehicle.{k} = {v!r}" for k, v in value.items()]
        elif isinstance(value, list):
            lines.append(f"{name} = " + ", ".join("none" if v is None else str(v) for v in value))
        else:
            lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"

