"""Command-line entry point: ``evrk generate|train|predict|evaluate``.

Every command accepts ``--config``, ``--seed`` and ``--out-dir``. Outputs
carry the config checksum and seed; apart from wall-clock timings they are
byte-identical across runs with equal config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bdt, experiment
from .baselines import AlvarezModel
from .config import ExperimentConfig, format_config, load_config
from .datasets import CSV_HEADER, SchemaError, read_csv, sha256_file, with_trips, write_csv, write_manifest
from .evaluation.compare import format_table, write_report_csv
from .evaluation.crossval import coefficient_of_variation, write_cv_csv
from .pce import io as pce_io
from .pipeline import estimate_trip
from .simgen import worker_count

log = logging.getLogger("evrk")

SPLITS = ("train", "valid", "test")
CNN_FILE, BDT_FILE, MODI_FILE, ALVAREZ_FILE = "cnn.pce1", "bdt.bdt1", "modi.pce1", "alvarez.json"


def _config(args) -> ExperimentConfig:
    return load_config(args.config, seed=args.seed, out_dir=args.out_dir)


def _out_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SystemExit(f"error: cannot create output directory {path}: {exc}") from exc
    return path


def _load_split(data_dir: Path, name: str):
    path = data_dir / f"{name}.csv"
    if not path.exists():
        raise SystemExit(f"error: missing dataset {path}; run 'evrk generate' first")
    try:
        return with_trips(read_csv(path, provenance=name))
    except SchemaError as exc:
        raise SystemExit(f"error: {exc}") from exc


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    splits = experiment.generate_splits(cfg, worker_count())
    files = {}
    for name in SPLITS:
        path = out / f"{name}.csv"
        write_csv(splits[name], path)
        files[name] = {"path": path.name, "sha256": sha256_file(path), "windows": len(splits[name]),
                       "trips": len(splits[name].trips)}
    (out / "config.txt").write_text(format_config(cfg, paths=False))
    (out / "warnings.log").write_text("".join(f"{w}\n" for w in splits["warnings"]))
    write_manifest(out / "manifest.json", {
        "config_sha256": cfg.checksum(),
        "seed": cfg.seed,
        "test_seed": cfg.seed + cfg.test_seed_offset,
        "split_fractions": {"train": cfg.train_fraction, "valid": round(1.0 - cfg.train_fraction, 12)},
        "split_unit": "trip",
        "schema": ",".join(CSV_HEADER),
        "files": files,
        "warnings": len(splits["warnings"]),
    })
    print(" ".join(f"{n}={files[n]['windows']} windows" for n in SPLITS))
    return 0


def _write_history(result, path: Path, cfg: ExperimentConfig) -> None:
    result.write_history(path, header_comment=cfg.provenance())


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    data_dir = Path(args.data_dir) if args.data_dir else out
    train_ds, valid_ds = _load_split(data_dir, "train"), _load_split(data_dir, "valid")

    log.info("training CNN on %d windows", len(train_ds))
    cnn = experiment.train_cnn(cfg, train_ds, valid_ds)
    pce_io.save(cnn.model, out / CNN_FILE)
    _write_history(cnn, out / "cnn_loss.csv", cfg)

    log.info("tuning and fitting the fine tuner")
    tuner = experiment.train_fine_tuner(cfg, cnn.model, train_ds)
    bdt.save(tuner.model, out / BDT_FILE)
    with open(out / "bdt_tuning.csv", "w", newline="") as fh:
        fh.write(f"# {cfg.provenance()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n_trees", "max_depth", "min_leaf_size", "cv_rmse_W"])
        for n, d, m, r in tuner.tune.table:
            writer.writerow([n, "none" if d is None else d, m, repr(r)])

    if not args.skip_baselines:
        log.info("training the Modi-style baseline")
        modi = experiment.train_modi(cfg, train_ds, valid_ds)
        pce_io.save(modi.model, out / MODI_FILE)
        _write_history(modi, out / "modi_loss.csv", cfg)
        alvarez = experiment.train_alvarez(cfg, train_ds)
        (out / ALVAREZ_FILE).write_text(json.dumps({
            "config_sha256": cfg.checksum(), "seed": cfg.seed, "weights": [repr(float(w)) for w in alvarez.weights],
            "bias": repr(alvarez.bias), "underdetermined": alvarez.underdetermined,
        }, indent=2) + "\n")

    write_manifest(out / "train_manifest.json", {
        "config_sha256": cfg.checksum(), "seed": cfg.seed,
        "bdt": {"n_trees": tuner.params[0], "max_depth": tuner.params[1], "min_leaf_size": tuner.params[2],
                "bootstrap_seed": cfg.seed},
        "cnn_epochs": cfg.epochs, "compute_dtype": cfg.compute_dtype,
        "models": sorted(p.name for p in out.iterdir() if p.suffix in (".pce1", ".bdt1") or p.name == ALVAREZ_FILE),
    })
    last = cnn.history[-1]
    print(f"cnn: epochs={last[0]} train_mse={last[1]:.6g} valid_mse={last[2]:.6g}; bdt: {tuner.params}")
    return 0


def _load_alvarez(path: Path) -> AlvarezModel:
    data = json.loads(path.read_text())
    return AlvarezModel(np.array([float(w) for w in data["weights"]]), float(data["bias"]), data["underdetermined"])


def _load_models(model_dir: Path, need_baselines: bool):
    for name in (CNN_FILE, BDT_FILE) + ((MODI_FILE, ALVAREZ_FILE) if need_baselines else ()):
        if not (model_dir / name).exists():
            raise SystemExit(f"error: technique model {model_dir / name} not found; run 'evrk train' first")
    cnn, tuner = pce_io.load(model_dir / CNN_FILE), bdt.load(model_dir / BDT_FILE)
    if not need_baselines:
        return cnn, tuner, None, None
    return cnn, tuner, pce_io.load(model_dir / MODI_FILE), _load_alvarez(model_dir / ALVAREZ_FILE)


def cmd_predict(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    model_dir = Path(args.model_dir) if args.model_dir else out
    cnn, tuner, _, _ = _load_models(model_dir, need_baselines=False)
    try:
        data = with_trips(read_csv(args.trip))
    except SchemaError as exc:
        raise SystemExit(f"error: {exc}") from exc
    if not data.windows:
        raise SystemExit("error: trip file has no windows")
    if not 0 <= args.trip_index < len(data.trips):
        raise SystemExit(f"error: trip index {args.trip_index} out of range; the file holds {len(data.trips)} trips")
    windows = list(data.trip_windows(data.trips[args.trip_index]))
    soc0 = windows[0].batt_soc if args.initial_soc is None else args.initial_soc
    est = estimate_trip(cnn, tuner, windows, soc0, cfg.vehicle.battery_capacity_J,
                        finetune=not args.no_finetune)
    target = Path(args.output) if args.output else out / "trip_estimate.csv"
    est.write_csv(target, header_comment=cfg.provenance())
    if est.saturated:
        print("warning: SOC saturated at a bound during the trip", file=sys.stderr)
    print(f"final_soc_percent={est.final_soc!r}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    data_dir = Path(args.data_dir) if args.data_dir else out
    model_dir = Path(args.model_dir) if args.model_dir else out
    cnn, tuner, modi, alvarez = _load_models(model_dir, need_baselines=True)
    datasets = {name: _load_split(data_dir, name) for name in ("valid", "test")}
    techs = experiment.techniques(cfg, cnn, tuner, modi, alvarez)

    reports = experiment.evaluate_all(cfg, techs, datasets)
    write_report_csv(reports, out / "comparison.csv", cfg.provenance(), exclude=("mptdc",))
    write_report_csv(reports, out / "timings.csv", cfg.provenance(), only=("mptdc",))
    table = format_table(reports)
    (out / "comparison.txt").write_text(table + "\n")
    print(table)

    ttests = experiment.run_ttests(cfg, techs, datasets["test"])
    with open(out / "ttests.csv", "w", newline="") as fh:
        fh.write(f"# {cfg.provenance()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["proposed", "baseline", "metric", "mean_proposed", "mean_baseline", "pooled_variance",
                         "t_stat", "df", "p_one_tail", "t_critical_one_tail", "reject_null"])
        for proposed, name, metric, r in ttests:
            writer.writerow([proposed, name, metric, repr(r.mean_a), repr(r.mean_b), repr(r.pooled_variance),
                             repr(r.t_stat), r.df, repr(r.p_one_tail), repr(r.t_critical_one_tail),
                             int(r.reject_null)])

    if not args.no_cv:
        bdt_params = tuple(json.loads((model_dir / "train_manifest.json").read_text())["bdt"][k]
                           for k in ("n_trees", "max_depth", "min_leaf_size")) \
            if (model_dir / "train_manifest.json").exists() else (10, 8, 5)
        cv = experiment.run_cv(cfg, datasets["valid"], bdt_params)
        write_cv_csv(cv, out / "cv.csv", cfg.provenance())
        print(f"cross-validation: {len(cv)} fold-runs, RMSE coefficient of variation "
              f"{coefficient_of_variation([r.rmse for r in cv]):.4f}")

    failures = experiment.acceptance_failures(cfg, reports, "test")
    for reason in failures:
        print(f"acceptance: FAIL {reason}", file=sys.stderr)
    print("acceptance: " + ("FAIL" if failures else "PASS"))
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evrk", description="EV energy estimation experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out-dir", help="output directory (default: config out_dir)")
        return p

    common(sub.add_parser("generate", help="simulate train/valid/test datasets")).set_defaults(func=cmd_generate)

    p = common(sub.add_parser("train", help="train the CNN, then the fine tuner, then the baselines"))
    p.add_argument("--data-dir", help="directory holding train.csv and valid.csv (default: out dir)")
    p.add_argument("--skip-baselines", action="store_true", help="train only the CNN and fine tuner")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("predict", help="estimate power and SOC over one trip"))
    p.add_argument("--model-dir", help="directory with cnn.pce1 and bdt.bdt1 (default: out dir)")
    p.add_argument("--trip", required=True, help="trip CSV in the dataset schema")
    p.add_argument("--trip-index", type=int, default=0, help="which trip of a multi-trip file (default: 0)")
    p.add_argument("--initial-soc", type=float, help="starting SOC %% (default: the trip's first window)")
    p.add_argument("--no-finetune", action="store_true", help="skip the fine tuner (CNN-only ablation)")
    p.add_argument("--output", help="TripEstimate CSV path (default: <out-dir>/trip_estimate.csv)")
    p.set_defaults(func=cmd_predict)

    p = common(sub.add_parser("evaluate", help="comparison table, t-tests and cross-validation"))
    p.add_argument("--model-dir", help="directory with trained models (default: out dir)")
    p.add_argument("--data-dir", help="directory with valid.csv and test.csv (default: out dir)")
    p.add_argument("--no-cv", action="store_true", help="skip repeated k-fold cross-validation")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
