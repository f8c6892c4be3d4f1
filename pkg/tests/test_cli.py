import subprocess
import sys

import pytest

from evrk.cli import main

TINY_CONFIG = """\
temps_C = 20
initial_socs = 60
grades = flat, uphill
wind_classes = 0
aux_levels_W = 0
n_random_cycles = 1
test_temps_C = 20, 30
test_grades = flat
epochs = 2
modi_epochs = 2
alvarez_epochs = 200
hidden = 16
bdt_n_trees = 2, 3
bdt_max_depth = 4
bdt_min_leaf = 5
bdt_tune_rows = 400
cv_folds = 4
cv_runs = 1
cv_epochs = 1
cv_max_windows = 40
ttest_groups = 2
max_timed_trips = 1
"""

# Wall-clock timings are the only outputs allowed to differ between runs.
TIMING_FILES = {"timings.csv", "comparison.txt"}


def run_all(out, config):
    codes = [main(["generate", "--config", str(config), "--out-dir", str(out)]),
             main(["train", "--config", str(config), "--out-dir", str(out)]),
             main(["predict", "--config", str(config), "--out-dir", str(out), "--trip", str(out / "test.csv"),
                   "--trip-index", "1"]),
             main(["evaluate", "--config", str(config), "--out-dir", str(out)])]
    return codes


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "tiny.cfg"
    config.write_text(TINY_CONFIG)
    return [(root / name, run_all(root / name, config)) for name in ("a", "b")]


def test_commands_produce_outputs(two_runs):
    out, codes = two_runs[0]
    assert codes[:3] == [0, 0, 0]
    assert codes[3] in (0, 1)  # a two-epoch model may miss the acceptance ordering
    for name in ("train.csv", "valid.csv", "test.csv", "manifest.json", "config.txt", "cnn.pce1", "bdt.bdt1",
                 "modi.pce1", "alvarez.json", "train_manifest.json", "trip_estimate.csv", "comparison.csv",
                 "timings.csv", "ttests.csv", "cv.csv", "cnn_loss.csv", "bdt_tuning.csv"):
        assert (out / name).exists(), name
    assert (out / "comparison.csv").read_text().startswith("# config_sha256=")


def test_repeated_runs_are_byte_identical(two_runs):
    (a, _), (b, _) = two_runs
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        if name not in TIMING_FILES:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_missing_models_are_reported(tmp_path, capsys):
    with pytest.raises(SystemExit, match="not found"):
        main(["predict", "--out-dir", str(tmp_path), "--trip", str(tmp_path / "x.csv")])


def test_missing_dataset_is_reported(tmp_path):
    with pytest.raises(SystemExit, match="evrk generate"):
        main(["train", "--out-dir", str(tmp_path)])


def test_bad_config_exits_with_code_two(tmp_path, capsys):
    config = tmp_path / "bad.cfg"
    config.write_text("epochs = zero\n")
    assert main(["generate", "--config", str(config), "--out-dir", str(tmp_path)]) == 2
    assert "epochs" in capsys.readouterr().err


def test_trip_index_out_of_range(two_runs):
    out, _ = two_runs[0]
    with pytest.raises(SystemExit, match="out of range"):
        main(["predict", "--out-dir", str(out), "--trip", str(out / "test.csv"), "--trip-index", "99"])


def test_console_script_help():
    result = subprocess.run([sys.executable, "-m", "evrk.cli", "--help"], capture_output=True, text=True)
    assert result.returncode == 0
    for verb in ("generate", "train", "predict", "evaluate"):
        assert verb in result.stdout
