import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evrk.core import VehicleParams
from evrk.pce.network import predict_arrays
from evrk.pipeline import (
    BatteryState,
    IdentityFineTuner,
    estimate_trip,
    fine_tuner_training_set,
    median_window_latency,
    soc_update,
)
from evrk.prep import stack_windows

CAPACITY = VehicleParams().battery_capacity_J


@given(st.floats(0.0, 100.0), st.lists(st.floats(-5e4, 8e4), min_size=1, max_size=10))
def test_soc_update_conserves_energy_or_flags(soc, powers):
    new = soc_update(BatteryState(soc, CAPACITY), powers)
    assert 0.0 <= new.soc_percent <= 100.0
    expected = soc - sum(powers) / CAPACITY * 100.0
    assert new.unclamped_soc == pytest.approx(expected, abs=1e-12)
    assert new.saturated == (not 0.0 <= expected <= 100.0)
    if not new.saturated:
        assert new.soc_percent == new.unclamped_soc


def test_battery_state_validation():
    with pytest.raises(ValueError):
        BatteryState(101.0)
    with pytest.raises(ValueError):
        BatteryState(50.0, capacity_J=0.0)


def test_trip_estimate_conserves_energy(tiny_system, small_dataset):
    cnn, tuner = tiny_system
    windows = small_dataset.trip_windows(small_dataset.trips[0])
    est = estimate_trip(cnn, tuner, windows, 60.0, CAPACITY)
    assert est.power_W.shape == (10 * len(windows),)
    np.testing.assert_allclose(est.cum_energy_J, np.cumsum(est.power_W))
    drop = (est.initial_soc - est.meta["unclamped_final_soc"]) * CAPACITY / 100.0
    assert abs(drop - est.power_W.sum()) / np.abs(est.power_W).sum() <= 1e-6
    assert len(est.window_soc) == len(windows) + 1
    # per-second SOC ends where the window SOC ends
    assert est.soc_percent[-1] == pytest.approx(est.final_soc, abs=1e-9)


def test_feedback_replaces_recorded_soc(tiny_system, small_dataset):
    cnn, tuner = tiny_system
    windows = list(small_dataset.trip_windows(small_dataset.trips[0]))[:5]
    shifted = [w.with_soc(5.0) for w in windows]
    a = estimate_trip(cnn, tuner, windows, 60.0)
    b = estimate_trip(cnn, tuner, shifted, 60.0)
    np.testing.assert_array_equal(a.power_W, b.power_W)
    c = estimate_trip(cnn, tuner, shifted, 60.0, feedback=False)
    assert not np.array_equal(a.power_W, c.power_W)


def test_identity_fine_tuner_reproduces_cnn(tiny_system, small_dataset):
    cnn, _ = tiny_system
    windows = list(small_dataset.windows[:4])
    cnn_only = estimate_trip(cnn, None, windows, 60.0, feedback=False, finetune=False)
    identity = estimate_trip(cnn, IdentityFineTuner(), windows, 60.0, feedback=False)
    np.testing.assert_allclose(cnn_only.power_W, identity.power_W)
    np.testing.assert_allclose(cnn_only.power_W, predict_arrays(cnn, stack_windows(windows)).reshape(-1),
                               rtol=1e-12, atol=1e-9)


def test_saturation_is_flagged(tiny_system, small_dataset):
    cnn, tuner = tiny_system
    windows = small_dataset.trip_windows(small_dataset.trips[0])
    est = estimate_trip(cnn, tuner, windows, 0.0, capacity_J=1e3)
    assert est.saturated
    assert np.all((est.soc_percent >= 0.0) & (est.soc_percent <= 100.0))


def test_pipeline_argument_checks(tiny_system, small_dataset):
    cnn, _ = tiny_system
    with pytest.raises(ValueError):
        estimate_trip(cnn, None, [], 50.0)
    with pytest.raises(ValueError):
        estimate_trip(cnn, None, small_dataset.windows[:1], 50.0, finetune=True)


def test_trip_estimate_csv(tmp_path, tiny_system, small_dataset):
    cnn, tuner = tiny_system
    est = estimate_trip(cnn, tuner, small_dataset.windows[:2], 60.0)
    path = tmp_path / "trip.csv"
    est.write_csv(path, header_comment="seed=0", with_technique=True)
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed=0"
    assert lines[1] == "second,est_pow_W,cum_energy_J,soc_percent,technique"
    assert len(lines) == 22 and lines[2].startswith("0,")


def test_fine_tuner_training_set_shapes(tiny_system, small_dataset):
    cnn, _ = tiny_system
    rows, targets = fine_tuner_training_set(cnn, small_dataset.windows[:3])
    assert rows.shape == (30, 8) and targets.shape == (30,)
    np.testing.assert_array_equal(targets, np.concatenate([w.act_pow for w in small_dataset.windows[:3]]))


def test_window_latency_is_real_time(tiny_system, small_dataset):
    cnn, tuner = tiny_system
    assert median_window_latency(cnn, tuner, small_dataset.windows[0]) < 1.0
