import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evrk.core import (
    Dataset,
    EnvConditions,
    InvalidWindow,
    PartitionedWindow,
    TimeSeries,
    Unit,
    VehicleParams,
    elevation_from_grade,
    grade_from_elevation,
    infer_trips,
    validate_window,
)
from conftest import random_window


def window_fields(rng):
    w = random_window(rng)
    return {name: getattr(w, name) for name in ("veh_sp", "road_el", "veh_acc", "aux_ld", "wind_sp",
                                                "env_temp", "batt_soc", "act_pow")}


def test_valid_window_passes(rng):
    assert validate_window(random_window(rng)).ok


@pytest.mark.parametrize("mutate, reason", [
    (lambda f: f.update(veh_sp=f["veh_sp"][:99]), "channel length"),
    (lambda f: f.update(act_pow=f["act_pow"][:9]), "target length"),
    (lambda f: f.update(wind_sp=np.where(np.arange(100) == 5, np.nan, f["wind_sp"])), "non-finite"),
    (lambda f: f.update(env_temp=float("inf")), "non-finite"),
    (lambda f: f.update(batt_soc=100.5), "soc range"),
    (lambda f: f.update(batt_soc=-0.1), "soc range"),
])
def test_invalid_windows_name_the_invariant(rng, mutate, reason):
    fields = window_fields(rng)
    mutate(fields)
    result = validate_window(fields)
    assert not result.ok and result.reason == reason
    with pytest.raises(InvalidWindow, match=reason):
        PartitionedWindow(**fields)


def test_window_arrays_are_read_only(rng):
    w = random_window(rng)
    with pytest.raises(ValueError):
        w.veh_sp[0] = 1.0


def test_soc_bounds_are_inclusive(rng):
    fields = window_fields(rng)
    for soc in (0.0, 100.0):
        fields["batt_soc"] = soc
        assert PartitionedWindow(**fields).batt_soc == soc


def test_channels_put_grade_in_elevations_place(rng):
    w = random_window(rng)
    ch = w.channels()
    assert ch.shape == (5, 100)
    np.testing.assert_array_equal(ch[1], w.grade)
    np.testing.assert_array_equal(ch[0], w.veh_sp)


@given(st.lists(st.floats(-0.2, 0.2), min_size=100, max_size=100),
       st.lists(st.floats(0.5, 30.0), min_size=100, max_size=100))
def test_grade_survives_elevation_round_trip(grade, speed):
    grade, speed = np.array(grade), np.array(speed)
    elevation = elevation_from_grade(grade, speed, 0.1)
    recovered = grade_from_elevation(elevation, speed, 0.1)
    np.testing.assert_allclose(recovered[1:], grade[1:], atol=1e-9)
    assert recovered[0] == recovered[1]


def test_grade_at_standstill_is_finite():
    speed = np.zeros(100)
    elevation = np.zeros(100)
    assert np.all(np.isfinite(grade_from_elevation(elevation, speed, 0.1)))


def test_time_series_rejects_bad_input():
    with pytest.raises(ValueError):
        TimeSeries(np.array([]), 10, Unit.MPS)
    with pytest.raises(ValueError):
        TimeSeries(np.array([1.0, np.nan]), 10, Unit.MPS)
    with pytest.raises(ValueError):
        TimeSeries(np.ones(3), 0, Unit.MPS)
    ts = TimeSeries(np.ones(30), 10, "m/s")
    assert ts.unit is Unit.MPS and ts.duration_s == 3.0


@pytest.mark.parametrize("kwargs", [{"trans_eff": 0.0}, {"motor_eff": 1.5}, {"mass_kg": -1.0},
                                    {"mass_factor": 0.9}, {"battery_capacity_J": 0.0}])
def test_vehicle_params_validation(kwargs):
    with pytest.raises(ValueError):
        VehicleParams(**kwargs)


def test_env_conditions_grade_limit():
    EnvConditions(grade_profile=np.array([0.25, -0.25]))
    with pytest.raises(ValueError):
        EnvConditions(grade_profile=np.array([0.3]))


def test_infer_trips_splits_on_time_breaks(rng):
    times = [0, 10, 20, 0, 10, 50]
    windows = [random_window(rng, t0=t) for t in times]
    trips = infer_trips(windows)
    assert [(t.start, t.stop) for t in trips] == [(0, 3), (3, 5), (5, 6)]
    ds = Dataset(tuple(windows), trips=trips)
    assert len(ds.trip_windows(trips[1])) == 2
