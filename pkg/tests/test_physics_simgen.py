import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evrk.core import EnvConditions, VehicleParams
from evrk.physics import motive_power, power_cap, regen_fraction, road_load
from evrk.simgen import (
    BEAUFORT_SCALE,
    DRIVABLE_WIND_CLASSES,
    bundled_cycles,
    classify_wind,
    default_grid,
    generate,
    ground_truth_power,
    random_micro_trips,
    trip_energy_J,
    udds_like,
    wind_profile,
)

P, ENV = VehicleParams(), EnvConditions()


def test_regen_fraction_is_continuous_and_clipped():
    assert regen_fraction(5.0 - 1e-12) == pytest.approx(regen_fraction(5.0))
    assert regen_fraction(0.0) == 0.0
    assert regen_fraction(25.0) == pytest.approx(0.8)
    assert regen_fraction(100.0) == 1.0
    with pytest.raises(ValueError):
        regen_fraction(-1.0)


@given(st.floats(0.0, 60.0), st.floats(0.0, 60.0))
def test_regen_fraction_is_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    assert 0.0 <= regen_fraction(lo) <= regen_fraction(hi) <= 1.0


def test_motive_power_traction_branch_by_hand():
    v, a, grade, wind = 15.0, 0.5, 0.02, 3.0
    force = (P.mass_factor * P.mass_kg * a + P.mass_kg * 9.81 * (P.rolling_resist_coeff + grade)
             + 0.5 * 1.2 * P.drag_coeff * P.frontal_area_m2 * (v + wind) ** 2)
    expected = v * force / (P.trans_eff * P.elec_eff) + 300.0
    assert motive_power(v, a, grade, wind, 300.0, P, ENV) == pytest.approx(expected, rel=1e-12)


def test_motive_power_regen_branch_by_hand():
    v, a = 20.0, -2.0
    force = road_load(v, a, 0.0, 0.0, P, ENV)
    assert force < 0
    expected = regen_fraction(v) * v * P.trans_eff * P.motor_eff * force
    assert motive_power(v, a, 0.0, 0.0, 0.0, P, ENV) == pytest.approx(expected, rel=1e-12)


def test_tailwind_faster_than_vehicle_pushes():
    # air speed negative: drag becomes a forward push
    assert road_load(5.0, 0.0, 0.0, -10.0, P, ENV) < road_load(5.0, 0.0, 0.0, 0.0, P, ENV)


def test_motive_power_vectorises():
    v = np.array([0.0, 5.0, 20.0])
    out = motive_power(v, np.zeros(3), np.zeros(3), np.zeros(3), 0.0, P, ENV)
    assert out.shape == (3,)
    assert out[0] == 0.0


def test_power_cap_derating():
    assert power_cap(20.0, 80.0, P) == pytest.approx(P.rated_power_W)
    assert power_cap(-5.0, 80.0, P) == pytest.approx(0.7 * P.rated_power_W)
    assert power_cap(20.0, 10.0, P) == pytest.approx(0.6 * P.rated_power_W)
    assert power_cap(-20.0, 0.0, P) == pytest.approx(0.42 * P.rated_power_W)


def test_ground_truth_power_respects_cap():
    p = ground_truth_power(np.array([30.0]), np.array([3.0]), np.array([0.1]), np.array([0.0]),
                           np.array([0.0]), -5.0, 20.0, P, ENV)
    assert p[0] == pytest.approx(power_cap(-5.0, 20.0, P))


def test_beaufort_classes_tile_the_half_line():
    assert len(BEAUFORT_SCALE) == 13 and len(DRIVABLE_WIND_CLASSES) == 8
    for lower, upper in zip(BEAUFORT_SCALE, BEAUFORT_SCALE[1:]):
        assert lower.high_mps == upper.low_mps
    assert math.isinf(BEAUFORT_SCALE[-1].high_mps)


@given(st.floats(0.0, 60.0))
def test_classify_wind_picks_the_containing_class(speed):
    assert classify_wind(speed).contains(speed)


def test_classify_wind_rejects_bad_speed():
    for bad in (-1.0, float("nan")):
        with pytest.raises(ValueError):
            classify_wind(bad)


def test_wind_profile_stays_in_its_class():
    rng = np.random.default_rng(0)
    for cls in DRIVABLE_WIND_CLASSES:
        values = wind_profile(rng, cls.index).values
        assert all(cls.contains(abs(v)) for v in values[:: 50])


def test_drive_cycles_are_physical():
    for profile in bundled_cycles() + [random_micro_trips(np.random.default_rng(2))]:
        v = profile.values
        assert np.all(v >= 0) and v[0] == 0.0
    assert udds_like().values.max() == pytest.approx(91.2 / 3.6)


def test_generation_is_deterministic_and_conserves_energy(small_dataset):
    grid = default_grid(3, temps=(20.0,), socs=(60.0,), n_random_cycles=1, wind_classes=(0,),
                        aux_levels=(500.0,), grades=("flat", "uphill"), bundled=False)
    again = generate(grid, workers=1)
    assert len(again) == len(small_dataset)
    for a, b in zip(again.windows, small_dataset.windows):
        np.testing.assert_array_equal(a.act_pow, b.act_pow)
        np.testing.assert_array_equal(a.road_el, b.road_el)
    for trip in small_dataset.trips:
        energy = trip_energy_J(small_dataset, trip)
        soc_drop = (trip.initial_soc - trip.final_soc) * P.battery_capacity_J / 100.0
        scale = sum(np.abs(w.act_pow).sum() for w in small_dataset.trip_windows(trip))
        assert abs(soc_drop - energy) / scale <= 1e-6


def test_generated_soc_is_continuous_across_windows(small_dataset):
    trip = small_dataset.trips[0]
    windows = small_dataset.trip_windows(trip)
    for prev, nxt in zip(windows, windows[1:]):
        expected = prev.batt_soc - prev.act_pow.sum() / P.battery_capacity_J * 100.0
        assert nxt.batt_soc == pytest.approx(expected, abs=1e-9)


def test_parallel_generation_matches_serial():
    grid = default_grid(5, temps=(35.0,), socs=(50.0,), n_random_cycles=2, wind_classes=(3,),
                        aux_levels=(0.0,), grades=("flat",), bundled=False)
    serial, parallel = generate(grid, workers=1), generate(grid, workers=2)
    assert [t.label for t in serial.trips] == [t.label for t in parallel.trips]
    for a, b in zip(serial.windows, parallel.windows):
        np.testing.assert_array_equal(a.act_pow, b.act_pow)


def test_low_soc_cells_are_truncated_with_warning():
    grid = default_grid(0, temps=(20.0,), socs=(0.5,), n_random_cycles=1, wind_classes=(0,),
                        aux_levels=(977.0,), grades=("uphill",), bundled=False)
    ds = generate(grid, workers=1)
    assert ds.warnings
    for w in ds.windows:
        assert 0.0 <= w.batt_soc <= 100.0
