"""Longitudinal vehicle dynamics shared by the generator and the physics baselines.

Everything here is vectorised: scalars and equal-shape numpy arrays both work.
"""

from __future__ import annotations

import numpy as np

from .core import EnvConditions, VehicleParams

# Temperature derating breakpoints (degC -> factor) and SOC derating (% -> factor).
TEMP_DERATE = ((-5.0, 0.7), (15.0, 1.0))
SOC_DERATE = ((10.0, 0.6), (40.0, 1.0))


def regen_fraction(v):
    """Share of braking energy the motor can recover, as a function of speed.

    Continuous at 5 m/s; clipped to 1 above ~38 m/s where the linear branch
    would exceed full recovery.
    """
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("speed must be non-negative")
    k = np.where(v >= 5.0, 0.5 + 0.3 * (v - 5.0) / 20.0, 0.5 * v / 5.0)
    k = np.minimum(k, 1.0)
    return float(k) if k.ndim == 0 else k


def road_load(v, dvdt, grade, wind, params: VehicleParams, env: EnvConditions):
    """Total longitudinal force demand (N): inertia, rolling + grade, aerodynamic drag.

    Drag acts on the air speed ``v + wind`` (headwind positive) and keeps its
    sign when a tailwind overtakes the vehicle.
    """
    air = np.add(v, wind)
    return (
        params.mass_factor * params.mass_kg * np.asarray(dvdt)
        + params.mass_kg * env.gravity * (params.rolling_resist_coeff + np.asarray(grade))
        + 0.5 * env.air_density * params.drag_coeff * params.frontal_area_m2 * air * np.abs(air)
    )


def motive_power(v, dvdt, grade, wind, p_accessory, params: VehicleParams, env: EnvConditions):
    """Battery power (W): traction branch for non-negative demand, regenerative otherwise."""
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("speed must be non-negative")
    demand = road_load(v, dvdt, grade, wind, params, env)
    traction = v * demand / (params.trans_eff * params.elec_eff)
    regen = regen_fraction(v) * v * params.trans_eff * params.motor_eff * demand
    power = np.where(demand >= 0, traction, regen) + p_accessory
    return float(power) if power.ndim == 0 else power


def _interp_factor(x, table) -> np.ndarray:
    (x0, y0), (x1, y1) = table
    return np.interp(x, [x0, x1], [y0, y1])


def power_cap(temp_C, soc, params: VehicleParams):
    """Maximum battery discharge power (W) at the given temperature and SOC."""
    cap = params.rated_power_W * _interp_factor(temp_C, TEMP_DERATE) * _interp_factor(soc, SOC_DERATE)
    return float(cap) if np.ndim(cap) == 0 else cap
