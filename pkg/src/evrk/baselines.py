"""The four comparison techniques: Galvin, Yang, Alvarez and a Modi-style CNN.

Galvin and Yang are closed-form power models evaluated at 10 Hz and averaged
per second. Alvarez is a trip-level affine model on 14 speed/acceleration/jerk
statistics. The Modi-style model is the block CNN with three input channels
(grade, speed, tractive effort) and no scalar inputs.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import astuple, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .core import WINDOW_HZ, EnvConditions, PartitionedWindow, TimeSeries, Unit, VehicleParams
from .pce.network import CnnArchitecture, CnnModel, init_model, predict_arrays
from .pce.optim import AdamState, adam_step
from .pce.training import TrainResult, train
from .physics import motive_power
from .prep import WindowArrays, fit_normalization, per_second_mean, stack_windows

log = logging.getLogger(__name__)

DT = 1.0 / WINDOW_HZ
CRUISE_ACCEL = 0.1  # m/s^2; |a| below this counts as cruising
STOP_SPEED = 0.1  # m/s; below this the vehicle is at rest


# --- Galvin -------------------------------------------------------------------

def galvin_power(v, a):
    """Speed/acceleration regression for a Nissan Leaf SV (W)."""
    v = np.asarray(v, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    p = 479.1 * v - 18.93 * v ** 2 + 0.7876 * v ** 3 + 1507.0 * v * a
    return float(p) if p.ndim == 0 else p


def galvin_windows(windows: Sequence[PartitionedWindow]) -> np.ndarray:
    """Per-second Galvin estimates, shape (N, 10)."""
    arrays = stack_windows(windows)
    return per_second_mean(galvin_power(arrays.channels[:, 0], arrays.channels[:, 2]))


# --- Yang ---------------------------------------------------------------------

def yang_power(v, dvdt, grade, params: VehicleParams = VehicleParams(), env: EnvConditions = EnvConditions(),
               p_accessory=0.0):
    """Traction/regeneration power model without wind, temperature or SOC effects (W)."""
    return motive_power(v, dvdt, grade, 0.0, p_accessory, params, env)


def yang_windows(windows: Sequence[PartitionedWindow], params: VehicleParams = VehicleParams(),
                 env: EnvConditions = EnvConditions()) -> np.ndarray:
    """Per-second Yang estimates; the accessory power is the aux channel plus the vehicle baseline."""
    arrays = stack_windows(windows)
    speed, grade, accel, aux = (arrays.channels[:, i] for i in range(4))
    return per_second_mean(yang_power(speed, accel, grade, params, env, aux + params.accessory_base_W))


# --- tractive effort and the Modi-style CNN -----------------------------------

@dataclass(frozen=True)
class TractiveBreakdown:
    f_ad: np.ndarray
    f_rr: np.ndarray
    f_hc: np.ndarray
    f_la: np.ndarray
    f_wa: np.ndarray
    t_eff: np.ndarray


def tractive_effort(v, dvdt, grade, wind=0.0, params: VehicleParams = VehicleParams(),
                    env: EnvConditions = EnvConditions()) -> TractiveBreakdown:
    """Aerodynamic, rolling, hill-climb, linear and rotational force components (N).

    Rolling resistance is zero at standstill. ``t_eff`` is the plain sum of
    the five components in that order.
    """
    v = np.asarray(v, dtype=np.float64)
    dvdt = np.asarray(dvdt, dtype=np.float64)
    air = v + np.asarray(wind, dtype=np.float64)
    m = params.mass_kg
    f_ad = 0.5 * env.air_density * params.drag_coeff * params.frontal_area_m2 * air * np.abs(air)
    f_rr = np.where(v > 0, m * env.gravity * params.rolling_resist_coeff, 0.0)
    f_hc = m * env.gravity * np.asarray(grade, dtype=np.float64) + np.zeros_like(v)
    f_la = m * dvdt
    f_wa = (params.mass_factor - 1.0) * m * dvdt
    return TractiveBreakdown(f_ad, f_rr, f_hc, f_la, f_wa, f_ad + f_rr + f_hc + f_la + f_wa)


MODI_CHANNELS = ("road_el", "veh_sp", "t_eff")


def modi_architecture(hidden: int = 128, dropout: float = 0.2) -> CnnArchitecture:
    return CnnArchitecture(hidden=hidden, dropout=dropout, n_blocks=len(MODI_CHANNELS), n_scalars=0)


def modi_arrays(windows: Sequence[PartitionedWindow], params: VehicleParams = VehicleParams(),
                env: EnvConditions = EnvConditions()) -> WindowArrays:
    """Grade, speed and wind-free tractive effort channels; no scalars."""
    full = stack_windows(windows)
    speed, grade, accel = full.channels[:, 0], full.channels[:, 1], full.channels[:, 2]
    t_eff = tractive_effort(speed, accel, grade, 0.0, params, env).t_eff
    return WindowArrays(np.stack([grade, speed, t_eff], axis=1), np.empty((len(windows), 0)), full.target)


def modi_init(rng: np.random.Generator, hidden: int = 128, dropout: float = 0.2) -> CnnModel:
    return init_model(modi_architecture(hidden, dropout), rng, None, MODI_CHANNELS, ())


def modi_train(train_windows, valid_windows=None, epochs: int = 100, batch_size: int = 64, rng_seed: int = 0,
               hidden: int = 128, dropout: float = 0.2, params: VehicleParams = VehicleParams(),
               **kwargs) -> TrainResult:
    model = modi_init(np.random.default_rng(rng_seed), hidden, dropout)
    tr = modi_arrays(train_windows, params)
    model.norm = fit_normalization(tr, MODI_CHANNELS, (), model.target_name)
    va = modi_arrays(valid_windows, params) if valid_windows else None
    return train(model, tr, va, epochs, batch_size, rng_seed, in_place=True, **kwargs)


def modi_windows(model: CnnModel, windows: Sequence[PartitionedWindow],
                 params: VehicleParams = VehicleParams()) -> np.ndarray:
    return predict_arrays(model, modi_arrays(windows, params))


# --- Alvarez ------------------------------------------------------------------

@dataclass(frozen=True)
class TripStats:
    """Fourteen trip statistics in fixed order.

    The jerk segments are a stand-in convention (the source model's exact
    definitions are unavailable): SMJ covers acceleration runs that start
    from rest, SBJ covers deceleration runs that end at rest, CTJ covers
    moving samples with |a| below 0.1 m/s^2, and EBJ is the trip's final
    deceleration run (taking precedence over SBJ). Empty classes give zero.
    """

    speed_mean: float
    speed_var: float
    pos_acc_mean: float
    pos_acc_var: float
    neg_acc_mean: float
    neg_acc_var: float
    smj_mean: float
    smj_var: float
    sbj_mean: float
    sbj_var: float
    ctj_mean: float
    ctj_var: float
    ebj_mean: float
    ebj_var: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))


def _mean_var(x: np.ndarray):
    return (float(np.mean(x)), float(np.var(x))) if x.size else (0.0, 0.0)


def _runs(mask: np.ndarray):
    """(start, stop) of each run of True values."""
    edges = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def jerk_segments(speed: np.ndarray, dt: float = DT) -> dict:
    """Boolean sample masks for the smj/sbj/ctj/ebj classes, plus accel and jerk."""
    v = np.asarray(speed, dtype=np.float64)
    a = np.gradient(v, dt)
    jerk = np.gradient(a, dt)
    at_rest = v < STOP_SPEED
    masks = {k: np.zeros(v.size, dtype=bool) for k in ("smj", "sbj", "ctj", "ebj")}
    masks["ctj"] = (~at_rest) & (np.abs(a) < CRUISE_ACCEL)
    for start, stop in _runs(a >= CRUISE_ACCEL):
        if at_rest[max(start - 1, 0)]:
            masks["smj"][start:stop] = True
    braking = _runs(a <= -CRUISE_ACCEL)
    for start, stop in braking:
        if at_rest[min(stop, v.size - 1)]:
            masks["sbj"][start:stop] = True
    if braking:
        start, stop = braking[-1]
        masks["sbj"][start:stop] = False
        masks["ebj"][start:stop] = True
    return {"accel": a, "jerk": jerk, **masks}


def alvarez_features(cycle: TimeSeries) -> TripStats:
    values = np.asarray(cycle.values, dtype=np.float64)
    if values.size < 3:
        raise ValueError("a cycle needs at least 3 samples")
    seg = jerk_segments(values, 1.0 / cycle.sample_rate_hz)
    a, jerk = seg["accel"], seg["jerk"]
    stats = [*_mean_var(values), *_mean_var(a[a > 0]), *_mean_var(a[a < 0])]
    for key in ("smj", "sbj", "ctj", "ebj"):
        stats.extend(_mean_var(jerk[seg[key]]))
    return TripStats(*stats)


def trip_speed(windows: Sequence[PartitionedWindow]) -> TimeSeries:
    return TimeSeries(np.concatenate([w.veh_sp for w in windows]), WINDOW_HZ, Unit.MPS)


@dataclass
class AlvarezModel:
    weights: np.ndarray  # (14,) in natural feature units
    bias: float
    underdetermined: bool = False
    history: list = field(default_factory=list)

    def predict(self, stats) -> float:
        x = stats.as_array() if isinstance(stats, TripStats) else np.asarray(stats, dtype=np.float64)
        return float(x @ self.weights + self.bias)


def alvarez_fit(stats: Sequence, energies_J: Sequence[float], epochs: int = 20000, alpha: float = 0.01,
                rng_seed: int = 0) -> AlvarezModel:
    """Affine trip-energy model (14 weights + bias) fitted by full-batch Adam on MSE.

    Features and target are standardised for the optimiser and the weights
    mapped back to natural units. The step size halves every fifth of the
    run so the iterates settle. Fewer than 15 trips cannot identify the
    model; this is flagged, not rejected.
    """
    x = np.array([s.as_array() if isinstance(s, TripStats) else np.asarray(s, dtype=np.float64) for s in stats])
    y = np.asarray(energies_J, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.size or y.size == 0:
        raise ValueError("need one energy per trip statistics row")
    underdetermined = x.shape[0] < x.shape[1] + 1
    if underdetermined:
        warnings.warn(f"Alvarez model fitted on {x.shape[0]} trips; 15 are needed to identify it")
    mu, sd = x.mean(axis=0), x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    y_mu, y_sd = y.mean(), y.std() or 1.0
    xs, ys = (x - mu) / sd, (y - y_mu) / y_sd
    rng = np.random.default_rng(rng_seed)
    params = {"w": rng.uniform(-0.1, 0.1, x.shape[1]), "b": np.zeros(1)}
    state = AdamState(alpha=alpha)
    history = []
    decay_every = max(epochs // 5, 1)
    for epoch in range(epochs):
        if epoch and epoch % decay_every == 0:
            state.alpha *= 0.5
        diff = xs @ params["w"] + params["b"][0] - ys
        grad = 2.0 * diff / diff.size
        adam_step(params, {"w": xs.T @ grad, "b": np.array([grad.sum()])}, state)
        if epoch % 100 == 0:
            history.append(float(np.mean(diff * diff)))
    w = params["w"] / sd * y_sd
    b = float(y_mu + y_sd * params["b"][0] - w @ mu)
    return AlvarezModel(w, b, underdetermined, history)


def alvarez_predict(model: AlvarezModel, stats) -> float:
    return model.predict(stats)
