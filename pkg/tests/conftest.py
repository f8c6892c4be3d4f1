import numpy as np
import pytest
from hypothesis import settings

from evrk import bdt
from evrk.core import PartitionedWindow
from evrk.pce.network import CnnArchitecture, backward, forward_batch, init_model, mse_loss
from evrk.pce.training import train
from evrk.pipeline import fine_tuner_training_set
from evrk.simgen import default_grid, generate

settings.register_profile("evrk", deadline=None, max_examples=60)
settings.load_profile("evrk")


def random_window(rng, soc=50.0, t0=0.0, with_target=True):
    speed = np.abs(rng.normal(12.0, 4.0, 100))
    return PartitionedWindow(
        veh_sp=speed,
        road_el=np.cumsum(rng.normal(0.0, 0.02, 100)),
        veh_acc=rng.normal(0.0, 0.5, 100),
        aux_ld=rng.uniform(0.0, 1000.0, 100),
        wind_sp=rng.normal(0.0, 3.0, 100),
        env_temp=float(rng.uniform(-5.0, 35.0)),
        batt_soc=soc,
        act_pow=rng.normal(5000.0, 3000.0, 10) if with_target else None,
        t0_s=t0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    """Two short simulated trips (flat and uphill, 20 C, 60 % SOC)."""
    grid = default_grid(3, temps=(20.0,), socs=(60.0,), n_random_cycles=1, wind_classes=(0,),
                        aux_levels=(500.0,), grades=("flat", "uphill"), bundled=False)
    return generate(grid, workers=1)


@pytest.fixture(scope="session")
def tiny_system(small_dataset):
    """A briefly trained CNN plus a small fine tuner; fast, not accurate."""
    model = init_model(CnnArchitecture(hidden=16), np.random.default_rng(0))
    cnn = train(model, small_dataset, epochs=2, batch_size=32, rng_seed=0).model
    rows, targets = fine_tuner_training_set(cnn, small_dataset.windows)
    tuner = bdt.fit_bagged(rows, targets, n_trees=3, max_depth=6, min_leaf_size=5, rng_seed=0)
    return cnn, tuner


def gradient_relative_errors(model, x, s, y, step=1e-5, seed=5):
    """Relative error of every analytic gradient entry against central differences."""

    def loss():
        out, _ = forward_batch(model, x, s, True, np.random.default_rng(seed))
        return mse_loss(out, y)[0]

    out, cache = forward_batch(model, x, s, True, np.random.default_rng(seed), keep_cache=True)
    grads = backward(model, cache, mse_loss(out, y)[1])
    errors = []
    for name, p in model.params.items():
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + step
            up = loss()
            p[i] = old - step
            down = loss()
            p[i] = old
            numeric = (up - down) / (2 * step)
            analytic = grads[name][i]
            errors.append(abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8))
    return np.array(errors)


def reduced_network(seed=0, dropout=0.2):
    """One-block, 20-sample CNN with perturbed biases, small enough for exhaustive checks."""
    arch = CnnArchitecture(hidden=16, n_blocks=1, window_len=20, dropout=dropout)
    rng = np.random.default_rng(seed)
    model = init_model(arch, rng, input_names=("veh_sp",))
    for p in model.params.values():
        p += rng.normal(0.0, 0.05, p.shape)
    x, s, y = rng.random((4, 1, 20)), rng.random((4, 2)), rng.random((4, 10))
    return model, x, s, y
