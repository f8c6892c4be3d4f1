import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evrk.pce import io as pce_io
from evrk.pce.layers import avg_pool, avg_pool_backward, conv1d, dropout, xavier_bound, xavier_init
from evrk.pce.network import (
    CnnArchitecture,
    conv_features,
    encode,
    forward,
    forward_batch,
    head,
    init_model,
    predict_arrays,
    shape_ledger,
)
from evrk.pce.optim import AdamState, DivergenceError, adam_step
from evrk.pce.training import train
from evrk.prep import stack_windows
from conftest import gradient_relative_errors, random_window, reduced_network


def naive_conv1d(x, kernels, bias):
    c_out, c_in, k = kernels.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad)))
    out = np.zeros((c_out, x.shape[1]))
    for o in range(c_out):
        for t in range(x.shape[1]):
            out[o, t] = bias[o] + sum(kernels[o, c, j] * xp[c, t + j] for c in range(c_in) for j in range(k))
    return out


@given(st.integers(1, 3), st.integers(1, 3), st.sampled_from([1, 3, 5, 7]), st.integers(5, 16), st.integers(0, 99))
def test_conv1d_matches_loop_oracle(c_in, c_out, k, length, seed):
    rng = np.random.default_rng(seed)
    x, w, b = rng.normal(size=(c_in, length)), rng.normal(size=(c_out, c_in, k)), rng.normal(size=c_out)
    np.testing.assert_allclose(conv1d(x, w, b), naive_conv1d(x, w, b), rtol=1e-12, atol=1e-12)


def test_conv1d_delta_kernel_is_identity():
    x = np.arange(10.0)[None]
    kernel = np.zeros((1, 1, 3))
    kernel[0, 0, 1] = 1.0
    np.testing.assert_array_equal(conv1d(x, kernel, np.zeros(1))[0], x[0])


def test_conv1d_rejects_even_kernels():
    with pytest.raises(ValueError):
        conv1d(np.zeros((1, 8)), np.zeros((1, 1, 4)), np.zeros(1))


@given(arrays(np.float64, st.integers(2, 31), elements=st.floats(-1e3, 1e3)))
def test_avg_pool_floor_and_adjoint(x):
    pooled = avg_pool(x)
    assert pooled.size == x.size // 2
    np.testing.assert_allclose(pooled, [(x[2 * i] + x[2 * i + 1]) / 2 for i in range(x.size // 2)])
    # backward is the adjoint of forward: <pool(x), g> == <x, pool^T(g)>
    g = np.linspace(-1, 1, pooled.size)
    assert np.dot(pooled, g) == pytest.approx(np.dot(x, avg_pool_backward(g, x.size)), rel=1e-9, abs=1e-9)


def test_dropout_is_inverted_and_identity_at_inference():
    x = np.ones((200, 50))
    out, mask = dropout(x, 0.2, True, np.random.default_rng(0))
    assert set(np.unique(out)) <= {0.0, 1.25}
    assert out.mean() == pytest.approx(1.0, abs=0.02)
    same, none = dropout(x, 0.2, False, np.random.default_rng(0))
    assert same is x and none is None
    with pytest.raises(ValueError):
        dropout(x, 1.0, True, np.random.default_rng(0))


def test_xavier_init_bounds():
    w = xavier_init(30, 70, np.random.default_rng(0))
    bound = xavier_bound(30, 70)
    assert bound == pytest.approx(np.sqrt(6 / 100))
    assert np.all(np.abs(w) <= bound) and np.abs(w).max() > 0.9 * bound


def test_gradients_match_central_differences():
    model, x, s, y = reduced_network()
    errors = gradient_relative_errors(model, x, s, y)
    assert np.mean(errors < 1e-4) >= 0.99


def test_gradients_without_dropout():
    model, x, s, y = reduced_network(seed=3, dropout=0.0)
    errors = gradient_relative_errors(model, x, s, y)
    assert np.mean(errors < 1e-4) >= 0.99


def test_shape_ledger_full_network(rng):
    model = init_model(CnnArchitecture(), rng)
    shapes = shape_ledger(model, rng.random((3, 5, 100)), rng.random((3, 2)))
    for k in (3, 5, 7):
        assert [shapes[f"branch{k}.stage{i}"][-1] for i in range(3)] == [50, 25, 12]
        assert shapes[f"branch{k}.stage2"] == (3, 5, 4, 12)
    assert shapes["residual"] == (3, 5, 1, 12)
    assert shapes["block"] == (3, 5, 13, 12)
    assert shapes["flat"] == (3, 780)
    assert shapes["concat"] == (3, 782)
    assert shapes["output"] == (3, 10)


def test_architecture_arithmetic():
    arch = CnnArchitecture()
    assert arch.stage_lengths == (100, 50, 25, 12)
    assert (arch.block_channels, arch.flat_len, arch.final_len) == (13, 780, 782)
    with pytest.raises(ValueError):
        CnnArchitecture(kernel_sizes=(3, 4, 7))
    with pytest.raises(ValueError):
        CnnArchitecture(window_len=4)


def test_forward_rejects_wrong_shapes(rng):
    model = init_model(CnnArchitecture(hidden=8), rng)
    with pytest.raises(ValueError):
        forward_batch(model, rng.random((2, 4, 100)), rng.random((2, 2)))
    with pytest.raises(ValueError):
        forward_batch(model, rng.random((2, 5, 100)), rng.random((2, 2)), training=True)


def test_split_inference_equals_forward_batch(rng, small_dataset):
    model = init_model(CnnArchitecture(hidden=16), rng)
    arrays = stack_windows(small_dataset.windows[:8])
    model = train(model, arrays, epochs=1, batch_size=8).model
    x, s, _ = encode(model, arrays)
    np.testing.assert_array_equal(head(model, conv_features(model, x), s), forward_batch(model, x, s)[0])


def test_forward_single_window(rng, small_dataset):
    model = train(init_model(CnnArchitecture(hidden=8), rng), small_dataset, epochs=1).model
    w = small_dataset.windows[0]
    x, s, _ = encode(model, stack_windows([w]))
    np.testing.assert_array_equal(forward(model, w), forward_batch(model, x, s)[0][0])
    assert forward(model, w).shape == (10,)


def test_adam_first_step_by_hand():
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.array([0.5, -4.0])}
    state = AdamState(alpha=0.1)
    adam_step(params, grads, state)
    # first bias-corrected step moves each weight by alpha * sign(g) (up to eps)
    np.testing.assert_allclose(params["w"], [0.9, -1.9], atol=1e-7)
    assert state.step == 1


def test_adam_rejects_bad_gradients():
    params = {"w": np.zeros(2)}
    with pytest.raises(DivergenceError):
        adam_step(params, {"w": np.array([np.nan, 0.0])}, AdamState())
    with pytest.raises(ValueError):
        adam_step(params, {"w": np.zeros(3)}, AdamState())


def test_training_is_deterministic_and_records_history(small_dataset):
    arch = CnnArchitecture(hidden=8)
    runs = [train(init_model(arch, np.random.default_rng(1)), small_dataset, small_dataset, epochs=2,
                  batch_size=32, rng_seed=9) for _ in range(2)]
    assert runs[0].history == runs[1].history
    assert [h[0] for h in runs[0].history] == [1, 2]
    for name in runs[0].model.params:
        np.testing.assert_array_equal(runs[0].model.params[name], runs[1].model.params[name])


def test_training_needs_targets(rng):
    model = init_model(CnnArchitecture(hidden=8), rng)
    with pytest.raises(ValueError):
        train(model, stack_windows([random_window(rng, with_target=False)]), epochs=1)


def test_float32_compute_tracks_float64(small_dataset):
    arch = CnnArchitecture(hidden=16)
    m64 = train(init_model(arch, np.random.default_rng(0)), small_dataset, epochs=1).model
    m32 = m64.astype(np.float32)
    arrays = stack_windows(small_dataset.windows[:16])
    p64, p32 = predict_arrays(m64, arrays), predict_arrays(m32, arrays)
    assert p32.dtype == np.float64
    scale = np.abs(p64).max()
    assert np.abs(p32 - p64).max() <= 1e-4 * scale


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_model_file_round_trip(tmp_path, small_dataset, dtype):
    model = train(init_model(CnnArchitecture(hidden=8), np.random.default_rng(0), dtype=dtype), small_dataset,
                  epochs=1).model
    model.meta["note"] = "round trip"
    path = tmp_path / "m.pce1"
    pce_io.save(model, path)
    loaded = pce_io.load(path)
    assert loaded.arch == model.arch and loaded.dtype == model.dtype
    assert loaded.norm == model.norm and loaded.meta == model.meta
    for name, value in model.params.items():
        np.testing.assert_array_equal(loaded.params[name], value)
    assert pce_io.dumps(loaded) == path.read_bytes()
    for cut in (10, 200, len(path.read_bytes()) - 4):
        with pytest.raises(ValueError):
            pce_io.loads(path.read_bytes()[:cut])


def test_model_file_rejects_garbage():
    with pytest.raises(ValueError):
        pce_io.loads(b"NOPE" + bytes(20))
