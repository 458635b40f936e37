import numpy as np
import pytest

from lapmo.losses import LossConfig, LossMode, position_loss
from lapmo.motion import MotionSequence, MotionSequence2D, Skeleton
from lapmo.tcn import (
    AdamConfig,
    ConvLayerSpec,
    NetworkSpec,
    NetworkState,
    StaleCacheError,
    TrainingDiverged,
    backward,
    batch_gradients,
    forward,
    forward_array,
    load_checkpoint,
    save_checkpoint,
    train_step,
)

from helpers import central_diff, rel_err


def tiny_spec(J=2, C=4, n_layers=2, kernel=3, dilations=(1, 2, 1), unit=1.0):
    widths = [2 * J] + [C] * (n_layers - 1) + [3 * J]
    layers = [
        ConvLayerSpec(
            widths[i],
            widths[i + 1],
            kernel,
            dilations[i],
            has_activation=i < n_layers - 1,
            residual=0 < i < n_layers - 1,
        )
        for i in range(n_layers)
    ]
    return NetworkSpec(tuple(layers), unit)


def _scalar_loss(state, x, w):
    y, _ = forward_array(state, x)
    return float(np.sum(w * y))


def test_spec_validation():
    with pytest.raises(ValueError, match="odd"):
        ConvLayerSpec(4, 4, kernel_size=2)
    with pytest.raises(ValueError, match="dilation"):
        ConvLayerSpec(4, 4, dilation=0)
    with pytest.raises(ValueError, match="width mismatch"):
        NetworkSpec((ConvLayerSpec(4, 8), ConvLayerSpec(4, 6, has_activation=False)))
    with pytest.raises(ValueError, match="linear"):
        NetworkSpec((ConvLayerSpec(4, 6),))
    spec = NetworkSpec.default(5)
    assert [l.dilation for l in spec.layers] == [1, 2, 4, 1]
    assert spec.layers[0].in_channels == 10 and spec.layers[-1].out_channels == 15
    assert spec.receptive_field == 17


@pytest.mark.parametrize("T", [1, 2, 3, 7, 64, 301])
def test_length_preserved(T):
    spec = NetworkSpec.default(5)
    state = NetworkState.init(spec, 0)
    x = MotionSequence2D(Skeleton.chain(5), 50.0, np.random.default_rng(T).normal(0, 100, (T, 5, 2)))
    out = forward(state, x)
    assert out.positions.shape == (T, 5, 3)


def test_zero_network_outputs_zero():
    state = NetworkState.zeros(NetworkSpec.default(3))
    x = MotionSequence2D(Skeleton.chain(3), 50.0, np.ones((9, 3, 2)))
    assert not forward(state, x).positions.any()


def test_channel_mismatch():
    state = NetworkState.init(NetworkSpec.default(3))
    with pytest.raises(ValueError, match="channel mismatch"):
        forward(state, MotionSequence2D(Skeleton.chain(4), 50.0, np.ones((4, 4, 2))))


def test_kernel1_linear_map_matches_dense_oracle():
    J = 3
    spec = NetworkSpec((ConvLayerSpec(2 * J, 3 * J, 1, 1, has_activation=False),), unit=1.0)
    state = NetworkState.init(spec)
    rng = np.random.default_rng(0)
    W = rng.normal(size=(3 * J, 2 * J))
    b = rng.normal(size=3 * J)
    state.weights[0][:, :, 0] = W
    state.biases[0][:] = b
    X = rng.normal(size=(5, J, 2))
    out = forward(state, MotionSequence2D(Skeleton.chain(J), 50.0, X)).positions
    for t in range(5):
        np.testing.assert_allclose(out[t].reshape(-1), W @ X[t].reshape(-1) + b, atol=1e-12)


@pytest.mark.parametrize("n_layers", [1, 2, 3])
def test_parameter_and_input_gradients(n_layers):
    rng = np.random.default_rng(n_layers)
    for trial in range(4):
        spec = tiny_spec(n_layers=n_layers, unit=float(rng.choice([1.0, 10.0])))
        state = NetworkState.init(spec, trial)
        x = rng.normal(0, 3, (2, 4, 6))
        y, cache = forward_array(state, x)
        w = rng.normal(size=y.shape)
        grads, gx = backward(state, cache, w)
        for p, g in zip(state.params(), grads):
            fd = central_diff(lambda _: _scalar_loss(state, x, w), p)
            assert rel_err(g, fd) <= 1e-4
        fdx = central_diff(lambda xx: _scalar_loss(state, xx, w), x.copy())
        assert rel_err(gx, fdx) <= 1e-4


def test_zero_and_linear_loss_grad():
    state = NetworkState.init(tiny_spec(), 0)
    x = np.random.default_rng(0).normal(size=(1, 4, 6))
    y, cache = forward_array(state, x)
    grads, gx = backward(state, cache, np.zeros_like(y))
    assert all(not g.any() for g in grads) and not gx.any()
    g = np.random.default_rng(1).normal(size=y.shape)
    g1, _ = backward(state, cache, g)
    g2, _ = backward(state, cache, 2 * g)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(b, 2 * a, rtol=1e-12, atol=1e-14)


def test_stale_cache_rejected():
    state = NetworkState.init(tiny_spec(), 0)
    y, cache = forward_array(state, np.ones((1, 4, 5)))
    state.touch()
    with pytest.raises(StaleCacheError):
        backward(state, cache, np.ones_like(y))


def test_receptive_field_locality():
    spec = NetworkSpec.default(3)
    state = NetworkState.init(spec, 3)
    half = spec.receptive_field // 2
    rng = np.random.default_rng(0)
    T = 60
    x = rng.normal(0, 100, (1, 6, T))
    base, _ = forward_array(state, x)
    for t in (0, 5, 30, T - 1):
        xp = x.copy()
        xp[0, :, t] += 50.0
        y, _ = forward_array(state, xp)
        changed = np.flatnonzero(np.any(y[0] != base[0], axis=0))
        assert changed.size and changed.min() >= t - half and changed.max() <= t + half


def _toy_batch(J=2, T=8, seed=0, n=1):
    rng = np.random.default_rng(seed)
    sk = Skeleton.chain(J)
    M = rng.normal(size=(3 * J, 2 * J))
    batch = []
    for _ in range(n):
        X = rng.normal(0, 100, (T, J, 2))
        Y = (X.reshape(T, -1) @ M.T).reshape(T, J, 3)
        batch.append((MotionSequence2D(sk, 50.0, X), MotionSequence(sk, 50.0, Y)))
    return batch


def test_zero_learning_rate_keeps_parameters():
    state = NetworkState.init(NetworkSpec.default(2), 0)
    before = [p.copy() for p in state.params()]
    state, _ = train_step(state, _toy_batch(), "p", opt=AdamConfig(lr=0.0))
    assert state.step == 1
    for a, b in zip(before, state.params()):
        np.testing.assert_array_equal(a, b)


def test_convex_toy_loss_decreases():
    J = 2
    spec = NetworkSpec((ConvLayerSpec(2 * J, 3 * J, 1, 1, has_activation=False),), unit=100.0)
    state = NetworkState.init(spec, 0)
    batch = _toy_batch(J)
    losses = []
    for _ in range(100):
        state, loss = train_step(state, batch, LossMode.P_ONLY, opt=AdamConfig(lr=1e-2))
        losses.append(loss)
    ups = sum(b >= a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0] and ups <= 5


def test_duplicated_batch_same_gradient_direction():
    state = NetworkState.init(tiny_spec(), 0)
    batch = _toy_batch(n=3)
    _, g1 = batch_gradients(state, batch)
    _, g2 = batch_gradients(state, batch + batch)
    v1 = np.concatenate([g.ravel() for g in g1])
    v2 = np.concatenate([g.ravel() for g in g2])
    np.testing.assert_allclose(v1 / np.linalg.norm(v1), v2 / np.linalg.norm(v2), atol=1e-12)


def test_divergence_detected():
    state = NetworkState.init(tiny_spec(), 0)
    state.weights[0][...] = np.nan
    state.touch()
    with pytest.raises(TrainingDiverged):
        train_step(state, _toy_batch(), "p")


def test_batch_needs_uniform_length():
    a = _toy_batch(T=6)
    b = _toy_batch(T=7)
    with pytest.raises(ValueError, match="uniform"):
        batch_gradients(NetworkState.init(tiny_spec()), a + b)


def test_deterministic_training():
    batch = _toy_batch(n=4)
    runs = []
    for _ in range(2):
        state = NetworkState.init(NetworkSpec.default(2), 7)
        for _ in range(5):
            state, _ = train_step(state, batch, "plap", LossConfig())
        runs.append(np.concatenate([p.ravel() for p in state.params()]))
    assert runs[0].tobytes() == runs[1].tobytes()


def test_train_step_reports_pre_step_loss():
    state = NetworkState.init(NetworkSpec.default(2), 1)
    batch = _toy_batch(n=2)
    expected = np.mean([position_loss(forward(state, x), y).value for x, y in batch])
    _, loss = train_step(state, batch, "p")
    assert loss == pytest.approx(expected, rel=1e-12)


def test_checkpoint_round_trip(tmp_path):
    state = NetworkState.init(NetworkSpec.default(3), 5)
    state.step = 12
    path = tmp_path / "net.ckpt"
    save_checkpoint(state, path)
    raw = path.read_bytes()
    assert raw[:8] == b"LAPMOCK1"
    back = load_checkpoint(path)
    assert back.spec == state.spec and back.step == 12 and back.seed == 5
    for a, b in zip(state.params(), back.params()):
        np.testing.assert_array_equal(a.astype(np.float32), b)
    n_params = sum(p.size for p in state.params())
    header_len = int.from_bytes(raw[8:12], "little")
    assert len(raw) - 12 - header_len == 4 * n_params
