import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import weighted_sum_loss
from gripplus import tensor as T
from gripplus.errors import DimensionError, ParameterError, UsageError
from gripplus.gradcheck import check_gradients, numeric_grad, rel_error
from gripplus.tensor import BatchNormStats, Tensor, no_grad

TOL = 1e-4
SEEDS = range(10)


def _param(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _check(build, tensors, rng, out_shape=None):
    """Probe every tensor through sum(op(...) * W) for a fixed random W."""
    with no_grad():
        shape = build().shape if out_shape is None else out_shape
    w = rng.standard_normal(shape)
    report = check_gradients(lambda: weighted_sum_loss(build(), w), tensors)
    worst = max(report.values())
    assert worst < TOL, report


# --- gradient checks per op ---------------------------------------------

@pytest.mark.parametrize("seed", SEEDS)
def test_grad_elementwise(seed):
    rng = np.random.default_rng(seed)
    a, b = _param(rng, 3, 4), _param(rng, 3, 4)
    _check(lambda: a + b, {"a": a, "b": b}, rng)
    _check(lambda: a - b, {"a": a, "b": b}, rng)
    _check(lambda: a * b, {"a": a, "b": b}, rng)
    _check(lambda: -a * 2.5 + 1.0, {"a": a}, rng)
    _check(lambda: T.tanh(a), {"a": a}, rng)
    _check(lambda: T.sigmoid(a), {"a": a}, rng)
    _check(lambda: T.relu(a), {"a": a}, rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_shape_ops(seed):
    rng = np.random.default_rng(seed)
    a = _param(rng, 2, 3, 4)
    b = _param(rng, 2, 3, 4)
    _check(lambda: a.reshape(6, 4), {"a": a}, rng)
    _check(lambda: a.transpose(2, 0, 1), {"a": a}, rng)
    _check(lambda: a[:, 1:, ::2], {"a": a}, rng)
    _check(lambda: a.sum(axis=1), {"a": a}, rng)
    _check(lambda: T.tsum(a, axis=2, keepdims=True), {"a": a}, rng)
    _check(lambda: T.mean(a).reshape(1), {"a": a}, rng)
    _check(lambda: T.stack([a, b], axis=1), {"a": a, "b": b}, rng)
    _check(lambda: T.concat([a, b], axis=-1), {"a": a, "b": b}, rng)
    _check(lambda: T.cumsum(a, axis=1), {"a": a}, rng)
    _check(lambda: T.norm(a, axis=-1), {"a": a}, rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_linear_algebra(seed):
    rng = np.random.default_rng(seed)
    a, m = _param(rng, 3, 4), _param(rng, 4, 5)
    _check(lambda: a @ m, {"a": a, "m": m}, rng)
    x, w, bias = _param(rng, 2, 3, 4), _param(rng, 5, 4), _param(rng, 5)
    _check(lambda: T.linear(x, w, bias), {"x": x, "w": w, "b": bias}, rng)
    _check(lambda: T.conv_channel_mix(x, w, bias), {"x": x, "w": w, "b": bias}, rng)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("stride,padding", [(1, 1), (2, 1), (1, 0)])
def test_grad_conv_temporal(seed, stride, padding):
    rng = np.random.default_rng(seed)
    x, w, bias = _param(rng, 2, 3, 6, 4), _param(rng, 5, 4, 3), _param(rng, 5)
    _check(lambda: T.conv_temporal(x, w, bias, stride, padding), {"x": x, "w": w, "b": bias}, rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_graph_mix(seed):
    rng = np.random.default_rng(seed)
    f, gt = _param(rng, 2, 4, 3, 5), _param(rng, 4, 4)
    g = rng.standard_normal((2, 3, 4, 4))
    _check(lambda: T.graph_mix(f, g, gt), {"f": f, "g_train": gt}, rng)
    _check(lambda: T.graph_mix(f, g), {"f": f}, rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_batch_norm(seed):
    rng = np.random.default_rng(seed)
    x, s, b = _param(rng, 2, 3, 4, 5), _param(rng, 5), _param(rng, 5)
    stats = BatchNormStats(5)
    _check(lambda: T.batch_norm(x, s, b, stats, training=True), {"x": x, "scale": s, "shift": b}, rng)
    _check(lambda: T.batch_norm(x, s, b, stats, training=False), {"x": x, "scale": s, "shift": b}, rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_dropout_fixed_mask(seed):
    rng = np.random.default_rng(seed)
    x = _param(rng, 4, 6)
    _check(lambda: T.dropout(x, 0.3, True, np.random.default_rng(seed)), {"x": x}, rng)


# --- semantics ----------------------------------------------------------

def test_backward_requires_scalar():
    a = Tensor(np.ones((2, 2)), True)
    with pytest.raises(UsageError):
        (a * 2.0).backward()


def test_backward_requires_connection():
    with pytest.raises(UsageError):
        Tensor(np.ones(1)).backward()


def test_gradients_accumulate_and_reset():
    a = Tensor(np.array([2.0]), True)
    (a * 3.0).sum().backward()
    (a * 3.0).sum().backward()
    assert a.grad[0] == 6.0
    T.zero_grad([a])
    assert a.grad is None


def test_shared_subexpression_counts_every_use():
    a = Tensor(np.array([1.5, -2.0]), True)
    y = a * a
    (y + y).sum().backward()
    assert np.allclose(a.grad, 4 * a.data)


def test_deep_chain_order():
    # a long chain exercises the reverse tape ordering without recursion
    a = Tensor(np.array([0.1]), True)
    y = a
    for _ in range(2000):
        y = y * 1.0001
    y.sum().backward()
    assert np.isclose(a.grad[0], 1.0001 ** 2000)


def test_no_grad_records_nothing_and_is_thread_local():
    a = Tensor(np.ones(3), True)
    seen = {}

    def worker():
        seen["enabled"] = T.is_grad_enabled()

    with no_grad():
        b = a * 2.0
        th = threading.Thread(target=worker)
        th.start()
        th.join()
    assert not b.requires_grad and b.is_leaf
    assert seen["enabled"] is True
    assert T.is_grad_enabled()


def test_shape_mismatch_is_rejected():
    with pytest.raises(DimensionError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((3, 2)))
    with pytest.raises(DimensionError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        T.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_norm_gradient_at_zero_is_zero():
    x = Tensor(np.zeros((1, 2)), True)
    T.norm(x).sum().backward()
    assert np.all(x.grad == 0.0)


def test_sigmoid_is_exactly_half_at_zero_and_stable():
    y = T.sigmoid(Tensor(np.array([0.0, 800.0, -800.0]))).data
    assert y[0] == 0.5 and y[1] == 1.0 and y[2] == 0.0


def test_conv_temporal_matches_direct_sum(rng):
    x = rng.standard_normal((3, 5, 2))
    w = rng.standard_normal((4, 2, 3))
    b = rng.standard_normal(4)
    out = T.conv_temporal(Tensor(x), Tensor(w), Tensor(b)).data
    xp = np.pad(x, ((0, 0), (1, 1), (0, 0)))
    ref = np.zeros((3, 5, 4))
    for n in range(3):
        for t in range(5):
            for o in range(4):
                ref[n, t, o] = b[o] + sum(w[o, i, q] * xp[n, t + q, i] for i in range(2) for q in range(3))
    assert np.allclose(out, ref, atol=1e-12)


def test_batch_norm_running_stats(rng):
    x = rng.standard_normal((4, 3, 2)) * 3 + 1
    stats = BatchNormStats(2, momentum=0.1)
    T.batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), stats, training=True)
    flat = x.reshape(-1, 2)
    assert np.allclose(stats.mean, 0.1 * flat.mean(0))
    assert np.allclose(stats.var, 0.9 + 0.1 * flat.var(0, ddof=1))


def test_batch_norm_train_output_is_standardized(rng):
    x = rng.standard_normal((5, 4, 3)) * 2 - 7
    y = T.batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), BatchNormStats(3), True).data
    assert np.allclose(y.reshape(-1, 3).mean(0), 0, atol=1e-12)
    assert np.allclose(y.reshape(-1, 3).var(0), 1, atol=1e-4)


def test_dropout_modes(rng):
    x = Tensor(np.ones((200, 50)))
    assert T.dropout(x, 0.5, False, None) is x
    assert T.dropout(x, 0.0, True, rng) is x
    y = T.dropout(x, 0.5, True, rng).data
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.05
    with pytest.raises(ParameterError):
        T.dropout(x, 1.0, True, rng)
    with pytest.raises(UsageError):
        T.dropout(x, 0.5, True, None)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
def test_cumsum_gradient_is_reverse_cumsum(n, t, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((n, t)), True)
    w = rng.standard_normal((n, t))
    weighted_sum_loss(T.cumsum(x, axis=1), w).backward()
    assert np.allclose(x.grad, np.flip(np.cumsum(np.flip(w, 1), 1), 1))


def test_numeric_grad_of_known_function():
    x = Tensor(np.array([1.0, 2.0]), True)
    g = numeric_grad(lambda: (x * x).sum(), x)
    assert rel_error(g, 2 * x.data) < 1e-8


# --- worked examples ----------------------------------------------------

def test_matmul_examples():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal((Tensor(np.eye(2)) @ Tensor(m)).data, m)
    assert (Tensor(np.array([[1.0, 2.0]])) @ Tensor(np.array([[3.0], [4.0]]))).data.tolist() == [[11.0]]


def test_channel_mix_examples(rng):
    x = rng.standard_normal((2, 3, 4))
    assert np.array_equal(T.conv_channel_mix(Tensor(x), Tensor(np.eye(4)), Tensor(np.zeros(4))).data, x)
    y = T.conv_channel_mix(Tensor(np.ones((1, 1, 2))), Tensor(np.array([[1.0, 1.0]])), Tensor(np.array([0.5])))
    assert y.data.tolist() == [[[2.5]]]
    with pytest.raises(DimensionError):
        T.conv_channel_mix(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3)))


def test_conv_temporal_examples(rng):
    x = Tensor(np.array([0.0, 3.0, 6.0, 9.0]).reshape(1, 4, 1))
    avg = T.conv_temporal(x, Tensor(np.full((1, 1, 3), 1 / 3)), Tensor(np.zeros(1)))
    assert np.allclose(avg.data.ravel(), [1, 3, 6, 5], atol=1e-12)
    z = rng.standard_normal((2, 5, 3))
    delta = np.zeros((3, 3, 3))
    delta[np.arange(3), np.arange(3), 1] = 1.0
    assert np.allclose(T.conv_temporal(Tensor(z), Tensor(delta), Tensor(np.zeros(3))).data, z, atol=1e-15)
    with pytest.raises(DimensionError):
        T.conv_temporal(Tensor(np.ones((1, 1, 1))), Tensor(np.ones((1, 1, 3))), Tensor(np.zeros(1)), padding=0)


def test_batch_norm_eval_with_initial_stats_is_near_identity(rng):
    x = rng.standard_normal((2, 3, 4, 5))
    y = T.batch_norm(Tensor(x), Tensor(np.ones(5)), Tensor(np.zeros(5)), BatchNormStats(5), training=False)
    assert np.allclose(y.data, x, rtol=1e-4)


def test_dropout_survivor_fraction():
    x = Tensor(np.ones(1_000_000))
    y = T.dropout(x, 0.5, True, np.random.default_rng(0)).data
    assert 0.498 <= (y != 0).mean() <= 0.502


def test_dropout_preserves_expectation():
    x = Tensor(np.full(10, 3.0))
    rng = np.random.default_rng(5)
    mean = np.mean([T.dropout(x, 0.5, True, rng).data.mean() for _ in range(10_000)])
    assert abs(mean - 3.0) < 0.03


def test_activation_values():
    assert T.tanh(Tensor(np.zeros(1))).data[0] == 0.0
    assert T.relu(Tensor(np.array([-3.0]))).data[0] == 0.0


def test_backward_examples(rng):
    x = Tensor(rng.standard_normal((2, 3)), True)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones((2, 3)))
    T.zero_grad([x])
    ((x * x).sum() * 0.5).backward()
    assert np.allclose(x.grad, x.data)


def test_replay_after_zero_grad_is_identical(rng):
    a = Tensor(rng.standard_normal((3, 3)), True)
    w = rng.standard_normal((3, 3))

    def run():
        T.zero_grad([a])
        weighted_sum_loss(T.tanh(a @ a), w).backward()
        return a.grad.copy()

    assert np.array_equal(run(), run())
