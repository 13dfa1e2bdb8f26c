import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ddos_ensemble.errors import EmptyInputError, GeometryError
from ddos_ensemble.nn import functional as F
from ddos_ensemble.nn.params import (attention_params, batchnorm_params, conv1d_params, dense_params,
                                     lstm_params)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


# ---------------------------------------------------------------- conv1d

def naive_conv(x, w, b, stride=1):
    c_out, c_in, k = w.shape
    length = (x.shape[1] - k) // stride + 1
    out = np.zeros((c_out, length))
    for o in range(c_out):
        for t in range(length):
            s = b[o]
            for c in range(c_in):
                for j in range(k):
                    s += w[o, c, j] * x[c, t * stride + j]
            out[o, t] = s
    return out


def test_conv_identity_kernel():
    p = conv1d_params(np.array([[[0.0, 1.0, 0.0]]]), np.zeros(1))
    np.testing.assert_allclose(F.conv1d_forward([[1, 2, 3, 4]], p), [[2, 3]])


def test_conv_sum_kernel_with_bias():
    p = conv1d_params(np.ones((1, 1, 3)), np.ones(1))
    np.testing.assert_allclose(F.conv1d_forward([[1, 2, 3, 4]], p), [[7, 10]])


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_matches_loop_oracle(stride):
    rng = np.random.default_rng(stride)
    x = rng.normal(size=(2, 9))
    w, b = rng.normal(size=(3, 2, 3)), rng.normal(size=3)
    got = F.conv1d_forward(x, conv1d_params(w, b, stride=stride))
    np.testing.assert_allclose(got, naive_conv(x, w, b, stride), rtol=1e-12, atol=1e-12)


def test_conv_same_padding_keeps_length():
    rng = np.random.default_rng(0)
    p = conv1d_params(rng.normal(size=(4, 2, 3)), np.zeros(4), padding="same")
    assert F.conv1d_forward(rng.normal(size=(5, 2, 7)), p).shape == (5, 4, 7)


def test_conv_channel_mismatch():
    p = conv1d_params(np.ones((1, 2, 3)), np.zeros(1))
    with pytest.raises(GeometryError):
        F.conv1d_forward(np.ones((3, 5)), p)


@given(st.integers(0, 2), arrays(np.float64, (1, 8), elements=finite))
def test_conv_one_hot_kernel_shifts(pos, x):
    k = np.zeros((1, 1, 3))
    k[0, 0, pos] = 1.0
    out = F.conv1d_forward(x, conv1d_params(k, np.zeros(1)))
    np.testing.assert_array_equal(out[0], x[0, pos: pos + 6])


# ---------------------------------------------------------------- batchnorm

def test_batchnorm_two_points():
    p = batchnorm_params(np.ones(1), np.zeros(1), epsilon=0.0)
    np.testing.assert_allclose(F.batchnorm_forward([[1.0], [3.0]], p)[:, 0], [-1, 1], atol=1e-12)


def test_batchnorm_constant_column_collapses_to_beta():
    p = batchnorm_params(np.full(1, 7.0), np.full(1, 0.3), epsilon=1e-5)
    np.testing.assert_allclose(F.batchnorm_forward([[5.0], [5.0], [5.0]], p)[:, 0], 0.3, atol=1e-12)


def test_batchnorm_worked_case():
    p = batchnorm_params(np.full(1, 2.0), np.ones(1), epsilon=0.0)
    got = F.batchnorm_forward([[0.0], [2.0], [4.0]], p)[:, 0]
    # mean 2, variance 8/3
    expect = 2 * (np.array([0, 2, 4]) - 2) / math.sqrt(8 / 3) + 1
    np.testing.assert_allclose(got, expect, rtol=1e-12)
    np.testing.assert_allclose(got, [-1.4495, 1.0, 3.4495], atol=1e-4)


def test_batchnorm_empty_batch():
    p = batchnorm_params(np.ones(2), np.zeros(2))
    with pytest.raises(EmptyInputError):
        F.batchnorm_forward(np.empty((0, 2)), p)


def test_batchnorm_running_stats_momentum():
    p = batchnorm_params(np.ones(1), np.zeros(1))
    F.batchnorm_forward([[1.0], [3.0]], p)
    np.testing.assert_allclose(p.buffers["running_mean"], [0.2])
    np.testing.assert_allclose(p.buffers["running_var"], [0.9 + 0.1 * 1.0])


def test_batchnorm_infer_uses_running_stats():
    p = batchnorm_params(np.ones(1), np.zeros(1), epsilon=0.0, running_mean=[1.0], running_var=[4.0])
    np.testing.assert_allclose(F.batchnorm_forward([[5.0]], p, "infer"), [[2.0]])


@settings(max_examples=50)
@given(arrays(np.float64, (16, 3), elements=st.floats(-100, 100)))
def test_batchnorm_train_standardises(x):
    var = x.var(axis=0)
    if (var < 1e-6).any():
        return
    p = batchnorm_params(np.ones(3), np.zeros(3), epsilon=0.0)
    out = F.batchnorm_forward(x, p)
    assert np.all(np.abs(out.mean(axis=0)) <= 1e-9)
    assert np.all(np.abs(out.var(axis=0) - 1) <= 1e-6)


# ---------------------------------------------------------------- relu / softmax

@pytest.mark.parametrize("x,y", [(-3, 0), (5, 5), (0, 0)])
def test_relu_examples(x, y):
    assert F.relu(x) == y


@given(arrays(np.float64, 10, elements=finite))
def test_relu_idempotent(x):
    np.testing.assert_array_equal(F.relu(F.relu(x)), F.relu(x))


def test_softmax_examples():
    np.testing.assert_allclose(F.softmax([0.0, 0.0]), [0.5, 0.5])
    np.testing.assert_allclose(F.softmax([7.5] * 3), [1 / 3] * 3)
    out = F.softmax([1000.0, 1000.0])
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.5, 0.5])


def test_softmax_empty():
    with pytest.raises(EmptyInputError):
        F.softmax([])


@settings(max_examples=300)
@given(arrays(np.float64, st.integers(1, 12), elements=finite), st.floats(-1e3, 1e3))
def test_softmax_probability_and_shift(v, c):
    s = F.softmax(v)
    assert np.all(s >= 0)
    assert abs(s.sum() - 1) <= 1e-12
    np.testing.assert_allclose(F.softmax(v + c), s, rtol=0, atol=1e-12)


# ---------------------------------------------------------------- attention

def test_attention_single_step_returns_value_row():
    rng = np.random.default_rng(0)
    p = attention_params(*(rng.normal(size=(4, 3)) for _ in range(3)))
    x = rng.normal(size=(1, 4))
    out, a = F.self_attention(x, p, return_weights=True)
    assert a[0, 0] == 1.0
    np.testing.assert_allclose(out, x @ p.weights["w_v"], rtol=1e-12)


def test_attention_zero_query_is_uniform():
    rng = np.random.default_rng(1)
    wv = rng.normal(size=(4, 3))
    p = attention_params(np.zeros((4, 3)), rng.normal(size=(4, 3)), wv)
    x = rng.normal(size=(5, 4))
    out = F.self_attention(x, p)
    np.testing.assert_allclose(out, np.tile((x @ wv).mean(axis=0), (5, 1)), rtol=1e-12)


def test_attention_identity_projections_match_oracle():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 4))
    eye = np.eye(4)
    got = F.self_attention(x, attention_params(eye, eye, eye))
    scores = np.array([[x[i] @ x[j] for j in range(3)] for i in range(3)]) / 2.0
    w = np.exp(scores)
    w /= w.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(got, w @ x, rtol=1e-12)


def test_attention_shape_errors():
    with pytest.raises(GeometryError):
        attention_params(np.ones((4, 3)), np.ones((4, 2)), np.ones((4, 3)))
    p = attention_params(np.ones((4, 3)), np.ones((4, 3)), np.ones((4, 3)))
    with pytest.raises(GeometryError):
        F.self_attention(np.ones((2, 5)), p)


@settings(max_examples=100)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_attention_rows_stochastic(seed, t):
    rng = np.random.default_rng(seed)
    p = attention_params(*(rng.normal(scale=3, size=(4, 2)) for _ in range(3)))
    _, a = F.self_attention(rng.normal(size=(t, 4)), p, return_weights=True)
    assert np.all(a >= 0)
    np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-12)


# ---------------------------------------------------------------- lstm

def test_lstm_zero_everything():
    p = lstm_params(3, 2)
    h, c = F.lstm_cell_step(np.ones(3), np.zeros(2), np.zeros(2), p)
    np.testing.assert_array_equal(h, 0)
    np.testing.assert_array_equal(c, 0)


def test_lstm_zero_weights_unit_cell():
    p = lstm_params(3, 2)
    h, c = F.lstm_cell_step(np.ones(3), np.zeros(2), np.ones(2), p)
    np.testing.assert_allclose(c, 0.5)
    np.testing.assert_allclose(h, 0.5 * np.tanh(0.5), atol=1e-15)
    assert abs(h[0] - 0.23106) < 1e-5


def test_lstm_forget_saturation():
    p = lstm_params(3, 2)
    p.weights["b_f"][:] = 10.0
    cprev = np.array([0.7, -2.0])
    _, c = F.lstm_cell_step(np.zeros(3), np.zeros(2), cprev, p)
    np.testing.assert_allclose(c, cprev / (1 + math.exp(-10)), rtol=1e-12)
    np.testing.assert_allclose(c, 0.99995 * cprev, rtol=1e-5)


def test_lstm_peephole_reads_cell_state():
    p = lstm_params(2, 2)
    p.weights["w_ci"][:] = np.eye(2)
    h_on, _ = F.lstm_cell_step(np.zeros(2), np.zeros(2), np.ones(2), p)
    q = lstm_params(2, 2, peephole=False)
    h_off, _ = F.lstm_cell_step(np.zeros(2), np.zeros(2), np.ones(2), q)
    # input gate only multiplies tanh(0) = 0, so h is unchanged; the output gate is what peeks
    np.testing.assert_allclose(h_on, h_off)
    p.weights["w_co"][:] = np.eye(2)
    h_o, _ = F.lstm_cell_step(np.zeros(2), np.zeros(2), np.ones(2), p)
    o = 1 / (1 + math.exp(-1))
    np.testing.assert_allclose(h_o, o * np.tanh(0.5), rtol=1e-12)


def test_lstm_shape_mismatch():
    p = lstm_params(3, 2)
    with pytest.raises(GeometryError):
        F.lstm_cell_step(np.ones(4), np.zeros(2), np.zeros(2), p)
    with pytest.raises(GeometryError):
        F.lstm_cell_step(np.ones(3), np.zeros(3), np.zeros(2), p)


# ---------------------------------------------------------------- pool / dense / bce

def test_global_avg_pool():
    np.testing.assert_allclose(F.global_avg_pool([[1, 3], [2, 6]]), [2, 4])
    np.testing.assert_allclose(F.global_avg_pool(np.full((1, 5), 4.2)), [4.2])
    x = np.random.default_rng(0).normal(size=(3, 4, 6))
    np.testing.assert_allclose(F.global_avg_pool(x), [[row.sum() / 6 for row in s] for s in x], rtol=1e-12)
    with pytest.raises(EmptyInputError):
        F.global_avg_pool(np.empty((2, 0)))


def test_dense_examples():
    x = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(F.dense_forward(x, dense_params(np.eye(3), np.zeros(3))), x)
    np.testing.assert_allclose(F.dense_forward(np.zeros(3), dense_params(np.ones((2, 3)), np.zeros(2)),
                                               "sigmoid"), [0.5, 0.5])
    rng = np.random.default_rng(4)
    w, b = rng.normal(size=(2, 3)), rng.normal(size=2)
    expect = [sum(w[i, j] * x[j] for j in range(3)) + b[i] for i in range(2)]
    np.testing.assert_allclose(F.dense_forward(x, dense_params(w, b)), expect, rtol=1e-12)
    with pytest.raises(GeometryError):
        F.dense_forward(np.ones(4), dense_params(w, b))


def test_bce_examples():
    assert F.bce_loss([1], [1 - 1e-12]) < 1e-11
    assert F.bce_loss([1], [0.5]) == pytest.approx(math.log(2), abs=1e-12)
    assert F.bce_loss([1, 0], [0.9, 0.1]) == pytest.approx(-math.log(0.9), abs=1e-12)
    with pytest.raises(EmptyInputError):
        F.bce_loss([], [])


@given(arrays(np.float64, 8, elements=st.floats(0, 1)), arrays(np.int64, 8, elements=st.integers(0, 1)))
def test_bce_non_negative(p, y):
    assert F.bce_loss(y, p) >= 0
