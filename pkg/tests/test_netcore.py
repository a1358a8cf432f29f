import numpy as np
import pytest

from oracles import GRAD_TOL, check_dense, check_lstm, check_xent
from rcl.netcore import (DenseLayerParams, LstmCellParams, SgdConfig, dense_forward, glorot_limit,
                         init_dense, init_lstm, lstm_backward, lstm_step, sgd_step, softmax_xent)
from rcl.numeric import DimensionError


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("activation", ["relu", "tanh", "sigmoid", "identity"])
def test_dense_gradients(seed, activation):
    assert check_dense(seed, activation) < GRAD_TOL


@pytest.mark.parametrize("seed", range(5))
def test_xent_gradient(seed):
    assert check_xent(seed) < GRAD_TOL


@pytest.mark.parametrize("seed", range(5))
def test_lstm_unrolled_gradients(seed):
    assert check_lstm(seed) < GRAD_TOL


def test_dense_layer_validates_shapes():
    with pytest.raises(DimensionError):
        DenseLayerParams(np.zeros((3, 2)), np.zeros(3))
    p = DenseLayerParams(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(DimensionError):
        dense_forward(p, np.zeros((1, 4)))


def test_init_dense_glorot_bounds(rng):
    p = init_dense(50, 20, rng)
    assert np.abs(p.weights).max() <= glorot_limit(50, 20)
    assert not p.bias.any()


def test_init_deterministic():
    a = init_dense(4, 3, np.random.default_rng(5))
    b = init_dense(4, 3, np.random.default_rng(5))
    np.testing.assert_array_equal(a.weights, b.weights)


def test_init_lstm_forget_bias(rng):
    c = init_lstm(3, 4, rng)
    np.testing.assert_array_equal(c.b[4:8], 1.0)
    assert not c.b[:4].any() and not c.b[8:].any()
    assert np.abs(c.wx).max() <= 0.08


def test_lstm_shapes_checked(rng):
    with pytest.raises(DimensionError):
        LstmCellParams(np.zeros((3, 8)), np.zeros((2, 8)), np.zeros(7))
    c = init_lstm(3, 2, rng)
    with pytest.raises(DimensionError):
        lstm_step(c, np.zeros(4), np.zeros(2), np.zeros(2))


def test_lstm_batch_equals_rows(rng):
    c = init_lstm(3, 4, rng, scale=0.5)
    x = rng.normal(size=(5, 3))
    h0 = rng.normal(size=(5, 4))
    c0 = rng.normal(size=(5, 4))
    hb, cb, cache = lstm_step(c, x, h0, c0)
    gb, *_ = lstm_backward(cache, np.ones((5, 4)), np.zeros((5, 4)))
    gsum = np.zeros_like(gb.wx)
    for r in range(5):
        h, cc, cr = lstm_step(c, x[r], h0[r], c0[r])
        np.testing.assert_allclose(h, hb[r], atol=1e-14)
        gsum += lstm_backward(cr, np.ones(4), np.zeros(4))[0].wx
    np.testing.assert_allclose(gsum, gb.wx, atol=1e-12)


def test_lstm_state_bounded(rng):
    c = init_lstm(2, 3, rng, scale=5.0)
    h, cs = np.zeros(3), np.zeros(3)
    for _ in range(50):
        h, cs, _ = lstm_step(c, rng.normal(size=2) * 10, h, cs)
        assert np.all(np.abs(h) <= 1.0)


def test_xent_uniform_logits():
    loss, g = softmax_xent(np.zeros((2, 4)), [0, 3])
    assert loss == pytest.approx(np.log(4))
    np.testing.assert_allclose(g.sum(axis=1), 0.0, atol=1e-15)


def test_xent_bad_labels():
    with pytest.raises(ValueError):
        softmax_xent(np.zeros((1, 3)), [3])


def test_sgd_step_dict_and_dataclass():
    out = sgd_step({"a": np.ones(2)}, {"a": np.full(2, 2.0)}, SgdConfig(0.5))
    np.testing.assert_array_equal(out["a"], [0.0, 0.0])
    p = DenseLayerParams(np.ones((1, 1)), np.zeros(1))
    q = sgd_step(p, DenseLayerParams(np.ones((1, 1)), np.ones(1)), SgdConfig(0.1))
    assert q.weights[0, 0] == pytest.approx(0.9) and p.weights[0, 0] == 1.0
    with pytest.raises(DimensionError):
        sgd_step({"a": np.ones(2)}, {"b": np.ones(2)}, SgdConfig())


def test_sgd_config_rejects_nonpositive():
    with pytest.raises(ValueError):
        SgdConfig(0.0)
