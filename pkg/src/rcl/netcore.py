"""Layer kernels with hand-written backward passes, plus plain SGD.

Gate order inside the LSTM is (input, forget, cell candidate, output); the
fused pre-activation has width ``4 * hidden``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .numeric import ACTIVATIONS, DimensionError, as_tensor, log_softmax, sigmoid, softmax


@dataclass
class DenseLayerParams:
    weights: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        self.weights = as_tensor(self.weights)
        self.bias = as_tensor(self.bias)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise DimensionError(
                f"weights {self.weights.shape} and bias {self.bias.shape} do not agree")


@dataclass
class DenseCache:
    x: np.ndarray
    pre: np.ndarray
    weights: np.ndarray
    activation: str


@dataclass
class LstmCellParams:
    wx: np.ndarray  # (in, 4h)
    wh: np.ndarray  # (h, 4h)
    b: np.ndarray  # (4h,)

    def __post_init__(self):
        self.wx = as_tensor(self.wx)
        self.wh = as_tensor(self.wh)
        self.b = as_tensor(self.b)
        h = self.wh.shape[0]
        if (self.wh.shape != (h, 4 * h) or self.wx.ndim != 2
                or self.wx.shape[1] != 4 * h or self.b.shape != (4 * h,)):
            raise DimensionError(
                f"inconsistent LSTM shapes wx={self.wx.shape} wh={self.wh.shape} b={self.b.shape}")

    @property
    def hidden(self) -> int:
        return self.wh.shape[0]

    @property
    def n_in(self) -> int:
        return self.wx.shape[0]


@dataclass
class LstmCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    params: LstmCellParams


@dataclass(frozen=True)
class SgdConfig:
    lr: float = 0.001

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_dense(n_in: int, n_out: int, rng: np.random.Generator) -> DenseLayerParams:
    lim = glorot_limit(n_in, n_out)
    return DenseLayerParams(rng.uniform(-lim, lim, size=(n_in, n_out)), np.zeros(n_out))


def init_lstm(n_in: int, hidden: int, rng: np.random.Generator,
              scale: float = 0.08, forget_bias: float = 1.0) -> LstmCellParams:
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = forget_bias
    return LstmCellParams(
        rng.uniform(-scale, scale, size=(n_in, 4 * hidden)),
        rng.uniform(-scale, scale, size=(hidden, 4 * hidden)),
        b,
    )


def dense_forward(p: DenseLayerParams, x, activation: str = "relu"):
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != p.weights.shape[0]:
        raise DimensionError(f"input {x.shape} does not match weights {p.weights.shape}")
    act, _ = ACTIVATIONS[activation]
    pre = x @ p.weights + p.bias
    return act(pre), DenseCache(x, pre, p.weights, activation)


def dense_backward(cache: DenseCache, upstream):
    upstream = as_tensor(upstream)
    if upstream.shape != cache.pre.shape:
        raise DimensionError(f"upstream {upstream.shape} vs output {cache.pre.shape}")
    _, dact = ACTIVATIONS[cache.activation]
    dpre = upstream * dact(cache.pre)
    grads = DenseLayerParams(cache.x.T @ dpre, dpre.sum(axis=0))
    return grads, dpre @ cache.weights.T


def lstm_step(p: LstmCellParams, x, h_prev, c_prev):
    """One LSTM step.  Accepts single vectors or row batches."""
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    hid = p.hidden
    if x.shape[-1] != p.n_in or h_prev.shape[-1] != hid or c_prev.shape != h_prev.shape:
        raise DimensionError(
            f"x {x.shape}, h {h_prev.shape}, c {c_prev.shape} vs cell in={p.n_in} hidden={hid}")
    z = x @ p.wx + h_prev @ p.wh + p.b
    i = sigmoid(z[..., :hid])
    f = sigmoid(z[..., hid:2 * hid])
    g = np.tanh(z[..., 2 * hid:3 * hid])
    o = sigmoid(z[..., 3 * hid:])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, LstmCache(x, h_prev, c_prev, i, f, g, o, c, tanh_c, p)


def lstm_backward(cache: LstmCache, grad_h, grad_c):
    grad_h, grad_c = as_tensor(grad_h), as_tensor(grad_c)
    if grad_h.shape != cache.c.shape or grad_c.shape != cache.c.shape:
        raise DimensionError(f"grad shapes {grad_h.shape}/{grad_c.shape} vs state {cache.c.shape}")
    p = cache.params
    do = grad_h * cache.tanh_c
    dc = grad_c + grad_h * cache.o * (1.0 - cache.tanh_c ** 2)
    di = dc * cache.g
    df = dc * cache.c_prev
    dg = dc * cache.i
    dz = np.concatenate([
        di * cache.i * (1.0 - cache.i),
        df * cache.f * (1.0 - cache.f),
        dg * (1.0 - cache.g ** 2),
        do * cache.o * (1.0 - cache.o),
    ], axis=-1)
    x2 = np.atleast_2d(cache.x)
    h2 = np.atleast_2d(cache.h_prev)
    dz2 = np.atleast_2d(dz)
    grads = LstmCellParams(x2.T @ dz2, h2.T @ dz2, dz2.sum(axis=0))
    return grads, dz @ p.wx.T, dz @ p.wh.T, dc * cache.f


def softmax_xent(logits, labels):
    """Mean cross-entropy over rows and its gradient wrt the logits."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"logits {logits.shape} vs labels {labels.shape}")
    k = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    n = logits.shape[0]
    rows = np.arange(n)
    loss = -log_softmax(logits)[rows, labels].mean()
    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


def _check_same(name: str, p: np.ndarray, g: np.ndarray) -> None:
    if np.shape(p) != np.shape(g):
        raise DimensionError(f"{name}: parameter {np.shape(p)} vs gradient {np.shape(g)}")


def sgd_step(params: Any, grads: Any, cfg: SgdConfig):
    """Return ``params - lr * grads``; works on mappings and the param dataclasses."""
    if isinstance(params, Mapping):
        if set(params) != set(grads):
            raise DimensionError(f"parameter keys {sorted(params)} vs gradient keys {sorted(grads)}")
        out = {}
        for k, p in params.items():
            _check_same(k, p, grads[k])
            out[k] = p - cfg.lr * grads[k]
        return out
    if dataclasses.is_dataclass(params):
        updates = {}
        for fld in dataclasses.fields(params):
            p, g = getattr(params, fld.name), getattr(grads, fld.name)
            _check_same(fld.name, p, g)
            updates[fld.name] = p - cfg.lr * g
        return dataclasses.replace(params, **updates)
    p, g = as_tensor(params), as_tensor(grads)
    _check_same("params", p, g)
    return p - cfg.lr * g
