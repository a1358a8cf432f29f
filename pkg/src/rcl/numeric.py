"""Dense float64 arithmetic, nonlinearities, seeded streams and a gradient oracle.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  The wrappers
here add the shape/finiteness checks the rest of the package relies on.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    """Raised when operand shapes are not conformable."""


class OracleError(ArithmeticError):
    """Raised when the finite-difference oracle hits a non-finite value."""


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=DTYPE)


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax(v, axis: int = -1) -> np.ndarray:
    v = as_tensor(v)
    if v.size == 0:
        raise ValueError("softmax of an empty vector")
    z = v - v.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(v, axis: int = -1) -> np.ndarray:
    v = as_tensor(v)
    if v.size == 0:
        raise ValueError("log_softmax of an empty vector")
    z = v - v.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def relu(x) -> np.ndarray:
    return np.maximum(as_tensor(x), 0.0)


def relu_grad(x) -> np.ndarray:
    # derivative at the kink is taken as 0
    return (as_tensor(x) > 0).astype(DTYPE)


def sigmoid(x) -> np.ndarray:
    # tanh form: no overflow for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * as_tensor(x)))


def sigmoid_grad(x) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh(x) -> np.ndarray:
    return np.tanh(as_tensor(x))


def tanh_grad(x) -> np.ndarray:
    t = np.tanh(as_tensor(x))
    return 1.0 - t * t


def identity(x) -> np.ndarray:
    return as_tensor(x)


def identity_grad(x) -> np.ndarray:
    return np.ones_like(as_tensor(x))


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "relu": (relu, relu_grad),
    "tanh": (tanh, tanh_grad),
    "sigmoid": (sigmoid, sigmoid_grad),
    "identity": (identity, identity_grad),
}


def rng_stream(seed: int, *stream_id: int) -> np.random.Generator:
    """Return a Philox generator keyed by ``seed`` and a stream path.

    Philox is counter based, so every ``(seed, *stream_id)`` tuple maps to an
    independent, platform-stable sequence.  Workers derive their own path
    (e.g. ``(task, epoch, trial)``) instead of sharing a generator.
    """
    if seed < 0 or any(s < 0 for s in stream_id):
        raise ValueError("seed and stream ids must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream_id))
    return np.random.Generator(np.random.Philox(ss))


def fd_gradient(f: Callable[[np.ndarray], float], x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = as_tensor(x).ravel().copy()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + eps
        fp = float(f(x))
        x[i] = orig - eps
        fm = float(f(x))
        x[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError(f"non-finite function value at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-5) -> float:
    """max |a - n| / max(|a|, |n|, floor), elementwise.

    The floor keeps entries far below the central-difference roundoff level
    (~1e-11 at eps=1e-5) from dominating; they are judged on absolute error.
    """
    a = as_tensor(analytic).ravel()
    n = as_tensor(numeric).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def flatten(params: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(params[k]) for k in sorted(params)]) if params else np.zeros(0)


def unflatten(flat, like: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    flat = as_tensor(flat)
    out = {}
    pos = 0
    for k in sorted(like):
        n = np.size(like[k])
        out[k] = flat[pos:pos + n].reshape(np.shape(like[k])).copy()
        pos += n
    if pos != flat.size:
        raise DimensionError(f"flat vector of length {flat.size}, expected {pos}")
    return out
