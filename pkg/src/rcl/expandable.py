"""Fully connected classifier whose hidden layers grow task by task.

Every hidden unit carries the id of the task that created it.  Units are
appended in task order, so the units visible to task ``t`` are a prefix of
each layer and inference for ``t`` is prefix slicing.  A unit stamped ``t``
receives connections from every lower unit stamped ``<= t``; connections
from newer units into older ones are structurally absent (kept at exactly
zero and never trained).  The output units are shared by all tasks, and
their incoming weight from a hidden unit carries that unit's stamp.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datasets import Split, TaskDataset
from .netcore import (DenseLayerParams, SgdConfig, dense_backward, dense_forward,
                      glorot_limit, init_dense, sgd_step, softmax_xent)
from .numeric import relu

FORMAT_VERSION = 1


class UnknownTaskError(KeyError):
    pass


@dataclass(frozen=True)
class TaskSnapshot:
    task_id: int
    sizes: tuple[int, ...]  # visible hidden units per layer
    network: "ExpandableNetwork"


class ExpandableNetwork:
    def __init__(self, n_in: int, n_classes: int, hidden: list[DenseLayerParams],
                 stamps: list[np.ndarray], output: DenseLayerParams,
                 history: dict[int, tuple[int, ...]]):
        self.n_in = n_in
        self.n_classes = n_classes
        self.hidden = hidden
        self.stamps = stamps
        self.output = output
        self.history = dict(history)

    @property
    def depth(self) -> int:
        return len(self.hidden)

    @property
    def latest_task(self) -> int:
        return max(self.history)

    def sizes(self, task_id: int | None = None) -> tuple[int, ...]:
        if task_id is None:
            task_id = self.latest_task
        try:
            return self.history[task_id]
        except KeyError:
            raise UnknownTaskError(f"no snapshot for task {task_id}") from None

    def layer_sizes(self, task_id: int | None = None) -> list[int]:
        return [self.n_in, *self.sizes(task_id), self.n_classes]

    def snapshot(self, task_id: int) -> TaskSnapshot:
        return TaskSnapshot(task_id, self.sizes(task_id), self)

    def clone(self) -> "ExpandableNetwork":
        return ExpandableNetwork(
            self.n_in, self.n_classes,
            [DenseLayerParams(p.weights.copy(), p.bias.copy()) for p in self.hidden],
            [s.copy() for s in self.stamps],
            DenseLayerParams(self.output.weights.copy(), self.output.bias.copy()),
            self.history,
        )

    def parameter_stamps(self) -> dict[str, np.ndarray]:
        """Task stamp of every parameter, keyed like ``state_arrays``.

        A connection belongs to the task of its receiving unit; structurally
        absent connections (newer unit into older unit) are marked -1.
        """
        out = {}
        prev = np.zeros(self.n_in, dtype=np.int64)
        for i, ts in enumerate(self.stamps):
            out[f"h{i}.w"] = np.where(prev[:, None] <= ts[None, :], ts[None, :], -1)
            out[f"h{i}.b"] = ts.copy()
            prev = ts
        out["out.w"] = np.broadcast_to(prev[:, None], (len(prev), self.n_classes)).copy()
        out["out.b"] = np.ones(self.n_classes, dtype=np.int64)
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, p in enumerate(self.hidden):
            out[f"h{i}.w"] = p.weights
            out[f"h{i}.b"] = p.bias
        out["out.w"] = self.output.weights
        out["out.b"] = self.output.bias
        return out


def init_base(layer_sizes: Sequence[int], rng: np.random.Generator) -> ExpandableNetwork:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f"need >= 2 positive layer sizes, got {list(layer_sizes)}")
    hidden = [init_dense(a, b, rng) for a, b in zip(sizes[:-2], sizes[1:-1])]
    output = init_dense(sizes[-2], sizes[-1], rng)
    stamps = [np.ones(s, dtype=np.int64) for s in sizes[1:-1]]
    return ExpandableNetwork(sizes[0], sizes[-1], hidden, stamps, output,
                             {1: tuple(sizes[1:-1])})


def added_count(actions: Sequence[int]) -> int:
    """Complexity of an action string: total number of units added."""
    return int(sum(int(a) for a in actions))


def expand(net: ExpandableNetwork, actions: Sequence[int], task_id: int,
           rng: np.random.Generator) -> ExpandableNetwork:
    """Return a copy of ``net`` with ``actions[i]`` units added to hidden layer ``i``."""
    actions = [int(a) for a in actions]
    if len(actions) != net.depth:
        raise ValueError(f"{len(actions)} actions for {net.depth} hidden layers")
    if min(actions, default=0) < 0:
        raise ValueError("negative expansion count")
    if task_id != net.latest_task + 1:
        raise ValueError(f"task {task_id} does not follow task {net.latest_task}")

    hidden, stamps = [], []
    prev_old = prev_new = net.n_in
    for p, ts, k in zip(net.hidden, net.stamps, actions):
        old = len(ts)
        w = np.zeros((prev_new, old + k))
        w[:prev_old, :old] = p.weights
        if k:
            lim = glorot_limit(prev_new, old + k)
            w[:, old:] = rng.uniform(-lim, lim, size=(prev_new, k))
        hidden.append(DenseLayerParams(w, np.concatenate([p.bias, np.zeros(k)])))
        stamps.append(np.concatenate([ts, np.full(k, task_id, dtype=np.int64)]))
        prev_old, prev_new = old, old + k

    ow = np.zeros((prev_new, net.n_classes))
    ow[:prev_old] = net.output.weights
    if prev_new > prev_old:
        lim = glorot_limit(prev_new, net.n_classes)
        ow[prev_old:] = rng.uniform(-lim, lim, size=(prev_new - prev_old, net.n_classes))
    output = DenseLayerParams(ow, net.output.bias.copy())
    history = {**net.history, task_id: tuple(len(s) for s in stamps)}
    return ExpandableNetwork(net.n_in, net.n_classes, hidden, stamps, output, history)


def _visible(net: ExpandableNetwork, task_id: int):
    sizes = net.sizes(task_id)
    layers = []
    prev = net.n_in
    for p, n in zip(net.hidden, sizes):
        # contiguous copies keep the BLAS call identical however wide the net has grown
        layers.append((np.ascontiguousarray(p.weights[:prev, :n]), p.bias[:n].copy()))
        prev = n
    out = (np.ascontiguousarray(net.output.weights[:prev]), net.output.bias.copy())
    return layers, out


def forward_task(net: ExpandableNetwork, x, task_id: int) -> np.ndarray:
    """Logits of the task-``task_id`` sub-network."""
    layers, (ow, ob) = _visible(net, task_id)
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != net.n_in:
        raise ValueError(f"input of shape {h.shape}, expected (n, {net.n_in})")
    for w, b in layers:
        h = relu(h @ w + b)
    return h @ ow + ob


def evaluate(net: ExpandableNetwork, split: Split, task_id: int) -> float:
    if len(split) == 0:
        raise ValueError("cannot evaluate on an empty split")
    pred = forward_task(net, split.features, task_id).argmax(axis=1)
    return float(np.mean(pred == split.labels))


def param_count(net: ExpandableNetwork, task_id: int) -> int:
    """Connections plus biases visible to ``task_id``."""
    sizes = net.sizes(task_id)
    total = 0
    prev_units = np.zeros(net.n_in, dtype=np.int64)
    for ts, n in zip(net.stamps, sizes):
        ts = ts[:n]
        # unit stamped s sees the inputs stamped <= s; inputs are sorted by stamp
        fan_in = np.searchsorted(prev_units, ts, side="right")
        total += int(fan_in.sum()) + n
        prev_units = ts
    return total + len(prev_units) * net.n_classes + net.n_classes


def _train(net: ExpandableNetwork, x: np.ndarray, y: np.ndarray, old: Sequence[int],
           train_out_bias: bool, epochs: int, cfg: SgdConfig, rng: np.random.Generator,
           batch_size: int) -> ExpandableNetwork:
    """Minibatch SGD over the units beyond ``old`` in each layer.

    Units below ``old`` are frozen, and because they receive nothing from
    newer units their activations (and their share of the logits) can be
    computed once up front.
    """
    new = net.sizes()
    if not (new[-1] > old[-1] or train_out_bias):
        return net  # nothing trainable reaches the logits

    frozen = []
    h = x
    prev = net.n_in
    for p, o in zip(net.hidden, old):
        h = relu(h @ p.weights[:prev, :o] + p.bias[:o])
        frozen.append(h)
        prev = o
    z_frozen = h @ net.output.weights[:prev]
    if not train_out_bias:
        z_frozen = z_frozen + net.output.bias

    n = len(y)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            caches = []
            a = x[idx]
            for i, (p, o, k) in enumerate(zip(net.hidden, old, new)):
                if i > 0:
                    a = np.concatenate([frozen[i - 1][idx], a], axis=1)
                a, cache = dense_forward(DenseLayerParams(p.weights[:, o:k], p.bias[o:k]), a)
                caches.append(cache)
            out_p = DenseLayerParams(net.output.weights[old[-1]:],
                                     net.output.bias if train_out_bias else np.zeros(net.n_classes))
            logits, out_cache = dense_forward(out_p, a, "identity")
            _, dlogits = softmax_xent(logits + z_frozen[idx], y[idx])

            g_out, da = dense_backward(out_cache, dlogits)
            step = sgd_step(out_p, g_out, cfg)
            net.output.weights[old[-1]:] = step.weights
            if train_out_bias:
                net.output.bias[:] = step.bias
            for i in range(net.depth - 1, -1, -1):
                p, o, k = net.hidden[i], old[i], new[i]
                g, dinp = dense_backward(caches[i], da)
                step = sgd_step(DenseLayerParams(p.weights[:, o:k], p.bias[o:k]), g, cfg)
                p.weights[:, o:k] = step.weights
                p.bias[o:k] = step.bias
                if i > 0:
                    da = dinp[:, old[i - 1]:]
    return net


def train_new(net: ExpandableNetwork, data: TaskDataset, task_id: int, epochs: int,
              cfg: SgdConfig, rng: np.random.Generator, batch_size: int = 32) -> ExpandableNetwork:
    """Train only the parameters stamped ``task_id`` (in place); returns ``net``."""
    if task_id != net.latest_task:
        raise ValueError(f"task {task_id} is not the latest task ({net.latest_task})")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if len(data.train) == 0:
        raise ValueError("empty training set")
    if task_id == 1:
        old, bias = (0,) * net.depth, True
    else:
        old, bias = net.sizes(task_id - 1), False
    return _train(net, data.train.features, data.train.labels, old, bias,
                  epochs, cfg, rng, batch_size)


def train_all(net: ExpandableNetwork, data: TaskDataset, epochs: int, cfg: SgdConfig,
              rng: np.random.Generator, batch_size: int = 32) -> ExpandableNetwork:
    """Train every parameter of the latest shape, ignoring stamps (fine-tuning)."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if len(data.train) == 0:
        raise ValueError("empty training set")
    return _train(net, data.train.features, data.train.labels, (0,) * net.depth, True,
                  epochs, cfg, rng, batch_size)


# -- serialization -----------------------------------------------------------

def save_network(net: ExpandableNetwork, path) -> None:
    meta = {
        "format": "rcl-expandable-network",
        "version": FORMAT_VERSION,
        "n_in": net.n_in,
        "n_classes": net.n_classes,
        "history": {str(k): list(v) for k, v in sorted(net.history.items())},
    }
    arrays = {f"stamps{i}": s for i, s in enumerate(net.stamps)}
    arrays.update({k.replace(".", "_"): v for k, v in net.state_arrays().items()})
    buf = io.BytesIO()
    np.savez(buf, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_network(path) -> ExpandableNetwork:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta.get("format") != "rcl-expandable-network":
            raise ValueError(f"{path}: not a saved expandable network")
        if meta["version"] != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {meta['version']}")
        history = {int(k): tuple(v) for k, v in meta["history"].items()}
        depth = len(next(iter(history.values())))
        hidden = [DenseLayerParams(z[f"h{i}_w"].copy(), z[f"h{i}_b"].copy()) for i in range(depth)]
        stamps = [z[f"stamps{i}"].copy() for i in range(depth)]
        output = DenseLayerParams(z["out_w"].copy(), z["out_b"].copy())
    return ExpandableNetwork(meta["n_in"], meta["n_classes"], hidden, stamps, output, history)
