"""Controller (autoregressive LSTM over per-layer expansion counts) and critic.

Step 1 of the controller consumes a fixed all-zeros start embedding.  The
softmax output of step ``i`` is zero-padded to the largest action space,
linearly projected to the LSTM input width and fed to step ``i + 1``, so
gradients of the log-probability also flow through that feedback path.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .netcore import LstmCellParams, SgdConfig, init_lstm, lstm_backward, lstm_step, sgd_step
from .numeric import log_softmax, softmax


@dataclass(frozen=True)
class ActionString:
    actions: tuple[int, ...]
    probs: tuple[np.ndarray, ...] = field(default=(), compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    @property
    def log_prob(self) -> float:
        """Log-probability recorded at sampling time."""
        return float(sum(np.log(p[a]) for p, a in zip(self.probs, self.actions)))


@dataclass
class PolicyParams:
    params: dict[str, np.ndarray]
    spaces: tuple[int, ...]
    start: np.ndarray
    n_layers: int = 2

    @property
    def hidden(self) -> int:
        return self.params["lstm0.wh"].shape[0]

    @property
    def n_in(self) -> int:
        return self.start.shape[0]

    def cell(self, layer: int) -> LstmCellParams:
        return LstmCellParams(self.params[f"lstm{layer}.wx"], self.params[f"lstm{layer}.wh"],
                              self.params[f"lstm{layer}.b"])

    def with_params(self, params: dict[str, np.ndarray]) -> "PolicyParams":
        return replace(self, params=params)


@dataclass
class ValueParams:
    w: np.ndarray
    b: np.ndarray  # 0-d


def init_policy(spaces: Sequence[int], rng: np.random.Generator, hidden: int = 100,
                n_layers: int = 2, input_dim: int | None = None, scale: float = 0.08,
                forget_bias: float = 1.0) -> PolicyParams:
    spaces = tuple(int(n) for n in spaces)
    if not spaces or min(spaces) < 1:
        raise ValueError(f"action spaces must be non-empty and >= 1, got {spaces}")
    d = hidden if input_dim is None else input_dim
    params: dict[str, np.ndarray] = {}
    for layer in range(n_layers):
        cell = init_lstm(d if layer == 0 else hidden, hidden, rng, scale, forget_bias)
        params[f"lstm{layer}.wx"] = cell.wx
        params[f"lstm{layer}.wh"] = cell.wh
        params[f"lstm{layer}.b"] = cell.b
    params["proj.w"] = rng.uniform(-scale, scale, size=(max(spaces), d))
    params["proj.b"] = np.zeros(d)
    for i, n in enumerate(spaces):
        params[f"head{i}.w"] = rng.uniform(-scale, scale, size=(hidden, n))
        params[f"head{i}.b"] = np.zeros(n)
    return PolicyParams(params, spaces, np.zeros(d), n_layers)


def init_critic(n_in: int) -> ValueParams:
    return ValueParams(np.zeros(n_in), np.array(0.0))


@dataclass
class _Step:
    caches: list
    top: np.ndarray  # (B, hidden)
    probs: np.ndarray  # (B, n_i)
    padded: np.ndarray | None  # (B, max n)


def _rollout(policy: PolicyParams, actions=None, rng: np.random.Generator | None = None,
             greedy: bool = False, batch: int = 1):
    """Run the controller for ``batch`` action strings at once.

    ``actions`` (shape (B, m)) teacher-forces the choices; otherwise they are
    sampled from ``rng`` (row by row within each step) or taken greedily.
    """
    P = policy.params
    m = len(policy.spaces)
    if actions is not None:
        actions = np.atleast_2d(np.asarray(actions, dtype=np.int64))
        if actions.shape[1] != m:
            raise ValueError(f"action string of length {actions.shape[1]} for {m} layers")
        batch = actions.shape[0]
    hs = [np.zeros((batch, policy.hidden)) for _ in range(policy.n_layers)]
    cs = [np.zeros((batch, policy.hidden)) for _ in range(policy.n_layers)]
    x = np.broadcast_to(policy.start, (batch, policy.n_in))
    chosen = np.zeros((batch, m), dtype=np.int64)
    steps = []
    rows = np.arange(batch)
    for i, n in enumerate(policy.spaces):
        caches = []
        inp = x
        for layer in range(policy.n_layers):
            hs[layer], cs[layer], cache = lstm_step(policy.cell(layer), inp, hs[layer], cs[layer])
            caches.append(cache)
            inp = hs[layer]
        p = softmax(inp @ P[f"head{i}.w"] + P[f"head{i}.b"])
        if actions is not None:
            a = actions[:, i]
            if a.min() < 0 or a.max() >= n:
                raise ValueError(f"action outside [0, {n}) at layer {i}")
        elif greedy:
            a = p.argmax(axis=1)
        else:
            a = np.array([rng.choice(n, p=p[r]) for r in rows])
        chosen[:, i] = a
        padded = None
        if i < m - 1:
            padded = np.zeros((batch, P["proj.w"].shape[0]))
            padded[:, :n] = p
            x = padded @ P["proj.w"] + P["proj.b"]
        steps.append(_Step(caches, inp, p, padded))
    strings = [ActionString(tuple(int(v) for v in chosen[r]), tuple(st.probs[r] for st in steps))
               for r in rows]
    return strings, steps


def sample(policy: PolicyParams, rng: np.random.Generator) -> ActionString:
    return _rollout(policy, rng=rng)[0][0]


def sample_batch(policy: PolicyParams, rng: np.random.Generator, n: int) -> list[ActionString]:
    return _rollout(policy, rng=rng, batch=n)[0]


def greedy(policy: PolicyParams) -> ActionString:
    """Decode by taking the most probable action at every step."""
    return _rollout(policy, greedy=True)[0][0]


def log_prob(policy: PolicyParams, actions: ActionString | Sequence[int]) -> float:
    """log pi(actions) from a fresh forward pass, via a stable log-softmax."""
    acts = tuple(actions)
    _, steps = _rollout(policy, actions=[acts])
    total = 0.0
    for i, (st, a) in enumerate(zip(steps, acts)):
        z = st.top[0] @ policy.params[f"head{i}.w"] + policy.params[f"head{i}.b"]
        total += float(log_softmax(z)[a])
    return total


def policy_grad_batch(policy: PolicyParams, batch: Sequence[ActionString | Sequence[int]],
                      advantages: Sequence[float]) -> dict[str, np.ndarray]:
    """Sum over the batch of ``advantage_b * grad log pi(actions_b)``."""
    adv = np.asarray(advantages, dtype=np.float64)
    if not np.all(np.isfinite(adv)):
        raise ValueError("advantages must be finite")
    acts = np.array([tuple(a) for a in batch], dtype=np.int64)
    if acts.shape[0] != adv.shape[0]:
        raise ValueError(f"{acts.shape[0]} action strings but {adv.shape[0]} advantages")
    P = policy.params
    _, steps = _rollout(policy, actions=acts)
    grads = {k: np.zeros_like(v) for k, v in P.items()}
    B, L = len(adv), policy.n_layers
    rows = np.arange(B)
    dh_next = [np.zeros((B, policy.hidden)) for _ in range(L)]
    dc_next = [np.zeros((B, policy.hidden)) for _ in range(L)]
    dx_next = None  # gradient wrt the input fed to the following step
    for i in range(acts.shape[1] - 1, -1, -1):
        st, n = steps[i], policy.spaces[i]
        dz = -adv[:, None] * st.probs
        dz[rows, acts[:, i]] += adv
        if dx_next is not None:
            grads["proj.w"] += st.padded.T @ dx_next
            grads["proj.b"] += dx_next.sum(axis=0)
            dp = (dx_next @ P["proj.w"].T)[:, :n]
            dz += st.probs * (dp - (st.probs * dp).sum(axis=1, keepdims=True))
        grads[f"head{i}.w"] += st.top.T @ dz
        grads[f"head{i}.b"] += dz.sum(axis=0)
        d_in = dz @ P[f"head{i}.w"].T
        for layer in range(L - 1, -1, -1):
            g, dx, dh_next[layer], dc_next[layer] = lstm_backward(
                st.caches[layer], d_in + dh_next[layer], dc_next[layer])
            grads[f"lstm{layer}.wx"] += g.wx
            grads[f"lstm{layer}.wh"] += g.wh
            grads[f"lstm{layer}.b"] += g.b
            d_in = dx
        dx_next = d_in  # the start embedding at i == 0 is fixed, so this is dropped
    return grads


def policy_grad(policy: PolicyParams, actions: ActionString | Sequence[int],
                advantage: float) -> dict[str, np.ndarray]:
    """Gradient of ``advantage * log pi(actions)`` with respect to every policy parameter."""
    if not np.isfinite(advantage):
        raise ValueError("advantage must be finite")
    return policy_grad_batch(policy, [actions], [advantage])


def ascend(policy: PolicyParams, grads: dict[str, np.ndarray], lr: float) -> PolicyParams:
    """theta_c <- theta_c + lr * grads."""
    neg = {k: -g for k, g in grads.items()}
    return policy.with_params(sgd_step(policy.params, neg, SgdConfig(lr)))


def value(v: ValueParams, s) -> float:
    return float(np.asarray(s) @ v.w + v.b)


def value_loss(v: ValueParams, s, targets) -> float:
    r = np.asarray(targets, dtype=np.float64)
    return float(np.mean((value(v, s) - r) ** 2))


def value_grad(v: ValueParams, s, targets) -> ValueParams:
    """Exact gradient of the mean squared error between V(s) and the targets."""
    r = np.asarray(targets, dtype=np.float64)
    if r.size < 1:
        raise ValueError("need at least one target")
    resid = 2.0 * np.mean(value(v, s) - r)
    return ValueParams(resid * np.asarray(s, dtype=np.float64), np.array(resid))


def enumerate_actions(spaces: Sequence[int]):
    """All action strings over the given spaces, in lexicographic order."""
    return [tuple(int(a) for a in idx) for idx in np.ndindex(*spaces)]
