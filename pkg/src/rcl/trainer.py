"""Reward, actor-critic REINFORCE updates, network expansion search and the
continual-learning driver.

Random streams are keyed by ``(seed, task, epoch, trial, purpose)`` so that a
child's training never depends on how many workers ran the batch.
"""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .datasets import TaskDataset
from .expandable import (ExpandableNetwork, added_count, evaluate, expand, init_base,
                         param_count, train_new)
from .netcore import SgdConfig
from .numeric import rng_stream
from .policy import (ActionString, PolicyParams, ValueParams, ascend, init_critic, init_policy,
                     policy_grad_batch, sample_batch, value, value_grad)

log = logging.getLogger(__name__)

# stream purposes
_INIT, _TRAIN, _CONTROLLER, _SAMPLE, _TRIAL = range(5)


@dataclass(frozen=True)
class TrainerConfig:
    alpha: float = 0.0003
    controller_epochs: int = 10
    children: int = 2  # N, child networks per controller update
    controller_lr: float = 0.001
    critic_lr: float = 0.005
    task_lr: float = 0.001
    task_epochs: int = 15
    task_batch: int = 32
    spaces: tuple[int, ...] = (30, 30)
    controller_hidden: int = 100
    controller_layers: int = 2
    workers: int = 1

    def __post_init__(self):
        problems = []
        if self.alpha < 0:
            problems.append("alpha must be >= 0")
        if self.controller_epochs < 1:
            problems.append("controller_epochs must be >= 1")
        if self.children < 1:
            problems.append("children must be >= 1")
        for name in ("controller_lr", "critic_lr", "task_lr"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        if self.task_epochs < 1 or self.task_batch < 1:
            problems.append("task_epochs and task_batch must be >= 1")
        if not self.spaces or min(self.spaces) < 1:
            problems.append("every action space must be >= 1")
        if self.workers < 1:
            problems.append("workers must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass
class RewardRecord:
    task_id: int
    epoch: int
    trial: int
    actions: ActionString
    accuracy: float
    complexity: int
    reward: float
    params: int
    child: ExpandableNetwork | None = field(default=None, repr=False, compare=False)


def reward(accuracy: float, actions: Sequence[int], alpha: float) -> float:
    """Validation accuracy minus ``alpha`` per added unit."""
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy {accuracy} outside [0, 1]")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return accuracy - alpha * added_count(actions)


def reinforce_update(policy: PolicyParams, critic: ValueParams, batch: Sequence[RewardRecord],
                     cfg: TrainerConfig) -> tuple[PolicyParams, ValueParams]:
    """One actor-critic step on a batch of rewarded action strings.

    The baseline V(s) is evaluated before the critic moves.
    """
    if not batch:
        raise ValueError("empty batch")
    s = policy.start
    baseline = value(critic, s)
    rewards = [r.reward for r in batch]
    advantages = [r - baseline for r in rewards]
    grads = policy_grad_batch(policy, [r.actions for r in batch], advantages)
    n = len(batch)
    policy = ascend(policy, {k: g / n for k, g in grads.items()}, cfg.controller_lr)
    g = value_grad(critic, s, rewards)
    critic = ValueParams(critic.w - cfg.critic_lr * g.w, critic.b - cfg.critic_lr * g.b)
    return policy, critic


def select_best(history: Sequence[RewardRecord]) -> int:
    """Index of the highest-reward trial; the earliest wins ties."""
    if not history:
        raise ValueError("empty history")
    best = 0
    for i, rec in enumerate(history):
        if rec.reward > history[best].reward:
            best = i
    return best


# evaluate(actions, rng) -> (accuracy, parameter count, child network or None)
Evaluator = Callable[[ActionString, np.random.Generator], tuple[float, int, "ExpandableNetwork | None"]]


@dataclass
class SearchResult:
    best: RewardRecord
    history: list[RewardRecord]
    policy: PolicyParams
    critic: ValueParams

    @property
    def network(self) -> ExpandableNetwork | None:
        return self.best.child


def search(evaluate_child: Evaluator, cfg: TrainerConfig, seed: int, task_id: int,
           policy: PolicyParams | None = None, critic: ValueParams | None = None,
           on_epoch: Callable[[int, PolicyParams], None] | None = None) -> SearchResult:
    """Controller/critic training loop over child evaluations.

    Each controller epoch samples ``cfg.children`` action strings, evaluates
    them (in parallel when ``cfg.workers > 1``), then applies one update.
    Only the best child network seen so far is retained.
    """
    if policy is None:
        policy = init_policy(cfg.spaces, rng_stream(seed, task_id, _CONTROLLER),
                             hidden=cfg.controller_hidden, n_layers=cfg.controller_layers)
    if critic is None:
        critic = init_critic(policy.n_in)
    history: list[RewardRecord] = []
    best: RewardRecord | None = None
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for epoch in range(cfg.controller_epochs):
            srng = rng_stream(seed, task_id, epoch, _SAMPLE)
            batch = sample_batch(policy, srng, cfg.children)
            rngs = [rng_stream(seed, task_id, epoch, j, _TRIAL) for j in range(len(batch))]
            results = list((pool.map if pool else map)(evaluate_child, batch, rngs))
            records = []
            for j, (acts, (acc, n_params, child)) in enumerate(zip(batch, results)):
                rec = RewardRecord(task_id, epoch, j, acts, acc, added_count(acts),
                                   reward(acc, acts, cfg.alpha), n_params, child)
                if best is None or rec.reward > best.reward:
                    best = rec
                records.append(rec)
            history.extend(records)
            for rec in history:
                if rec is not best:
                    rec.child = None
            policy, critic = reinforce_update(policy, critic, records, cfg)
            if on_epoch is not None:
                on_epoch(epoch, policy)
            log.debug("task %d epoch %d rewards %s", task_id, epoch,
                      [round(r.reward, 4) for r in records])
    finally:
        if pool is not None:
            pool.shutdown()
    return SearchResult(best, history, policy, critic)


def expand_task(net: ExpandableNetwork, data: TaskDataset, cfg: TrainerConfig, seed: int,
                policy: PolicyParams | None = None,
                critic: ValueParams | None = None) -> SearchResult:
    """Search expansions of ``net`` for the next task; ``result.network`` is the chosen child."""
    task_id = net.latest_task + 1
    if len(cfg.spaces) != net.depth:
        raise ValueError(f"{len(cfg.spaces)} action spaces for {net.depth} hidden layers")
    sgd = SgdConfig(cfg.task_lr)

    def child(actions: ActionString, rng: np.random.Generator):
        c = expand(net, actions.actions, task_id, rng)
        train_new(c, data, task_id, cfg.task_epochs, sgd, rng, cfg.task_batch)
        return evaluate(c, data.val, task_id), param_count(c, task_id), c

    return search(child, cfg, seed, task_id, policy, critic)


@dataclass
class ContinualResult:
    network: ExpandableNetwork
    accuracy: list[list[float]]  # row i: accuracies on tasks 1..i+1 after training task i+1
    param_counts: list[int]
    seconds: list[float]
    trials: list[RewardRecord]

    @property
    def average_final_accuracy(self) -> float:
        return float(np.mean(self.accuracy[-1]))


def train_base(tasks: Sequence[TaskDataset], layer_sizes: Sequence[int], cfg: TrainerConfig,
               seed: int) -> ExpandableNetwork:
    net = init_base(layer_sizes, rng_stream(seed, 1, _INIT))
    return train_new(net, tasks[0], 1, cfg.task_epochs, SgdConfig(cfg.task_lr),
                     rng_stream(seed, 1, _TRAIN), cfg.task_batch)


def accuracy_row(net: ExpandableNetwork, tasks: Sequence[TaskDataset], upto: int,
                 task_of: Callable[[int], int] = lambda j: j) -> list[float]:
    return [evaluate(net, tasks[j - 1].test, task_of(j)) for j in range(1, upto + 1)]


def run_continual(tasks: Sequence[TaskDataset], layer_sizes: Sequence[int], cfg: TrainerConfig,
                  seed: int, on_task: Callable[[int, ExpandableNetwork], None] | None = None
                  ) -> ContinualResult:
    """Base training on task 1, controller-driven expansion for every later task.

    ``on_task(t, net)`` is called after task ``t`` is trained and evaluated.
    """
    if not tasks:
        raise ValueError("need at least one task")
    acc, counts, secs, trials = [], [], [], []
    t0 = time.perf_counter()
    net = train_base(tasks, layer_sizes, cfg, seed)
    for t in range(1, len(tasks) + 1):
        if t > 1:
            t0 = time.perf_counter()
            res = expand_task(net, tasks[t - 1], cfg, seed)
            net = res.network
            trials.extend(res.history)
            log.info("task %d: chose %s (val acc %.4f, reward %.4f)", t, res.best.actions.actions,
                     res.best.accuracy, res.best.reward)
        acc.append(accuracy_row(net, tasks, t))
        counts.append(param_count(net, t))
        secs.append(time.perf_counter() - t0)
        if on_task is not None:
            on_task(t, net)
    for rec in trials:
        rec.child = None
    return ContinualResult(net, acc, counts, secs, trials)


TRIAL_COLUMNS = ["method", "task", "epoch", "trial", "actions", "accuracy", "complexity",
                 "reward", "params"]


def format_actions(actions: Sequence[int]) -> str:
    return "-".join(str(int(a)) for a in actions)


def write_trials(records: Sequence[RewardRecord], path, method: str = "rcl") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for r in records:
            w.writerow([method, r.task_id, r.epoch, r.trial, format_actions(r.actions.actions),
                        repr(r.accuracy), r.complexity, repr(r.reward), r.params])


def read_trials(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
