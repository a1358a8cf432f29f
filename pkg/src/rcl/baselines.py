"""Comparison methods: one network fine-tuned on every task, and a fixed-size
expansion per task using the same freeze/timestamp machinery as RCL.

EWC, GEM and DEN are not provided.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Literal, Sequence

from .datasets import TaskDataset
from .expandable import (ExpandableNetwork, added_count, evaluate, expand, init_base, param_count,
                         train_all, train_new)
from .netcore import SgdConfig
from .numeric import rng_stream
from .policy import ActionString
from .trainer import _INIT, _TRAIN, ContinualResult, RewardRecord, accuracy_row


@dataclass(frozen=True)
class BaselineConfig:
    kind: Literal["single-network", "fixed-expansion"] = "single-network"
    expansion: tuple[int, ...] = ()
    task_epochs: int = 15
    task_lr: float = 0.001
    task_batch: int = 32

    def __post_init__(self):
        if any(k < 0 for k in self.expansion):
            raise ValueError("expansion counts must be >= 0")
        if self.task_epochs < 1 or self.task_batch < 1 or not self.task_lr > 0:
            raise ValueError("task_epochs, task_batch and task_lr must be positive")


def _base(tasks, layer_sizes, cfg: BaselineConfig, seed: int) -> ExpandableNetwork:
    net = init_base(layer_sizes, rng_stream(seed, 1, _INIT))
    return train_new(net, tasks[0], 1, cfg.task_epochs, SgdConfig(cfg.task_lr),
                     rng_stream(seed, 1, _TRAIN), cfg.task_batch)


def run_single_network(tasks: Sequence[TaskDataset], layer_sizes: Sequence[int],
                       cfg: BaselineConfig, seed: int, on_task=None) -> ContinualResult:
    """Fine-tune every parameter of one fixed network on each task in turn."""
    if not tasks:
        raise ValueError("need at least one task")
    acc, counts, secs = [], [], []
    t0 = time.perf_counter()
    net = _base(tasks, layer_sizes, cfg, seed)
    for t in range(1, len(tasks) + 1):
        if t > 1:
            t0 = time.perf_counter()
            train_all(net, tasks[t - 1], cfg.task_epochs, SgdConfig(cfg.task_lr),
                      rng_stream(seed, t, _TRAIN), cfg.task_batch)
        # one shared parameter set: every task is read through the task-1 shape
        acc.append(accuracy_row(net, tasks, t, task_of=lambda j: 1))
        counts.append(param_count(net, 1))
        secs.append(time.perf_counter() - t0)
        if on_task is not None:
            on_task(t, net)
    return ContinualResult(net, acc, counts, secs, [])


def run_fixed_expansion(tasks: Sequence[TaskDataset], layer_sizes: Sequence[int],
                        cfg: BaselineConfig, seed: int, on_task=None) -> ContinualResult:
    """Add the same number of units per layer for every new task; no controller."""
    if not tasks:
        raise ValueError("need at least one task")
    depth = len(layer_sizes) - 2
    if len(cfg.expansion) != depth:
        raise ValueError(f"{len(cfg.expansion)} expansion counts for {depth} hidden layers")
    acc, counts, secs, trials = [], [], [], []
    t0 = time.perf_counter()
    net = _base(tasks, layer_sizes, cfg, seed)
    for t in range(1, len(tasks) + 1):
        if t > 1:
            t0 = time.perf_counter()
            rng = rng_stream(seed, t, _TRAIN)
            net = expand(net, cfg.expansion, t, rng)
            train_new(net, tasks[t - 1], t, cfg.task_epochs, SgdConfig(cfg.task_lr), rng,
                      cfg.task_batch)
            val = evaluate(net, tasks[t - 1].val, t)
            trials.append(RewardRecord(t, 0, 0, ActionString(tuple(cfg.expansion)), val,
                                       added_count(cfg.expansion), val, param_count(net, t)))
        acc.append(accuracy_row(net, tasks, t))
        counts.append(param_count(net, t))
        secs.append(time.perf_counter() - t0)
        if on_task is not None:
            on_task(t, net)
    return ContinualResult(net, acc, counts, secs, trials)
