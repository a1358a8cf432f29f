"""Analytic stand-ins for child training, used to test the controller in isolation.

A surrogate maps an action string straight to an "accuracy" in [0, 1], so a
full search costs milliseconds and the optimum is known by enumeration.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .expandable import added_count
from .numeric import rng_stream
from .policy import PolicyParams, enumerate_actions, log_prob


@dataclass(frozen=True)
class SurrogateEnvironment:
    spaces: tuple[int, ...]
    accuracy_fn: Callable[[tuple[int, ...]], float]

    def accuracy(self, actions: Sequence[int]) -> float:
        return float(self.accuracy_fn(tuple(int(a) for a in actions)))

    def __call__(self, actions, rng=None):
        acts = tuple(actions)
        return self.accuracy(acts), added_count(acts), None

    def brute_force(self, alpha: float = 0.0) -> tuple[int, ...]:
        """Exhaustive argmax of accuracy - alpha * complexity (first in lexicographic order on ties)."""
        best, best_r = None, -np.inf
        for a in enumerate_actions(self.spaces):
            r = self.accuracy(a) - alpha * added_count(a)
            if r > best_r:
                best, best_r = a, r
        return best


def peaked(spaces: Sequence[int], seed: int, width: float = 1.5) -> SurrogateEnvironment:
    """Accuracy peaks at a seed-chosen target string and decays with distance from it."""
    spaces = tuple(int(n) for n in spaces)
    rng = rng_stream(seed, 0x5355)
    target = np.array([rng.integers(0, n) for n in spaces])

    def acc(a):
        d2 = float(np.sum(((np.array(a) - target) / width) ** 2))
        return 0.5 + 0.45 * np.exp(-d2)

    return SurrogateEnvironment(spaces, acc)


def saturating(spaces: Sequence[int], floor: float = 0.5, ceiling: float = 0.98,
               scale: float = 1.5) -> SurrogateEnvironment:
    """Accuracy grows with the number of added units, with diminishing returns."""
    spaces = tuple(int(n) for n in spaces)

    def acc(a):
        return ceiling - (ceiling - floor) * np.exp(-added_count(a) / scale)

    return SurrogateEnvironment(spaces, acc)


def action_distribution(policy: PolicyParams) -> dict[tuple[int, ...], float]:
    return {a: float(np.exp(log_prob(policy, a))) for a in enumerate_actions(policy.spaces)}


def expected_complexity(policy: PolicyParams) -> float:
    return float(sum(p * added_count(a) for a, p in action_distribution(policy).items()))
