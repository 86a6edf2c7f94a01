"""Coverage rewards and the budget-metered reward oracle.

The reward of a vertex set is the normalized size of the union of its
members' neighborhoods.  It is submodular and monotone, which is what the
upper-bound machinery in :mod:`flowbound.bounds` relies on.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable

import numpy as np

from . import bitset
from .graphs import CoverageGraph
from .validation import as_state


class BudgetExhausted(RuntimeError):
    """The query budget ran out on an uncached state."""


def coverage_size(
    graph: CoverageGraph, state: int | Iterable[int], closed_neighborhood: bool = False
) -> int:
    """Number of vertices covered by ``state`` (exact integer)."""
    mask = as_state(state, graph.num_vertices)
    covered = 0
    for v in bitset.members_of(mask):
        covered |= graph.neighbor_masks[v]
    if closed_neighborhood:
        covered |= mask
    return covered.bit_count()


def coverage_reward(
    graph: CoverageGraph, state: int | Iterable[int], closed_neighborhood: bool = False
) -> float:
    """Fraction of vertices reachable from ``state`` in one hop, in [0, 1].

    A vertex does not cover itself unless ``closed_neighborhood`` is set.
    """
    return coverage_size(graph, state, closed_neighborhood) / graph.num_vertices


class CoverageReward:
    """Callable form of the coverage reward with a vectorized batch path."""

    def __init__(self, graph: CoverageGraph, closed_neighborhood: bool = False):
        self.graph = graph
        self.closed_neighborhood = closed_neighborhood

    def __call__(self, state: int | Iterable[int]) -> float:
        return coverage_reward(self.graph, state, self.closed_neighborhood)

    def batch(self, member_rows: np.ndarray) -> np.ndarray:
        """Rewards for many equal-size states given as an (n, k) index array."""
        member_rows = np.asarray(member_rows)
        packed = self.graph.packed_neighbors()
        if self.closed_neighborhood:
            n, words = packed.shape
            own = np.zeros((n, words), dtype=np.uint64)
            own[np.arange(n), np.arange(n) // 64] = np.uint64(1) << (
                np.arange(n, dtype=np.uint64) % np.uint64(64)
            )
            packed = packed | own
        union = np.bitwise_or.reduce(packed[member_rows], axis=1)
        counts = np.bitwise_count(union).sum(axis=1)
        return counts / self.graph.num_vertices


class ModularReward:
    """Additive surrogate reward: the sum of per-element weights.

    Modular rewards are the equality case of submodularity, so derived
    upper bounds must reproduce the true reward exactly.
    """

    def __init__(self, weights: Iterable[float]):
        self.weights = tuple(float(w) for w in weights)

    def __call__(self, state: int | Iterable[int]) -> float:
        mask = as_state(state, len(self.weights))
        return sum(self.weights[v] for v in bitset.members_of(mask))


class RewardOracle:
    """Budget-metered, cache-deduplicated access to a reward function.

    Only distinct states consume budget; the empty state is always free
    since its reward is known without touching the task.  Evaluation-only
    consumers (metrics) must use :meth:`peek`, which never touches the
    cache or the meter.
    """

    def __init__(self, reward_fn: Callable[[int], float], query_budget: int):
        if query_budget < 0:
            raise ValueError(f"query budget must be non-negative, got {query_budget}")
        self.reward_fn = reward_fn
        self.query_budget = query_budget
        self.queries_used = 0
        self.cache: dict[int, float] = {}

    def query(self, state: int | Iterable[int]) -> float:
        """Metered lookup; raises :class:`BudgetExhausted` when over budget."""
        mask = as_state(state)
        hit = self.cache.get(mask)
        if hit is not None:
            return hit
        if mask == bitset.EMPTY:
            value = float(self.reward_fn(mask))
            self.cache[mask] = value
            return value
        if self.queries_used >= self.query_budget:
            raise BudgetExhausted(
                f"query budget {self.query_budget} exhausted on uncached state"
            )
        value = float(self.reward_fn(mask))
        self.queries_used += 1
        self.cache[mask] = value
        return value

    def peek(self, state: int | Iterable[int]) -> float:
        """Unmetered evaluation for verification and metrics."""
        return float(self.reward_fn(as_state(state)))

    @property
    def remaining(self) -> int:
        return self.query_budget - self.queries_used
