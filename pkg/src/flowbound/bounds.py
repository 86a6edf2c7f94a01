"""Observation ledger and the index of reward upper bounds.

Submodularity turns three observed rewards into an upper bound on an
unobserved terminating state x: for any observed intermediate state s, an
element a of x with a not in s and s a subset of x,

    R(x) <= R(s + a) - R(s) + R(x - a).

The ledger stores every (state, reward) pair seen during training; the
index derives all such bounds incrementally, keeps the tightest one per
terminating state, and drops a terminal's bounds once its true reward is
observed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import bitset
from .dag import ProblemInstance, Trajectory


class RewardMismatchError(ValueError):
    """A state was re-inserted with a different reward value."""


@dataclass(frozen=True)
class UpperBoundEntry:
    """One derived bound on a terminating state, with its witnesses.

    ``value = R(witness_intermediate + witness_action) -
    R(witness_intermediate) + R(witness_parent)`` where all three rewards
    come from the ledger; validity requires witness_intermediate to be a
    proper subset of witness_parent and witness_action outside the parent.
    """

    terminal: int
    value: float
    witness_intermediate: int
    witness_action: int
    witness_parent: int


class ObservationLedger:
    """Map from visited states to their (deterministic) true reward."""

    def __init__(self) -> None:
        self.observations: dict[int, float] = {}
        self.observed_terminals: dict[int, None] = {}
        self.best_terminal_reward = -math.inf

    def record(self, state: int, reward: float, terminal: bool = False) -> bool:
        """Insert an observation; returns True when the state is new.

        Re-insertion with a different value raises, since rewards are
        deterministic functions of the state.
        """
        reward = float(reward)
        existing = self.observations.get(state)
        if existing is not None:
            if existing != reward:
                raise RewardMismatchError(
                    f"state {bitset.members_of(state)} re-observed with reward "
                    f"{reward} != {existing}"
                )
            new = False
        else:
            self.observations[state] = reward
            new = True
        if terminal and state not in self.observed_terminals:
            self.observed_terminals[state] = None
            if reward > self.best_terminal_reward:
                self.best_terminal_reward = reward
        return new

    def reward_of(self, state: int) -> float:
        return self.observations[state]

    def __contains__(self, state: int) -> bool:
        return state in self.observations

    def __len__(self) -> int:
        return len(self.observations)

    def dump(self, path: str | Path) -> None:
        """One line per observation: sorted member indices, TAB, reward."""
        with Path(path).open("w", encoding="utf-8") as fh:
            for state, reward in self.observations.items():
                members = " ".join(str(v) for v in bitset.members_of(state))
                fh.write(f"{members}\t{reward!r}\n")


class BoundIndex:
    """Tightest known upper bound per unobserved terminating state.

    Two side indexes make trajectory recording incremental: observed
    parent-sized states (size C-1) and observed one-step transitions
    (s, a) with both s and s+a in the ledger and |s| <= C-2.  A new parent
    pairs against all indexed transitions, a new transition against all
    previously indexed parents, so each (parent, transition) pair is
    evaluated exactly once over the run.
    """

    def __init__(self, instance: ProblemInstance, clamp_max: float | None = None):
        self.instance = instance
        self.clamp_max = clamp_max
        self.tightest: dict[int, UpperBoundEntry] = {}
        self.transitions: dict[int, dict[int, None]] = {}
        self.parents: dict[int, None] = {}
        self.total_derived = 0

    def evict(self, terminal: int) -> None:
        self.tightest.pop(terminal, None)

    def _derive(self, ledger: ObservationLedger, parent: int, s: int, a: int) -> int:
        x = bitset.add(parent, a)
        if x in ledger.observed_terminals:
            return 0
        value = (
            ledger.observations[bitset.add(s, a)]
            - ledger.observations[s]
            + ledger.observations[parent]
        )
        if self.clamp_max is not None and value > self.clamp_max:
            value = self.clamp_max
        self.total_derived += 1
        current = self.tightest.get(x)
        if current is None or value < current.value:
            self.tightest[x] = UpperBoundEntry(x, value, s, a, parent)
            return 1
        return 0


def record_trajectory(
    ledger: ObservationLedger,
    index: BoundIndex,
    trajectory: Trajectory,
    rewards_by_prefix: dict[int, float],
) -> int:
    """Insert a fully observed trajectory and derive the new bounds.

    ``rewards_by_prefix`` must cover every prefix state of the trajectory,
    the empty set included.  Returns the number of bound entries created
    or tightened.
    """
    instance = index.instance
    n, k_parent = instance.num_elements, instance.parent_size
    prefixes = trajectory.prefixes()
    terminal = prefixes[-1]

    new_states = []
    for state in prefixes:
        if ledger.record(state, rewards_by_prefix[state], terminal=state == terminal):
            new_states.append(state)
    index.evict(terminal)

    new_parents = []
    new_transitions = []
    new_state_set = set(new_states)
    for state in new_states:
        size = bitset.size(state)
        if size == k_parent:
            new_parents.append(state)
            index.parents[state] = None
        # Transitions usable by a bound have |s| <= C-2; larger lower
        # states can never sit strictly inside a parent.
        if size <= k_parent - 1:
            for a in range(n):
                if not bitset.contains(state, a) and bitset.add(state, a) in ledger:
                    new_transitions.append((state, a))
        # A new state can also be the upper endpoint of a transition whose
        # lower state was already in the ledger; dedupe against the loop
        # above, which already covers lower states that are new.
        if 1 <= size <= k_parent:
            for a in bitset.members_of(state):
                below = bitset.remove(state, a)
                if below in ledger and below not in new_state_set:
                    new_transitions.append((below, a))

    for state, a in new_transitions:
        index.transitions.setdefault(a, {})[state] = None

    changed = 0
    new_parent_set = set(new_parents)
    for parent in new_parents:
        for a, sources in index.transitions.items():
            if bitset.contains(parent, a):
                continue
            for s in sources:
                if bitset.is_subset(s, parent):
                    changed += index._derive(ledger, parent, s, a)
    for s, a in new_transitions:
        for parent in index.parents:
            if parent in new_parent_set:
                continue
            if not bitset.contains(parent, a) and bitset.is_subset(s, parent):
                changed += index._derive(ledger, parent, s, a)
    return changed


def rebuild_index(
    ledger: ObservationLedger, instance: ProblemInstance, clamp_max: float | None = None
) -> BoundIndex:
    """Batch-recompute the index from scratch; used to cross-check the
    incremental updates."""
    index = BoundIndex(instance, clamp_max=clamp_max)
    k_parent = instance.parent_size
    n = instance.num_elements
    for state in ledger.observations:
        size = bitset.size(state)
        if size == k_parent:
            index.parents[state] = None
        if size <= k_parent - 1:
            for a in range(n):
                if not bitset.contains(state, a) and bitset.add(state, a) in ledger:
                    index.transitions.setdefault(a, {})[state] = None
    for parent in index.parents:
        for a, sources in index.transitions.items():
            if bitset.contains(parent, a):
                continue
            for s in sources:
                if bitset.is_subset(s, parent):
                    index._derive(ledger, parent, s, a)
    return index


def tightest_bound(index: BoundIndex, terminal: int) -> UpperBoundEntry | None:
    """The minimum-value bound on ``terminal``, or None if unbounded/observed."""
    return index.tightest.get(terminal)


def active_bounds(
    index: BoundIndex, ledger: ObservationLedger, filtering_on: bool
) -> list[UpperBoundEntry]:
    """Bound entries usable as training signal.

    With filtering on, only bounds above the best observed terminal reward
    survive; with no observed terminal yet the filter is vacuous.
    """
    entries = list(index.tightest.values())
    if not filtering_on:
        return entries
    best = ledger.best_terminal_reward
    return [e for e in entries if e.value > best]


def coverage_count(index: BoundIndex) -> int:
    """Number of unobserved terminating states holding at least one bound."""
    return len(index.tightest)


class OptimisticPartition(NamedTuple):
    value: float
    complete: bool


def optimistic_partition(
    index: BoundIndex, ledger: ObservationLedger, instance: ProblemInstance
) -> OptimisticPartition:
    """Sum of tightest bounds on unobserved terminals plus true rewards on
    observed ones.

    ``complete`` is False when some terminal is neither observed nor
    bounded, in which case the value is the partial sum.
    """
    total = sum(e.value for e in index.tightest.values())
    total += sum(ledger.observations[x] for x in ledger.observed_terminals)
    covered = len(index.tightest) + len(ledger.observed_terminals)
    total_terminals = math.comb(instance.num_elements, instance.cardinality)
    return OptimisticPartition(total, covered == total_terminals)


def optimistic_distribution(
    rewards: np.ndarray, upper_bounds: np.ndarray, bounded: np.ndarray
) -> np.ndarray:
    """The sampling distribution induced by mixing bounds and true rewards.

    Bounded (unobserved) terminals contribute their upper bound, observed
    ones their reward; everything is normalized by the resulting
    optimistic partition sum.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    upper_bounds = np.asarray(upper_bounds, dtype=np.float64)
    bounded = np.asarray(bounded, dtype=bool)
    numer = np.where(bounded, upper_bounds, rewards)
    return numer / numer.sum()


def oversampling_margin(
    rewards: np.ndarray, upper_bounds: np.ndarray, bounded: np.ndarray
) -> np.ndarray:
    """Per-terminal margin of the oversampling condition.

    For a bounded terminal x with target probability P(x) = R(x)/Z and
    optimism gap D(x) = UB(x) - R(x), the margin is

        (1 - P(x)) / P(x) * D(x) - sum of D over the other bounded terminals,

    which is non-negative exactly when the optimistic distribution
    oversamples x.  Entries for unbounded terminals are NaN.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    upper_bounds = np.asarray(upper_bounds, dtype=np.float64)
    bounded = np.asarray(bounded, dtype=bool)
    z = rewards.sum()
    p = rewards / z
    gaps = np.where(bounded, upper_bounds - rewards, 0.0)
    other_gap = gaps.sum() - gaps
    margin = (1.0 - p) / p * gaps - other_gap
    return np.where(bounded, margin, np.nan)
