"""The set-construction DAG: problem instances, trajectories, enumeration.

States are subsets of a ground set of ``num_elements`` elements; an action
adds one missing element.  Construction stops exactly when the state
reaches ``cardinality`` elements, so terminating states are the
C-subsets and trajectories are the ordered C-permutations.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterator
from dataclasses import dataclass

from . import bitset

TERMINAL_ENUMERATION_CAP = 10_000_000
TRAJECTORY_ENUMERATION_CAP = 10_000_000


class EnumerationCapError(RuntimeError):
    """Raised instead of attempting an enumeration larger than the cap."""


@dataclass(frozen=True)
class ProblemInstance:
    """Ground-set size N and cardinality constraint C, with C at most half
    of N (rounded up).

    The half-size restriction is load-bearing for the counting formulas in
    :mod:`flowbound.counting`, so it is a constructor error rather than a
    warning.
    """

    num_elements: int
    cardinality: int

    def __post_init__(self) -> None:
        if self.num_elements < 1:
            raise ValueError(f"num_elements must be positive, got {self.num_elements}")
        if self.cardinality < 1:
            raise ValueError(f"cardinality must be positive, got {self.cardinality}")
        if 2 * self.cardinality > self.num_elements + 1:
            raise ValueError(
                f"cardinality {self.cardinality} exceeds half the ground set "
                f"({self.num_elements} elements)"
            )

    @property
    def parent_size(self) -> int:
        """K = C - 1, the size of a terminating state's parents."""
        return self.cardinality - 1

    def is_terminal(self, state: int) -> bool:
        return bitset.size(state) == self.cardinality


@dataclass(frozen=True)
class Trajectory:
    """An ordered sequence of element additions from the empty set.

    ``additions`` has length C and no duplicates; the trajectory's states
    are the C+1 nested prefixes ending in the terminating set.
    """

    additions: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(set(self.additions)) != len(self.additions):
            raise ValueError(f"duplicate additions in trajectory {self.additions}")

    def __len__(self) -> int:
        return len(self.additions)

    @property
    def terminal(self) -> int:
        return bitset.mask_of(self.additions)

    def prefixes(self) -> list[int]:
        """All C+1 prefix states, from the empty set to the terminal."""
        out = [bitset.EMPTY]
        m = bitset.EMPTY
        for e in self.additions:
            m = bitset.add(m, e)
            out.append(m)
        return out

    def transitions(self) -> list[tuple[int, int]]:
        """(state before, element added) pairs along the trajectory."""
        out = []
        m = bitset.EMPTY
        for e in self.additions:
            out.append((m, e))
            m = bitset.add(m, e)
        return out


def available_actions(instance: ProblemInstance, state: int) -> list[int]:
    """Elements not yet in ``state``, in increasing order.

    Raises on terminating states: they must not be extended.
    """
    k = bitset.size(state)
    if k >= instance.cardinality:
        raise ValueError(f"state of size {k} is terminating; no actions available")
    return [e for e in range(instance.num_elements) if not bitset.contains(state, e)]


def count_trajectories(instance: ProblemInstance) -> int:
    """N!/(N-C)!, the number of ordered ways to build a terminating state."""
    return math.perm(instance.num_elements, instance.cardinality)


def count_terminal_states(instance: ProblemInstance) -> int:
    return math.comb(instance.num_elements, instance.cardinality)


def enumerate_terminating_states(
    instance: ProblemInstance, cap: int = TERMINAL_ENUMERATION_CAP
) -> Iterator[int]:
    """Yield every C-subset exactly once as a mask, in lexicographic order."""
    total = count_terminal_states(instance)
    if total > cap:
        raise EnumerationCapError(
            f"{total} terminating states exceed enumeration cap {cap}"
        )
    for combo in itertools.combinations(range(instance.num_elements), instance.cardinality):
        yield bitset.mask_of(combo)


def enumerate_trajectories(
    instance: ProblemInstance, cap: int = TRAJECTORY_ENUMERATION_CAP
) -> Iterator[Trajectory]:
    """Yield every ordered C-permutation exactly once, in lexicographic order."""
    total = count_trajectories(instance)
    if total > cap:
        raise EnumerationCapError(f"{total} trajectories exceed enumeration cap {cap}")
    for perm in itertools.permutations(range(instance.num_elements), instance.cardinality):
        yield Trajectory(perm)
