"""Distribution-matching metrics: exact terminal distribution, exact total
variation, the sampled-subgraph consistency proxy, and top-k reward.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import bitset
from .bounds import ObservationLedger
from .dag import EnumerationCapError, ProblemInstance
from .policy import SetPolicy, sample_trajectories
from .validation import as_rng

logger = logging.getLogger(__name__)

MAX_EXACT_TERMINALS = 1_000_000
MAX_EXACT_CARDINALITY = 6


@dataclass
class MetricsRecord:
    """One row of the per-run metrics series."""

    step: int
    phase: str
    queries_used: int
    loss: float
    fcs: float
    exact_tv: float | None
    top_k_avg: float
    num_bounds: int
    coverage: int


def _lex_extensions(states: np.ndarray, n: int) -> np.ndarray:
    """All (k+1)-subsets in lexicographic order, extending k-subsets given
    in lexicographic order by one larger element each."""
    b, k = states.shape
    last = states[:, -1].astype(np.int64) if k > 0 else np.full(b, -1, dtype=np.int64)
    counts = n - 1 - last
    total = int(counts.sum())
    row_idx = np.repeat(np.arange(b), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    new_elem = np.arange(total) - np.repeat(starts, counts) + np.repeat(last + 1, counts)
    out = np.empty((total, k + 1), dtype=states.dtype)
    if k > 0:
        out[:, :k] = states[row_idx]
    out[:, k] = new_elem.astype(states.dtype)
    return out


def _encode_rows(states: np.ndarray, n: int) -> np.ndarray:
    """Injective integer key per sorted row, increasing with lex order."""
    k = states.shape[1]
    powers = n ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return states.astype(np.int64) @ powers


def _child_keys(states: np.ndarray, n: int, action: int) -> np.ndarray:
    """Keys of rows with ``action`` inserted in sorted position.

    Rows already containing the action produce garbage keys; callers must
    give those rows zero weight.
    """
    b, k = states.shape
    powers = n ** np.arange(k, -1, -1, dtype=np.int64)
    if k == 0:
        return np.full(b, action * powers[0], dtype=np.int64)
    s64 = states.astype(np.int64)
    lt = s64 < action
    coeff = np.where(lt, powers[:k], powers[1:])
    pos = lt.sum(axis=1)
    return (s64 * coeff).sum(axis=1) + action * powers[pos]


def learned_terminal_distribution(
    policy: SetPolicy,
    instance: ProblemInstance,
    max_terminals: int = MAX_EXACT_TERMINALS,
    max_cardinality: int = MAX_EXACT_CARDINALITY,
    chunk_size: int = 50_000,
) -> np.ndarray:
    """Exact probability of ending in each terminating state (greedy-free
    policy), over C-subsets in lexicographic order.

    Computed by pushing flow level by level through the DAG, which sums the
    per-terminal products over all C! addition orders without enumerating
    them.  Sums to 1 up to float rounding.
    """
    n, c = instance.num_elements, instance.cardinality
    total = math.comb(n, c)
    if total > max_terminals:
        raise EnumerationCapError(
            f"{total} terminating states exceed the exact-evaluation cap {max_terminals}"
        )
    if c > max_cardinality:
        raise EnumerationCapError(
            f"cardinality {c} exceeds the exact-evaluation cap {max_cardinality}"
        )
    states = np.zeros((1, 0), dtype=np.int16)
    flow = np.ones(1)
    for _ in range(c):
        next_states = _lex_extensions(states, n)
        next_keys = _encode_rows(next_states, n)
        next_flow = np.zeros(next_states.shape[0])
        for lo in range(0, states.shape[0], chunk_size):
            chunk = states[lo : lo + chunk_size]
            w = flow[lo : lo + chunk_size, None] * policy.distribution_from_members(chunk)
            keys = np.empty((chunk.shape[0], n), dtype=np.int64)
            for a in range(n):
                keys[:, a] = _child_keys(chunk, n, a)
            idx = np.searchsorted(next_keys, keys.ravel())
            np.clip(idx, 0, next_keys.shape[0] - 1, out=idx)
            next_flow += np.bincount(
                idx, weights=w.ravel(), minlength=next_keys.shape[0]
            )
        states, flow = next_states, next_flow
    return flow


def terminal_probabilities(
    policy: SetPolicy, instance: ProblemInstance, terminals: list[int]
) -> np.ndarray:
    """Exact learned probability of each given terminating state.

    Runs the same flow recursion restricted to the subsets of each
    terminal (2^C states per terminal, shared across terminals), so it
    stays tractable when the full terminal space does not.
    """
    c = instance.cardinality
    needed: dict[int, None] = {}
    member_lists: dict[int, tuple[int, ...]] = {}
    for terminal in terminals:
        members = bitset.members_of(terminal)
        if len(members) != c:
            raise ValueError(
                f"state {members} is not terminating for cardinality {c}"
            )
        for size in range(c):
            for combo in itertools.combinations(members, size):
                mask = bitset.mask_of(combo)
                if mask not in needed:
                    needed[mask] = None
                    member_lists[mask] = combo
    dist: dict[int, np.ndarray] = {}
    by_size: dict[int, list[int]] = {}
    for mask in needed:
        by_size.setdefault(bitset.size(mask), []).append(mask)
    for size, masks in by_size.items():
        rows = np.array([member_lists[m] for m in masks], dtype=np.int64).reshape(
            len(masks), size
        )
        probs = policy.distribution_from_members(rows)
        for m, p in zip(masks, probs):
            dist[m] = p

    out = np.empty(len(terminals))
    for i, terminal in enumerate(terminals):
        members = bitset.members_of(terminal)
        prob: dict[int, float] = {bitset.EMPTY: 1.0}
        for size in range(1, c + 1):
            for combo in itertools.combinations(members, size):
                mask = bitset.mask_of(combo)
                acc = 0.0
                for a in combo:
                    below = bitset.remove(mask, a)
                    acc += prob[below] * dist[below][a]
                prob[mask] = acc
        out[i] = prob[terminal]
    return out


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def exact_tv(
    policy: SetPolicy,
    instance: ProblemInstance,
    reward_fn,
    max_terminals: int = MAX_EXACT_TERMINALS,
    max_cardinality: int = MAX_EXACT_CARDINALITY,
) -> float:
    """Exact total variation between the learned terminal distribution and
    the reward-proportional target.

    ``reward_fn`` maps a state mask to its reward and is evaluated without
    budget metering; a vectorized ``reward_fn.batch(member_rows)`` is used
    when available.
    """
    learned = learned_terminal_distribution(
        policy, instance, max_terminals=max_terminals, max_cardinality=max_cardinality
    )
    rewards = _terminal_rewards(instance, reward_fn)
    z = rewards.sum()
    if z <= 0.0:
        raise ValueError("the target distribution needs a positive total reward")
    return total_variation(learned, rewards / z)


def _terminal_rewards(instance: ProblemInstance, reward_fn) -> np.ndarray:
    n, c = instance.num_elements, instance.cardinality
    batch = getattr(reward_fn, "batch", None)
    if batch is not None:
        states = np.zeros((1, 0), dtype=np.int16)
        for _ in range(c):
            states = _lex_extensions(states, n)
        return np.asarray(batch(states), dtype=np.float64)
    out = np.empty(math.comb(n, c))
    for i, combo in enumerate(itertools.combinations(range(n), c)):
        out[i] = reward_fn(bitset.mask_of(combo))
    return out


@dataclass
class FcsConfig:
    """Sampled-subgraph consistency settings.

    Per epoch the terminal set is collected from ``forward_samples`` policy
    rollouts plus ``backward_samples`` uniformly drawn terminals; the score
    is the mean, over epochs, of the total variation between the learned
    and target distributions restricted and renormalized on that set.
    ``full_subgraph`` forces the set to the whole terminal space, making
    the score coincide with the exact total variation.
    """

    forward_samples: int = 128
    backward_samples: int = 8
    epochs: int = 25
    full_subgraph: bool = False


def fcs(
    policy: SetPolicy,
    instance: ProblemInstance,
    reward_fn,
    config: FcsConfig | None = None,
    rng: int | np.random.Generator | None = None,
) -> float:
    """Flow-consistency proxy for the total variation, in [0, 1]."""
    config = config or FcsConfig()
    rng = as_rng(rng)
    n, c = instance.num_elements, instance.cardinality
    scores = []
    for _ in range(config.epochs):
        if config.full_subgraph:
            terminals = [
                bitset.mask_of(combo)
                for combo in itertools.combinations(range(n), c)
            ]
        else:
            collected: dict[int, None] = {}
            for traj in sample_trajectories(
                policy, instance, 0.0, rng, config.forward_samples
            ):
                collected[traj.terminal] = None
            for _ in range(config.backward_samples):
                members = rng.choice(n, size=c, replace=False)
                collected[bitset.mask_of(int(v) for v in members)] = None
            terminals = list(collected)
        if len(terminals) < 2:
            logger.debug("skipping degenerate fcs epoch with %d terminals", len(terminals))
            continue
        learned = terminal_probabilities(policy, instance, terminals)
        rewards = np.array([reward_fn(t) for t in terminals])
        if learned.sum() <= 0.0 or rewards.sum() <= 0.0:
            logger.debug("skipping fcs epoch with degenerate restriction")
            continue
        scores.append(
            total_variation(learned / learned.sum(), rewards / rewards.sum())
        )
    if not scores:
        raise ValueError("every fcs epoch was degenerate; nothing to average")
    return float(np.mean(scores))


def top_k_average(ledger: ObservationLedger, k: int) -> float:
    """Mean of the k largest true rewards among observed terminating states.

    Falls back to the mean over all observed terminals when fewer than k
    exist (logged, since the value is then not a true top-k).
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if not ledger.observed_terminals:
        raise ValueError("no terminating states observed yet")
    values = sorted(
        (ledger.observations[x] for x in ledger.observed_terminals), reverse=True
    )
    if len(values) < k:
        logger.debug("top-%d requested with only %d observed terminals", k, len(values))
    return float(np.mean(values[:k]))
