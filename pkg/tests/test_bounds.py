import math

import numpy as np
import pytest

from flowbound import bitset
from flowbound.bounds import (
    BoundIndex,
    ObservationLedger,
    OptimisticPartition,
    RewardMismatchError,
    UpperBoundEntry,
    active_bounds,
    coverage_count,
    optimistic_distribution,
    optimistic_partition,
    oversampling_margin,
    rebuild_index,
    record_trajectory,
    tightest_bound,
)
from flowbound.dag import ProblemInstance, Trajectory, enumerate_trajectories
from flowbound.graphs import CoverageGraph, generate_er
from flowbound.rewards import CoverageReward, ModularReward


def record_with(ledger, index, trajectory, reward_fn):
    rewards = {p: reward_fn(p) for p in trajectory.prefixes()}
    return record_trajectory(ledger, index, trajectory, rewards)


def path_graph(n):
    return CoverageGraph(n, [(i, i + 1) for i in range(n - 1)])


class TestLedger:
    def test_reinsertion_same_value_ok(self):
        ledger = ObservationLedger()
        assert ledger.record(0b11, 0.5) is True
        assert ledger.record(0b11, 0.5) is False

    def test_reinsertion_different_value_errors(self):
        ledger = ObservationLedger()
        ledger.record(0b11, 0.5)
        with pytest.raises(RewardMismatchError):
            ledger.record(0b11, 0.6)

    def test_best_terminal_tracking(self):
        ledger = ObservationLedger()
        assert ledger.best_terminal_reward == -math.inf
        ledger.record(0b011, 0.4, terminal=True)
        ledger.record(0b101, 0.9, terminal=True)
        ledger.record(0b110, 0.2, terminal=True)
        assert ledger.best_terminal_reward == 0.9

    def test_dump(self, tmp_path):
        ledger = ObservationLedger()
        ledger.record(bitset.mask_of([2, 0]), 0.25)
        out = tmp_path / "ledger.tsv"
        ledger.dump(out)
        assert out.read_text() == "0 2\t0.25\n"


class TestRecordTrajectory:
    def test_two_trajectory_cross_bound(self):
        """Two trajectories sharing no terminal produce a bound on a third
        terminal from one's parent-sized prefix and the other's early
        transition; a later trajectory tightens it."""
        instance = ProblemInstance(6, 3)
        reward = CoverageReward(path_graph(6))
        ledger, index = ObservationLedger(), BoundIndex(instance)

        # ends in {0,2,5}: observes the {2} prefix and the (empty, 2) step
        record_with(ledger, index, Trajectory((2, 0, 5)), reward)
        assert coverage_count(index) == 0

        # ends in {0,1,4}: observes the parent-sized prefix {0,1}
        created = record_with(ledger, index, Trajectory((0, 1, 4)), reward)
        assert created == 2  # one bound created on {0,1,2}, then tightened

        x = bitset.mask_of([0, 1, 2])
        assert coverage_count(index) == 1
        entry = tightest_bound(index, x)
        # candidate values: R({2})-R({})+R({0,1}) = 5/6, then two ways to
        # get R({0,2})-R({0})+R({0,1}) = 4/6, which equals the true reward
        assert entry.value == pytest.approx(4 / 6)
        assert entry.value >= reward(x)
        assert entry.witness_parent == bitset.mask_of([0, 1])
        assert entry.witness_intermediate == bitset.mask_of([0])
        assert entry.witness_action == 2

    def test_witness_value_recomputes_bit_exact(self):
        instance = ProblemInstance(6, 3)
        reward = CoverageReward(generate_er(6, 0.5, seed=3))
        ledger, index = ObservationLedger(), BoundIndex(instance)
        rng = np.random.default_rng(0)
        for _ in range(12):
            traj = Trajectory(tuple(int(v) for v in rng.choice(6, 3, replace=False)))
            record_with(ledger, index, traj, reward)
        assert index.tightest, "expected at least one bound in this run"
        for entry in index.tightest.values():
            recomputed = (
                ledger.observations[bitset.add(entry.witness_intermediate, entry.witness_action)]
                - ledger.observations[entry.witness_intermediate]
                + ledger.observations[entry.witness_parent]
            )
            assert recomputed == entry.value

    def test_modular_reward_gives_exact_bounds(self):
        instance = ProblemInstance(6, 3)
        reward = ModularReward([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        ledger, index = ObservationLedger(), BoundIndex(instance)
        rng = np.random.default_rng(1)
        for _ in range(20):
            traj = Trajectory(tuple(int(v) for v in rng.choice(6, 3, replace=False)))
            record_with(ledger, index, traj, reward)
        assert index.tightest
        for terminal, entry in index.tightest.items():
            assert entry.value == reward(terminal)

    def test_full_pass_observes_everything(self):
        """After every trajectory is recorded no bound survives and the
        incremental index agrees with a from-scratch recomputation."""
        instance = ProblemInstance(5, 3)
        reward = CoverageReward(generate_er(5, 0.6, seed=2))
        ledger, index = ObservationLedger(), BoundIndex(instance)
        trajectories = list(enumerate_trajectories(instance))
        assert len(trajectories) == 60
        for i, traj in enumerate(trajectories):
            record_with(ledger, index, traj, reward)
            if i == 19:
                mid = rebuild_index(ledger, instance)
                assert _tightest_values(mid) == _tightest_values(index)
        assert coverage_count(index) == 0
        rebuilt = rebuild_index(ledger, instance)
        assert _tightest_values(rebuilt) == _tightest_values(index) == {}

    def test_incremental_equals_batch_on_random_subsets(self):
        instance = ProblemInstance(6, 3)
        reward = CoverageReward(generate_er(6, 0.5, seed=7))
        rng = np.random.default_rng(3)
        trajectories = list(enumerate_trajectories(instance))
        ledger, index = ObservationLedger(), BoundIndex(instance)
        for i in rng.integers(0, len(trajectories), size=10):
            record_with(ledger, index, trajectories[int(i)], reward)
        rebuilt = rebuild_index(ledger, instance)
        assert _tightest_values(rebuilt) == _tightest_values(index)
        assert set(rebuilt.parents) == set(index.parents)
        assert {a: set(s) for a, s in rebuilt.transitions.items()} == {
            a: set(s) for a, s in index.transitions.items()
        }

    def test_tightening_is_monotone(self):
        instance = ProblemInstance(6, 3)
        reward = CoverageReward(generate_er(6, 0.5, seed=11))
        ledger, index = ObservationLedger(), BoundIndex(instance)
        rng = np.random.default_rng(5)
        seen: dict[int, float] = {}
        for _ in range(30):
            traj = Trajectory(tuple(int(v) for v in rng.choice(6, 3, replace=False)))
            record_with(ledger, index, traj, reward)
            for terminal, entry in index.tightest.items():
                if terminal in seen:
                    assert entry.value <= seen[terminal]
                seen[terminal] = entry.value

    def test_observed_terminal_never_bounded(self):
        instance = ProblemInstance(6, 3)
        reward = CoverageReward(generate_er(6, 0.5, seed=13))
        ledger, index = ObservationLedger(), BoundIndex(instance)
        rng = np.random.default_rng(8)
        for _ in range(40):
            traj = Trajectory(tuple(int(v) for v in rng.choice(6, 3, replace=False)))
            record_with(ledger, index, traj, reward)
            assert not set(index.tightest) & set(ledger.observed_terminals)

    def test_bound_evicted_once_terminal_observed(self):
        instance = ProblemInstance(6, 3)
        reward = CoverageReward(path_graph(6))
        ledger, index = ObservationLedger(), BoundIndex(instance)
        record_with(ledger, index, Trajectory((2, 0, 5)), reward)
        record_with(ledger, index, Trajectory((0, 1, 4)), reward)
        x = bitset.mask_of([0, 1, 2])
        assert tightest_bound(index, x) is not None
        record_with(ledger, index, Trajectory((0, 1, 2)), reward)
        assert tightest_bound(index, x) is None

    def test_validity_against_true_rewards(self):
        instance = ProblemInstance(7, 3)
        reward = CoverageReward(generate_er(7, 0.4, seed=17))
        ledger, index = ObservationLedger(), BoundIndex(instance)
        rng = np.random.default_rng(21)
        for _ in range(60):
            traj = Trajectory(tuple(int(v) for v in rng.choice(7, 3, replace=False)))
            record_with(ledger, index, traj, reward)
        assert index.tightest
        for terminal, entry in index.tightest.items():
            assert entry.value >= reward(terminal)

    def test_clamp_to_known_maximum(self):
        instance = ProblemInstance(6, 3)
        # weights sum far above 1, so raw bounds overshoot the clamp
        reward = ModularReward([0.5] * 6)
        ledger, index = ObservationLedger(), BoundIndex(instance, clamp_max=1.0)
        rng = np.random.default_rng(2)
        for _ in range(20):
            traj = Trajectory(tuple(int(v) for v in rng.choice(6, 3, replace=False)))
            record_with(ledger, index, traj, reward)
        assert index.tightest
        assert all(e.value <= 1.0 for e in index.tightest.values())


def _tightest_values(index: BoundIndex) -> dict[int, float]:
    return {x: e.value for x, e in index.tightest.items()}


class TestQueries:
    def _small_index(self):
        instance = ProblemInstance(3, 1)
        ledger, index = ObservationLedger(), BoundIndex(instance)
        index.tightest[bitset.mask_of([0])] = UpperBoundEntry(bitset.mask_of([0]), 0.9, 0, 0, 0)
        index.tightest[bitset.mask_of([1])] = UpperBoundEntry(bitset.mask_of([1]), 0.7, 0, 1, 0)
        return instance, ledger, index

    def test_tightest_bound_absent_cases(self):
        instance, ledger, index = self._small_index()
        assert tightest_bound(index, bitset.mask_of([2])) is None
        assert tightest_bound(index, bitset.mask_of([0])).value == 0.9

    def test_active_bounds_filtering(self):
        instance, ledger, index = self._small_index()
        # no observed terminal yet: the filter is vacuous
        assert len(active_bounds(index, ledger, filtering_on=True)) == 2
        ledger.record(bitset.mask_of([2]), 0.8, terminal=True)
        filtered = active_bounds(index, ledger, filtering_on=True)
        assert [e.value for e in filtered] == [0.9]
        assert len(active_bounds(index, ledger, filtering_on=False)) == 2

    def test_coverage_count(self):
        instance, ledger, index = self._small_index()
        assert coverage_count(index) == 2
        assert coverage_count(BoundIndex(instance)) == 0


class TestOptimisticPartition:
    def test_worked_example(self):
        # three terminals: two bounded (UB 2 and 1.5), one observed at 2;
        # true rewards (1, 1, 2) so the optimistic sum is 4 + 1.5
        instance = ProblemInstance(3, 1)
        ledger, index = ObservationLedger(), BoundIndex(instance)
        index.tightest[bitset.mask_of([0])] = UpperBoundEntry(bitset.mask_of([0]), 2.0, 0, 0, 0)
        index.tightest[bitset.mask_of([1])] = UpperBoundEntry(bitset.mask_of([1]), 1.5, 0, 1, 0)
        ledger.record(bitset.mask_of([2]), 2.0, terminal=True)
        assert optimistic_partition(index, ledger, instance) == OptimisticPartition(5.5, True)

    def test_incomplete_flagged(self):
        instance = ProblemInstance(3, 1)
        ledger, index = ObservationLedger(), BoundIndex(instance)
        ledger.record(bitset.mask_of([2]), 2.0, terminal=True)
        value, complete = optimistic_partition(index, ledger, instance)
        assert value == 2.0 and not complete

    def test_all_observed_equals_true_partition(self):
        instance = ProblemInstance(3, 1)
        ledger, index = ObservationLedger(), BoundIndex(instance)
        for v, r in enumerate([0.2, 0.3, 0.5]):
            ledger.record(bitset.mask_of([v]), r, terminal=True)
        assert optimistic_partition(index, ledger, instance) == OptimisticPartition(1.0, True)


class TestOversampling:
    def test_distribution_normalizes(self, rng):
        rewards = rng.uniform(0.1, 1.0, size=12)
        ubs = rewards + rng.uniform(0.0, 0.5, size=12)
        bounded = rng.random(12) < 0.5
        dist = optimistic_distribution(rewards, ubs, bounded)
        assert dist.sum() == pytest.approx(1.0)
        # observed terminals are undersampled whenever any gap exists
        if bounded.any() and (ubs[bounded] > rewards[bounded]).any():
            target = rewards / rewards.sum()
            assert np.all(dist[~bounded] < target[~bounded])

    def test_margin_sign_matches_oversampling(self, rng):
        for _ in range(100):
            k = int(rng.integers(3, 21))
            rewards = rng.uniform(0.05, 1.0, size=k)
            ubs = rewards + rng.uniform(0.0, 1.0, size=k)
            bounded = rng.random(k) < 0.6
            if not bounded.any():
                continue
            dist = optimistic_distribution(rewards, ubs, bounded)
            target = rewards / rewards.sum()
            margin = oversampling_margin(rewards, ubs, bounded)
            for i in np.nonzero(bounded)[0]:
                assert (margin[i] >= -1e-9) == (dist[i] >= target[i] - 1e-9)
