"""Online/offline training of the set sampler, in three variants.

``classical`` queries the reward only at terminating states and replays
its own trajectories.  ``subo`` additionally queries every prefix of each
sampled trajectory, derives reward upper bounds on unobserved terminating
states from the ledger, and trains on a mix of replayed trajectories (true
rewards) and backward-sampled trajectories into bound-covered terminals
(bound values as optimistic signal).  ``subo_f`` is the same but keeps the
above-best-observed filter on after the query budget runs out, where
``subo`` switches it off.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import BoundIndex, ObservationLedger, active_bounds, coverage_count, record_trajectory
from .dag import ProblemInstance, Trajectory
from .metrics import (
    FcsConfig,
    MetricsRecord,
    fcs,
    exact_tv,
    top_k_average,
    MAX_EXACT_CARDINALITY,
    MAX_EXACT_TERMINALS,
)
from .policy import PolicyGradients, SetPolicy, sample_backward_trajectory, sample_trajectories, tb_loss_batch
from .rewards import BudgetExhausted, RewardOracle
from .validation import as_rng, check_fraction

logger = logging.getLogger(__name__)

VARIANTS = ("classical", "subo", "subo_f")


@dataclass
class TrainConfig:
    variant: str = "subo"
    query_budget: int = 10_000
    batch_size: int = 16
    lr_policy: float = 1e-4
    lr_log_z: float = 1e-2
    epsilon: float = 0.1
    mix_buffer_fraction: float = 0.25
    offline_steps: int = 0
    total_steps: int | None = None
    seed: int = 0
    embedding_dim: int = 128
    hidden_dim: int = 128
    optimizer: str = "sgd"
    log_z_init: float | None = None
    epsilon_reward: float = 1e-6
    clamp_to_max: bool = True
    replay_capacity: int | None = None
    metrics_interval: int = 50
    top_k: int = 100
    compute_fcs: bool = True
    compute_exact_tv: bool = True
    fcs_config: FcsConfig = field(default_factory=FcsConfig)

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        check_fraction(self.epsilon, "epsilon")
        check_fraction(self.mix_buffer_fraction, "mix_buffer_fraction")
        for name in ("batch_size", "metrics_interval", "top_k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        for name in ("lr_policy", "lr_log_z"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.query_budget < 0 or self.offline_steps < 0:
            raise ValueError("query_budget and offline_steps must be non-negative")
        if self.epsilon_reward <= 0:
            raise ValueError("epsilon_reward must be positive to keep log-rewards finite")

    @property
    def uses_bounds(self) -> bool:
        return self.variant in ("subo", "subo_f")

    def filtering_on(self, phase: str) -> bool:
        if phase == "online":
            return True
        return self.variant == "subo_f"


class ReplayBuffer:
    """Bounded FIFO of (trajectory, terminal reward) pairs."""

    def __init__(self, capacity: int | None = None):
        self.items: deque[tuple[Trajectory, float]] = deque(maxlen=capacity)

    def push(self, trajectory: Trajectory, terminal_reward: float) -> None:
        self.items.append((trajectory, terminal_reward))

    def sample(self, rng: np.random.Generator, count: int) -> list[tuple[Trajectory, float]]:
        idx = rng.integers(0, len(self.items), size=count)
        return [self.items[int(i)] for i in idx]

    def __len__(self) -> int:
        return len(self.items)


class _Sgd:
    def __init__(self, lr_policy: float, lr_log_z: float):
        self.lr_policy = lr_policy
        self.lr_log_z = lr_log_z

    def step(self, policy: SetPolicy, grads: PolicyGradients) -> None:
        for name in SetPolicy.ARRAY_NAMES:
            getattr(policy, name)[...] -= self.lr_policy * getattr(grads, name)
        policy.log_z -= self.lr_log_z * grads.log_z


class _Adam:
    def __init__(self, lr_policy: float, lr_log_z: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr_policy = lr_policy
        self.lr_log_z = lr_log_z
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray | float] = {}
        self.v: dict[str, np.ndarray | float] = {}

    def step(self, policy: SetPolicy, grads: PolicyGradients) -> None:
        self.t += 1
        names = SetPolicy.ARRAY_NAMES + ("log_z",)
        for name in names:
            g = getattr(grads, name)
            if name not in self.m:
                self.m[name] = np.zeros_like(g) if isinstance(g, np.ndarray) else 0.0
                self.v[name] = np.zeros_like(g) if isinstance(g, np.ndarray) else 0.0
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * (g * g)
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            lr = self.lr_log_z if name == "log_z" else self.lr_policy
            update = lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if name == "log_z":
                policy.log_z -= float(update)
            else:
                getattr(policy, name)[...] -= update


def _make_optimizer(config: TrainConfig):
    cls = _Adam if config.optimizer == "adam" else _Sgd
    return cls(config.lr_policy, config.lr_log_z)


@dataclass
class TrainedRun:
    """Everything a finished run exposes for evaluation."""

    config: TrainConfig
    policy: SetPolicy
    policy_at_exhaustion: SetPolicy | None
    ledger: ObservationLedger
    index: BoundIndex
    buffer: ReplayBuffer
    records: list[MetricsRecord]
    queries_used: int
    exhausted_at_step: int | None


def _query_trajectory(
    oracle: RewardOracle, trajectory: Trajectory, terminal_only: bool
) -> dict[int, float]:
    """Observe the rewards a variant is allowed to see along a trajectory."""
    prefixes = trajectory.prefixes()
    if terminal_only:
        return {prefixes[-1]: oracle.query(prefixes[-1])}
    return {p: oracle.query(p) for p in prefixes}


def _build_batch(
    config: TrainConfig,
    phase: str,
    buffer: ReplayBuffer,
    ledger: ObservationLedger,
    index: BoundIndex,
    rng: np.random.Generator,
) -> tuple[list[Trajectory], np.ndarray, int]:
    """Assemble one training batch of (trajectory, signal) pairs.

    Returns the trajectories, their signal array, and the number of
    bound-signal entries used (0 on the buffer-only fallback).
    """
    batch = config.batch_size
    if not config.uses_bounds:
        pairs = buffer.sample(rng, batch)
        trajectories = [t for t, _ in pairs]
        signals = np.array([r for _, r in pairs])
        return trajectories, np.maximum(signals, config.epsilon_reward), 0

    entries = active_bounds(index, ledger, config.filtering_on(phase))
    n_buffer = int(round(config.mix_buffer_fraction * batch))
    n_bound = batch - n_buffer
    if not entries or n_bound == 0:
        if not entries:
            logger.debug("no active bounds at this step; buffer-only batch")
        pairs = buffer.sample(rng, batch)
        trajectories = [t for t, _ in pairs]
        signals = np.array([r for _, r in pairs])
        return trajectories, np.maximum(signals, config.epsilon_reward), 0

    trajectories = []
    signals = []
    for traj, reward in buffer.sample(rng, n_buffer):
        trajectories.append(traj)
        signals.append(reward)
    picks = rng.integers(0, len(entries), size=n_bound)
    for i in picks:
        entry = entries[int(i)]
        trajectories.append(sample_backward_trajectory(entry.terminal, rng))
        signals.append(entry.value)
    return trajectories, np.maximum(np.array(signals), config.epsilon_reward), n_bound


def train(
    config: TrainConfig,
    instance: ProblemInstance,
    oracle: RewardOracle,
    reward_eval=None,
) -> TrainedRun:
    """Run the full online/offline loop; deterministic per (config, seed).

    ``reward_eval`` is the unmetered reward handle used by metrics only; it
    defaults to peeking at the oracle's reward function.
    """
    rng = as_rng(config.seed)
    if config.log_z_init is not None:
        log_z_init = config.log_z_init
    else:
        # For rewards normalized into [0, 1] the partition sum lives within
        # a couple of nats of half the terminal count; starting there keeps
        # the early residuals from swamping the policy gradients.
        log_z_init = math.log(
            math.comb(instance.num_elements, instance.cardinality)
        ) - math.log(2.0)
    policy = SetPolicy(
        instance.num_elements,
        embedding_dim=config.embedding_dim,
        hidden_dim=config.hidden_dim,
        rng=rng,
        log_z=log_z_init,
    )
    optimizer = _make_optimizer(config)
    buffer = ReplayBuffer(config.replay_capacity)
    ledger = ObservationLedger()
    clamp = 1.0 if config.clamp_to_max else None
    index = BoundIndex(instance, clamp_max=clamp)
    if reward_eval is None:
        reward_eval = oracle.peek

    tv_feasible = (
        config.compute_exact_tv
        and math.comb(instance.num_elements, instance.cardinality) <= MAX_EXACT_TERMINALS
        and instance.cardinality <= MAX_EXACT_CARDINALITY
    )

    records: list[MetricsRecord] = []
    phase = "online"
    step = 0
    loss_ema: float | None = None
    exhausted_at: int | None = None
    policy_at_exhaustion: SetPolicy | None = None

    def done() -> bool:
        if config.total_steps is not None:
            return step >= config.total_steps
        if phase == "online":
            return False
        return step - (exhausted_at if exhausted_at is not None else 0) >= config.offline_steps

    def emit(force: bool = False) -> None:
        if not force and step % config.metrics_interval != 0:
            return
        if not ledger.observed_terminals:
            return
        if records and records[-1].step == step and records[-1].phase == phase:
            return
        fcs_value = math.nan
        if config.compute_fcs:
            fcs_value = fcs(policy, instance, reward_eval, config.fcs_config, rng)
        tv_value = (
            exact_tv(policy, instance, reward_eval) if tv_feasible else None
        )
        records.append(
            MetricsRecord(
                step=step,
                phase=phase,
                queries_used=oracle.queries_used,
                loss=loss_ema if loss_ema is not None else math.nan,
                fcs=fcs_value,
                exact_tv=tv_value,
                top_k_avg=top_k_average(ledger, config.top_k),
                num_bounds=index.total_derived,
                coverage=coverage_count(index),
            )
        )

    while not done():
        transition = False
        if phase == "online":
            sampled = sample_trajectories(policy, instance, config.epsilon, rng, config.batch_size)
            kept: list[tuple[Trajectory, dict[int, float]]] = []
            for traj in sampled:
                try:
                    kept.append(
                        (traj, _query_trajectory(oracle, traj, not config.uses_bounds))
                    )
                except BudgetExhausted:
                    transition = True
                    break
            for traj, rewards in kept:
                terminal = traj.terminal
                buffer.push(traj, rewards[terminal])
                if config.uses_bounds:
                    record_trajectory(ledger, index, traj, rewards)
                else:
                    ledger.record(terminal, rewards[terminal], terminal=True)
        if len(buffer) > 0:
            trajectories, signals, _ = _build_batch(config, phase, buffer, ledger, index, rng)
            loss, grads = tb_loss_batch(policy, trajectories, signals)
            optimizer.step(policy, grads)
            loss_ema = loss if loss_ema is None else 0.9 * loss_ema + 0.1 * loss
            step += 1
            emit()
        elif phase == "offline":
            logger.warning("offline phase with an empty replay buffer; stopping early")
            break
        if transition:
            exhausted_at = step
            policy_at_exhaustion = policy.copy()
            phase = "offline"
            emit(force=True)
        if phase == "online" and oracle.remaining <= 0:
            # The budget landed exactly on a batch boundary; switch without
            # waiting for the next query to fail.
            exhausted_at = step
            policy_at_exhaustion = policy.copy()
            phase = "offline"
            emit(force=True)

    if not records or records[-1].step != step:
        emit(force=True)
    return TrainedRun(
        config=replace(config),
        policy=policy,
        policy_at_exhaustion=policy_at_exhaustion,
        ledger=ledger,
        index=index,
        buffer=buffer,
        records=records,
        queries_used=oracle.queries_used,
        exhausted_at_step=exhausted_at,
    )
