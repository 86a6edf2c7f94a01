"""Forward policy over element additions, with exact gradients.

The policy embeds each element, mean-pools the embeddings of the current
state (zero vector for the empty state), runs a two-layer tanh perceptron
to one logit per element, masks the elements already present, and
normalizes.  Pooling makes it permutation-invariant in the state, which is
all the set-construction DAG requires.

The backward policy is fixed: uniform removal of one element, so the
backward log-probability of a length-C trajectory is -log(C!).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bitset
from .dag import ProblemInstance, Trajectory
from .validation import as_rng, as_state


class SetPolicy:
    """Learnable state -> action distribution plus the log-partition scalar."""

    def __init__(
        self,
        num_elements: int,
        embedding_dim: int = 128,
        hidden_dim: int = 128,
        rng: int | np.random.Generator | None = None,
        log_z: float = 0.0,
    ):
        rng = as_rng(rng)
        self.num_elements = num_elements
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        scale = 1.0 / math.sqrt(embedding_dim)
        self.embeddings = rng.normal(0.0, scale, size=(num_elements, embedding_dim))
        self.w1 = rng.normal(0.0, scale, size=(embedding_dim, hidden_dim))
        self.b1 = np.zeros(hidden_dim)
        # Zero output layer => exactly uniform policy at initialization.
        self.w2 = np.zeros((hidden_dim, num_elements))
        self.b2 = np.zeros(num_elements)
        self.log_z = float(log_z)

    ARRAY_NAMES = ("embeddings", "w1", "b1", "w2", "b2")

    def copy(self) -> "SetPolicy":
        out = SetPolicy.__new__(SetPolicy)
        out.num_elements = self.num_elements
        out.embedding_dim = self.embedding_dim
        out.hidden_dim = self.hidden_dim
        for name in self.ARRAY_NAMES:
            setattr(out, name, getattr(self, name).copy())
        out.log_z = self.log_z
        return out

    def _pool(self, member_rows: np.ndarray) -> np.ndarray:
        """Mean member embedding per row; zero vector for empty states."""
        member_rows = np.asarray(member_rows, dtype=np.int64)
        if member_rows.ndim != 2:
            raise ValueError("member_rows must be 2-dimensional")
        if member_rows.shape[1] == 0:
            return np.zeros((member_rows.shape[0], self.embedding_dim))
        return self.embeddings[member_rows].mean(axis=1)

    def _forward(self, member_rows: np.ndarray):
        pooled = self._pool(member_rows)
        h = np.tanh(pooled @ self.w1 + self.b1)
        logits = h @ self.w2 + self.b2
        return pooled, h, logits

    def distribution_from_members(self, member_rows: np.ndarray) -> np.ndarray:
        """(B, N) action probabilities for equal-size states given as member
        index rows; members get probability exactly zero."""
        member_rows = np.asarray(member_rows, dtype=np.int64)
        _, _, logits = self._forward(member_rows)
        return _masked_softmax(logits, member_rows)

    def distribution(self, state: int) -> np.ndarray:
        members = np.array([bitset.members_of(state)], dtype=np.int64).reshape(1, -1)
        return self.distribution_from_members(members)[0]

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            num_elements=self.num_elements,
            embedding_dim=self.embedding_dim,
            hidden_dim=self.hidden_dim,
            log_z=self.log_z,
            **{name: getattr(self, name) for name in self.ARRAY_NAMES},
        )

    @classmethod
    def load(cls, path: str | Path) -> "SetPolicy":
        with np.load(path) as data:
            out = cls.__new__(cls)
            out.num_elements = int(data["num_elements"])
            out.embedding_dim = int(data["embedding_dim"])
            out.hidden_dim = int(data["hidden_dim"])
            out.log_z = float(data["log_z"])
            for name in cls.ARRAY_NAMES:
                setattr(out, name, data[name])
        return out


def _masked_softmax(logits: np.ndarray, member_rows: np.ndarray) -> np.ndarray:
    masked = logits.copy()
    rows = np.arange(logits.shape[0])[:, None]
    if member_rows.shape[1] > 0:
        masked[rows, member_rows] = -np.inf
    masked -= masked.max(axis=1, keepdims=True)
    np.exp(masked, out=masked)
    masked /= masked.sum(axis=1, keepdims=True)
    return masked


def forward_policy(policy: SetPolicy, instance: ProblemInstance, state: int) -> np.ndarray:
    """Action distribution at a non-terminating state (zeros on members)."""
    mask = as_state(state, instance.num_elements)
    if bitset.size(mask) >= instance.cardinality:
        raise ValueError("cannot evaluate the forward policy at a terminating state")
    return policy.distribution(mask)


def backward_policy_logprob(state_from: int, state_to: int) -> float:
    """Log-probability of the uniform-removal backward step from -> to."""
    removed = state_from & ~state_to
    if not bitset.is_subset(state_to, state_from) or removed.bit_count() != 1:
        raise ValueError("states do not differ by exactly one removed element")
    return -math.log(bitset.size(state_from))


def sample_trajectories(
    policy: SetPolicy,
    instance: ProblemInstance,
    epsilon: float,
    rng: int | np.random.Generator,
    count: int,
) -> list[Trajectory]:
    """Sample trajectories from the epsilon-mixed forward policy.

    Each step draws from (1-eps) * policy + eps * uniform over the
    available actions; eps=1 is the exact uniform-trajectory regime.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    rng = as_rng(rng)
    n, c = instance.num_elements, instance.cardinality
    additions = np.zeros((count, c), dtype=np.int64)
    for t in range(c):
        probs = policy.distribution_from_members(additions[:, :t])
        if epsilon > 0.0:
            uniform = np.where(probs > 0.0, 1.0 / (n - t), 0.0)
            probs = (1.0 - epsilon) * probs + epsilon * uniform
            probs /= probs.sum(axis=1, keepdims=True)
        additions[:, t] = _sample_rows(probs, rng)
    return [Trajectory(tuple(int(e) for e in row)) for row in additions]


def sample_trajectory(
    policy: SetPolicy,
    instance: ProblemInstance,
    epsilon: float,
    rng: int | np.random.Generator,
) -> Trajectory:
    return sample_trajectories(policy, instance, epsilon, rng, 1)[0]


def sample_backward_trajectory(
    terminal: int, rng: int | np.random.Generator
) -> Trajectory:
    """Remove elements uniformly at random until empty and reverse: a
    uniformly random ordering of the terminal's members."""
    rng = as_rng(rng)
    members = np.array(bitset.members_of(terminal), dtype=np.int64)
    order = rng.permutation(members.shape[0])
    return Trajectory(tuple(int(e) for e in members[order][::-1]))


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row via inverse CDF."""
    draws = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    idx = (cdf < draws[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


@dataclass
class PolicyGradients:
    """Gradients matching the policy's parameter arrays."""

    embeddings: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    log_z: float


def tb_loss_batch(
    policy: SetPolicy,
    trajectories: list[Trajectory],
    signals: np.ndarray,
) -> tuple[float, PolicyGradients]:
    """Squared trajectory-balance residual, averaged over the batch, with
    exact analytic gradients.

    The residual of a trajectory ending in x with training signal r is

        log Z + sum_t log P_F(a_t | s_t) - log r + log(C!)

    where the last term is the uniform backward policy's contribution.
    The signal is the true terminal reward for observed terminals or an
    upper bound for bound-covered ones; it must be positive.
    """
    batch = len(trajectories)
    if batch == 0:
        raise ValueError("empty trajectory batch")
    signals = np.asarray(signals, dtype=np.float64)
    if np.any(signals <= 0.0):
        raise ValueError("training signals must be positive (apply the reward floor)")
    c = len(trajectories[0].additions)
    if any(len(t.additions) != c for t in trajectories):
        raise ValueError("all trajectories in a batch must have equal length")

    additions = np.array([t.additions for t in trajectories], dtype=np.int64)
    caches = []
    logp_sum = np.zeros(batch)
    for t in range(c):
        member_rows = additions[:, :t]
        pooled, h, logits = policy._forward(member_rows)
        probs = _masked_softmax(logits, member_rows)
        actions = additions[:, t]
        rows = np.arange(batch)
        logp_sum += np.log(probs[rows, actions])
        caches.append((member_rows, pooled, h, probs, actions))

    residual = policy.log_z + logp_sum - np.log(signals) + math.lgamma(c + 1)
    loss = float(np.mean(residual**2))
    coef = 2.0 * residual / batch

    grads = PolicyGradients(
        embeddings=np.zeros_like(policy.embeddings),
        w1=np.zeros_like(policy.w1),
        b1=np.zeros_like(policy.b1),
        w2=np.zeros_like(policy.w2),
        b2=np.zeros_like(policy.b2),
        log_z=float(np.sum(coef)),
    )
    rows = np.arange(batch)
    for member_rows, pooled, h, probs, actions in caches:
        dlogits = -probs * coef[:, None]
        dlogits[rows, actions] += coef
        grads.w2 += h.T @ dlogits
        grads.b2 += dlogits.sum(axis=0)
        dh = dlogits @ policy.w2.T
        dpre = dh * (1.0 - h * h)
        grads.w1 += pooled.T @ dpre
        grads.b1 += dpre.sum(axis=0)
        t = member_rows.shape[1]
        if t > 0:
            dpooled = dpre @ policy.w1.T / t
            np.add.at(
                grads.embeddings,
                member_rows.ravel(),
                np.repeat(dpooled, t, axis=0),
            )
    return loss, grads


def tb_loss(
    policy: SetPolicy, trajectory: Trajectory, terminal_signal: float
) -> tuple[float, PolicyGradients]:
    """Single-trajectory trajectory-balance loss and gradients."""
    return tb_loss_batch(policy, [trajectory], np.array([terminal_signal]))
