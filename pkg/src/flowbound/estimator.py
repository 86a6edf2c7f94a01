"""Scikit-learn style estimator facade over the training loop.

Lets the sampler participate in the wider ecosystem: ``get_params`` /
``set_params`` / ``clone`` work, ``fit`` takes a graph (or adjacency
matrix) and runs the configured training variant, and the fitted object
samples vertex sets or scores candidate sets.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import bitset
from .dag import ProblemInstance
from .graphs import CoverageGraph
from .metrics import FcsConfig, fcs, terminal_probabilities
from .policy import sample_trajectories
from .rewards import CoverageReward, RewardOracle
from .training import TrainConfig, train
from .validation import as_rng, check_adjacency


class GFlowNetSetSampler(BaseEstimator):
    """Samples cardinality-C vertex sets proportionally to coverage reward.

    Parameters mirror :class:`flowbound.training.TrainConfig`; ``fit``
    builds the reward oracle from the given graph and trains the policy.
    """

    def __init__(
        self,
        cardinality: int = 5,
        variant: str = "subo",
        query_budget: int = 10_000,
        batch_size: int = 16,
        lr_policy: float = 1e-4,
        lr_log_z: float = 1e-2,
        epsilon: float = 0.1,
        mix_buffer_fraction: float = 0.25,
        offline_steps: int = 0,
        total_steps: int | None = None,
        embedding_dim: int = 128,
        hidden_dim: int = 128,
        optimizer: str = "sgd",
        epsilon_reward: float = 1e-6,
        metrics_interval: int = 50,
        top_k: int = 100,
        closed_neighborhood: bool = False,
        random_state: int = 0,
    ):
        self.cardinality = cardinality
        self.variant = variant
        self.query_budget = query_budget
        self.batch_size = batch_size
        self.lr_policy = lr_policy
        self.lr_log_z = lr_log_z
        self.epsilon = epsilon
        self.mix_buffer_fraction = mix_buffer_fraction
        self.offline_steps = offline_steps
        self.total_steps = total_steps
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.optimizer = optimizer
        self.epsilon_reward = epsilon_reward
        self.metrics_interval = metrics_interval
        self.top_k = top_k
        self.closed_neighborhood = closed_neighborhood
        self.random_state = random_state

    def _as_graph(self, x) -> CoverageGraph:
        if isinstance(x, CoverageGraph):
            return x
        adj = check_adjacency(x)
        iu, iv = np.nonzero(np.triu(adj, k=1))
        return CoverageGraph(adj.shape[0], zip(iu.tolist(), iv.tolist()))

    def fit(self, X, y=None) -> "GFlowNetSetSampler":
        """Train on a graph (CoverageGraph or 0/1 adjacency matrix)."""
        graph = self._as_graph(X)
        self.graph_ = graph
        self.instance_ = ProblemInstance(graph.num_vertices, self.cardinality)
        self.reward_ = CoverageReward(graph, self.closed_neighborhood)
        config = TrainConfig(
            variant=self.variant,
            query_budget=self.query_budget,
            batch_size=self.batch_size,
            lr_policy=self.lr_policy,
            lr_log_z=self.lr_log_z,
            epsilon=self.epsilon,
            mix_buffer_fraction=self.mix_buffer_fraction,
            offline_steps=self.offline_steps,
            total_steps=self.total_steps,
            seed=self.random_state,
            embedding_dim=self.embedding_dim,
            hidden_dim=self.hidden_dim,
            optimizer=self.optimizer,
            epsilon_reward=self.epsilon_reward,
            metrics_interval=self.metrics_interval,
            top_k=self.top_k,
        )
        oracle = RewardOracle(self.reward_, self.query_budget)
        run = train(config, self.instance_, oracle)
        self.run_ = run
        self.policy_ = run.policy
        self.history_ = run.records
        self.queries_used_ = run.queries_used
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "policy_"):
            raise NotFittedError("this sampler has not been fitted yet")

    def sample(self, n_samples: int = 1, random_state=None) -> np.ndarray:
        """Draw vertex sets from the learned policy; (n_samples, C) indices."""
        self._check_fitted()
        rng = as_rng(self.random_state if random_state is None else random_state)
        trajectories = sample_trajectories(
            self.policy_, self.instance_, 0.0, rng, n_samples
        )
        return np.array([sorted(t.additions) for t in trajectories])

    def predict_proba(self, X) -> np.ndarray:
        """Exact learned probability of each given vertex set (rows of C
        vertex indices)."""
        self._check_fitted()
        terminals = [bitset.mask_of(int(v) for v in row) for row in np.asarray(X)]
        return terminal_probabilities(self.policy_, self.instance_, terminals)

    def score(self, X=None, y=None) -> float:
        """Negated distribution-matching proxy (higher is better)."""
        self._check_fitted()
        value = fcs(
            self.policy_,
            self.instance_,
            self.reward_,
            FcsConfig(),
            as_rng(self.random_state),
        )
        return -value
