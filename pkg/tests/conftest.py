import numpy as np
import pytest

from flowbound.graphs import CoverageGraph


@pytest.fixture
def path_graph_4() -> CoverageGraph:
    """The path 0-1-2-3."""
    return CoverageGraph(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)
