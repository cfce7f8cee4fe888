"""Shared fixtures: the reference pmf, small hand-built graphs, small model configs."""
from fractions import Fraction

import networkx as nx
import pytest

from src.ctc_generator import CtcGraph, ModelConfig
from src.degree_model import DegreeDistribution, DegreeSequence, partition_distribution, partition_into_blocks


@pytest.fixture
def reference_pmf():
    """p_2 = 2/3, p_4 = 1/3: E[Z] = 8/3, E[Z^2] = 8, E[Z^3] = 80/3."""
    return DegreeDistribution.from_mapping({2: float(Fraction(2, 3)), 4: float(Fraction(1, 3))})


@pytest.fixture
def reference_partition(reference_pmf):
    return partition_distribution(reference_pmf, 2, strict=True)


@pytest.fixture
def reference_sequence():
    return DegreeSequence.from_lists([[2, 2, 4]], repair=False)


@pytest.fixture
def reference_sequence_partition(reference_sequence):
    return partition_into_blocks(reference_sequence, 2, strict=True)


@pytest.fixture
def path_graph():
    """Path 0-1-2, regular edges only."""
    return CtcGraph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def triangle_graph():
    return CtcGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def star_graph():
    """K_{1,3} centred on vertex 0."""
    return CtcGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)])


@pytest.fixture
def two_cliques():
    """Two disjoint K5 with ground truth labels."""
    graph = nx.disjoint_union(nx.complete_graph(5), nx.complete_graph(5))
    truth = [0] * 5 + [1] * 5
    return graph, truth


@pytest.fixture
def small_config():
    return ModelConfig(
        c=1, n_i=(200,), b=2, q=0.5, r=1.0, a=0.2, gamma=2.5, kmin=2, kmax=20, seed=12345
    )


@pytest.fixture
def two_community_config():
    return ModelConfig(
        c=2, n_i=(60, 60), b=2, q=0.3, r=0.7, a=0.1, gamma=2.5, kmin=3, kmax=15, seed=99
    )
