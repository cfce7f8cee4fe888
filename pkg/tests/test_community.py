"""
Tests for community detection and the NMI benchmark harness.
"""
import networkx as nx
import numpy as np
import pandas as pd
import pytest

from src.community import (
    config_digest,
    fast_unfolding,
    label_propagation,
    modularity,
    run_benchmark,
    score_external,
)
from src.ctc_generator import CtcGraph, ModelConfig, generate
from src.empirical import nmi
from src.errors import ConfigError, DetectionError
from src.io_formats import write_communities


def ring_of_cliques(count: int = 8, size: int = 4):
    """``count`` cliques K_size joined in a ring by single bridge edges."""
    G = nx.Graph()
    for c in range(count):
        members = range(c * size, (c + 1) * size)
        G.add_edges_from((u, v) for u in members for v in members if u < v)
        G.add_edge((c + 1) * size - 1, ((c + 1) % count) * size)
    truth = np.repeat(np.arange(count), size)
    return G, truth


@pytest.fixture
def bench_config():
    return ModelConfig(c=2, n_i=(40, 40), b=2, q=0.1, r=0.8, a=0.1, gamma=2.5, kmin=3, kmax=12, seed=21)


@pytest.mark.unit
class TestFastUnfolding:
    """Louvain modularity optimization"""

    def test_two_cliques(self, two_cliques):
        G, truth = two_cliques
        result = fast_unfolding(G, seed=0)
        assert nmi(truth, result.labels) == pytest.approx(1.0)

    def test_edgeless_singletons(self):
        result = fast_unfolding(CtcGraph.from_edges(5, []), seed=0)
        assert result.labels.tolist() == [0, 1, 2, 3, 4]

    def test_ring_of_cliques(self):
        G, truth = ring_of_cliques()
        result = fast_unfolding(G, seed=3)
        assert nmi(truth, result.labels) == pytest.approx(1.0)
        assert modularity(G, result.labels) >= modularity(G, truth) - 1e-12

    def test_modularity_trace_monotone(self, two_community_config):
        result = fast_unfolding(generate(two_community_config), seed=1)
        trace = result.modularity_trace
        assert all(after >= before - 1e-12 for before, after in zip(trace, trace[1:]))

    def test_covers_every_vertex(self, two_community_config):
        graph = generate(two_community_config)
        labels = fast_unfolding(graph, seed=2).labels
        assert labels.shape == (graph.n,)
        assert labels.min() >= 0

    def test_same_seed_same_partition(self, two_community_config):
        graph = generate(two_community_config)
        first = fast_unfolding(graph, seed=5).labels
        second = fast_unfolding(graph, seed=5).labels
        np.testing.assert_array_equal(first, second)

    def test_empty_graph_rejected(self):
        with pytest.raises(DetectionError):
            fast_unfolding(nx.Graph())


@pytest.mark.unit
class TestLabelPropagation:
    """Asynchronous label propagation baseline"""

    def test_two_cliques(self, two_cliques):
        G, truth = two_cliques
        labels = label_propagation(G, seed=0).labels
        assert len(np.unique(labels)) == 2
        assert nmi(truth, labels) == pytest.approx(1.0)

    def test_complete_graph(self):
        labels = label_propagation(nx.complete_graph(6), seed=1).labels
        assert len(np.unique(labels)) == 1

    def test_isolated_vertices_keep_labels(self):
        labels = label_propagation(CtcGraph.from_edges(3, []), seed=0).labels
        assert labels.tolist() == [0, 1, 2]

    def test_ties_broken_both_ways(self):
        """Vertex 8 has one neighbour in each K4; seeds must send it to either side"""
        G = nx.disjoint_union(nx.complete_graph(4), nx.complete_graph(4))
        G.add_edges_from([(8, 0), (8, 4)])
        sides = set()
        for seed in range(40):
            labels = label_propagation(G, seed=seed).labels
            if labels[8] == labels[0] != labels[4]:
                sides.add("left")
            elif labels[8] == labels[4] != labels[0]:
                sides.add("right")
        assert sides == {"left", "right"}

    def test_seeded_runs_repeat(self, two_cliques):
        G, _ = two_cliques
        first = label_propagation(G, seed=9).labels
        np.testing.assert_array_equal(label_propagation(G, seed=9).labels, first)

    def test_labels_canonical(self, two_cliques):
        G, _ = two_cliques
        labels = label_propagation(G, seed=4).labels
        assert labels[0] == 0


@pytest.mark.unit
class TestModularity:
    def test_two_cliques(self, two_cliques):
        G, truth = two_cliques
        assert modularity(G, truth) == pytest.approx(0.5)

    def test_no_edges(self):
        assert modularity(CtcGraph.from_edges(3, []), [0, 1, 2]) == 0.0


@pytest.mark.unit
class TestExternalPartitions:
    """Scoring partitions computed by other tools"""

    def test_score_file(self, tmp_path):
        truth = [0, 0, 1, 1]
        path = tmp_path / "rep_0.tsv"
        write_communities(path, ["x", "x", "y", "y"])
        assert score_external(truth, path) == pytest.approx(1.0)

    def test_vertex_mismatch(self, tmp_path):
        path = tmp_path / "rep_0.tsv"
        write_communities(path, [0, 1])
        with pytest.raises(DetectionError):
            score_external([0, 0, 1], path)


@pytest.mark.integration
class TestRunBenchmark:
    """NMI tables over a parameter grid"""

    def test_table_shape(self, bench_config):
        report = run_benchmark(bench_config, "r", [0.5, 0.9], reps=2, detector="fast_unfolding")
        assert len(report.replicas) == 4
        assert len(report.summary) == 2
        assert report.replicas.groupby("value").size().tolist() == [2, 2]
        assert report.replicas["nmi"].between(0.0, 1.0).all()
        assert list(report.summary.columns[:4]) == ["param", "value", "mean_nmi", "stderr"]
        assert report.stderr_defined

    def test_deterministic(self, bench_config):
        first = run_benchmark(bench_config, "r", [0.5, 0.9], reps=2, detector="label_propagation")
        second = run_benchmark(bench_config, "r", [0.5, 0.9], reps=2, detector="label_propagation")
        pd.testing.assert_frame_equal(first.replicas, second.replicas)
        assert first.config_digest == second.config_digest == config_digest(bench_config)

    def test_single_replica_flags_stderr(self, bench_config):
        report = run_benchmark(bench_config, "q", [0.1], reps=1)
        assert len(report.replicas) == 1
        assert not report.stderr_defined
        assert np.isnan(report.summary["stderr"].iloc[0])

    def test_integer_parameter(self, bench_config):
        report = run_benchmark(bench_config, "b", [1, 3], reps=1)
        assert report.summary["value"].tolist() == [1.0, 3.0]

    def test_external_detector(self, bench_config, tmp_path):
        for rep in range(2):
            graph = generate(bench_config.with_updates(r=0.5, seed=bench_config.seed + rep))
            write_communities(tmp_path / f"rep_{rep}.tsv", graph.community)
        report = run_benchmark(bench_config, "r", [0.5], reps=2, detector="external", partition_dir=str(tmp_path))
        assert report.replicas["nmi"].tolist() == pytest.approx([1.0, 1.0])

    def test_external_per_cell_directory(self, bench_config, tmp_path):
        cell = tmp_path / "r_0.5"
        cell.mkdir()
        graph = generate(bench_config.with_updates(r=0.5))
        write_communities(cell / "rep_0.tsv", graph.community)
        report = run_benchmark(bench_config, "r", [0.5], reps=1, detector="external", partition_dir=str(tmp_path))
        assert report.replicas["nmi"].iloc[0] == pytest.approx(1.0)

    def test_external_needs_directory(self, bench_config):
        with pytest.raises(DetectionError):
            run_benchmark(bench_config, "r", [0.5], reps=1, detector="external")

    def test_unknown_detector(self, bench_config):
        with pytest.raises(DetectionError, match="fast_unfolding"):
            run_benchmark(bench_config, "r", [0.5], reps=1, detector="walktrap")

    def test_invalid_requests(self, bench_config):
        with pytest.raises(ConfigError):
            run_benchmark(bench_config, "h", [1], reps=1)
        with pytest.raises(ConfigError):
            run_benchmark(bench_config, "r", [0.5], reps=0)
        with pytest.raises(ConfigError):
            run_benchmark(bench_config, "r", [], reps=1)

    def test_parallel_matches_serial(self, bench_config):
        serial = run_benchmark(bench_config, "r", [0.3, 0.7], reps=2, workers=1)
        parallel = run_benchmark(bench_config, "r", [0.3, 0.7], reps=2, workers=2)
        pd.testing.assert_frame_equal(serial.replicas, parallel.replicas)


@pytest.mark.slow
class TestBenchmarkTrend:
    """Full-size r sweep: q=0.1, a=0.1, b=2, ten communities of 1000, 30 replicas"""

    def test_nmi_rises_with_r(self):
        base = ModelConfig(
            c=10, n_i=(1000,) * 10, b=2, q=0.1, r=0.5, a=0.1, gamma=2.5, kmin=5, kmax=50, seed=11
        )
        grid = [round(0.1 * i, 1) for i in range(1, 10)]
        report = run_benchmark(base, "r", grid, reps=30, detector="fast_unfolding", workers=4)
        assert len(report.summary) == 9
        assert report.spearman > 0
        means = report.summary.set_index("value")["mean_nmi"]
        assert means.loc[0.9] - means.loc[0.1] >= 0.1

    def test_label_propagation_trend(self):
        base = ModelConfig(
            c=10, n_i=(1000,) * 10, b=2, q=0.1, r=0.5, a=0.1, gamma=2.5, kmin=5, kmax=50, seed=12
        )
        report = run_benchmark(base, "r", [0.1, 0.9], reps=30, detector="label_propagation", workers=4)
        means = report.summary.set_index("value")["mean_nmi"]
        assert means.loc[0.9] >= means.loc[0.1]
