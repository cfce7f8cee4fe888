"""
Tests for measurements on generated graphs.
"""
import numpy as np
import powerlaw
import pytest

from src.ctc_generator import CtcGraph, ModelConfig, generate
from src.degree_model import sample_from_distribution, truncated_power_law
from src.empirical import (
    degree_pearson_regular,
    empirical_edge_covariance,
    empirical_local_clustering,
    fit_power_law,
    measure,
    mixing_parameter,
    nmi,
    transitive_endpoint_mean,
)
from src.errors import MeasurementError


def relabel(graph: CtcGraph, perm: np.ndarray) -> CtcGraph:
    """Copy of ``graph`` with vertex v renamed perm[v]."""
    community = np.empty_like(graph.community)
    community[perm] = graph.community
    return CtcGraph(
        n=graph.n,
        community=community,
        regular_edges=perm[graph.regular_edges],
        transitive_edges=perm[graph.transitive_edges],
    )


@pytest.mark.unit
class TestEdgeCovariance:
    """Endpoint degree covariance over Regular edges"""

    def test_path(self, path_graph):
        """Orientations (1,2),(2,1),(2,1),(1,2) give -0.25"""
        result = empirical_edge_covariance(path_graph)
        assert result.covariance == pytest.approx(-0.25)
        assert result.correlation == pytest.approx(-1.0)
        assert result.variance == pytest.approx(0.25)

    def test_regular_graph_undefined(self):
        cycle = CtcGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
        with pytest.raises(MeasurementError, match="undefined"):
            empirical_edge_covariance(cycle)
        result = empirical_edge_covariance(cycle, allow_undefined=True)
        assert result.covariance == 0.0
        assert np.isnan(result.correlation)

    def test_no_regular_edges(self):
        with pytest.raises(MeasurementError):
            empirical_edge_covariance(CtcGraph.from_edges(3, []))

    def test_transitive_edges_raise_total_degree(self, path_graph):
        """Closing the path makes a triangle; every end then has degree 2"""
        closed = path_graph.with_transitive([(0, 2)])
        result = empirical_edge_covariance(closed, allow_undefined=True)
        assert result.covariance == 0.0
        assert degree_pearson_regular(closed).covariance == pytest.approx(-0.25)

    def test_repeats_and_loops_counted(self):
        """Stub degrees 2, 3, 3 over rows (0,1),(0,1),(1,2),(2,2)

        Orientations: four (2,3)/(3,2) ends and four (3,3) ends, mean 2.75.
        """
        doubled = CtcGraph.from_edges(3, [(0, 1), (0, 1), (1, 2), (2, 2)])
        result = empirical_edge_covariance(doubled)
        assert result.covariance == pytest.approx(-0.0625)
        assert result.variance == pytest.approx(0.1875)
        assert result.correlation == pytest.approx(-1 / 3)

    def test_stub_degrees_not_simple_degrees(self):
        """A doubled edge keeps both stubs at each end"""
        graph = CtcGraph.from_edges(4, [(0, 1), (0, 1), (2, 3)])
        # ends: (2,2) four times, (1,1) twice
        result = degree_pearson_regular(graph)
        assert result.covariance == pytest.approx(2 / 9)
        assert result.correlation == pytest.approx(1.0)

    def test_relabeling_invariance(self, small_config):
        graph = generate(small_config)
        perm = np.random.default_rng(0).permutation(graph.n)
        original = empirical_edge_covariance(graph)
        renamed = empirical_edge_covariance(relabel(graph, perm))
        assert renamed.covariance == pytest.approx(original.covariance, rel=1e-9, abs=1e-12)
        assert renamed.correlation == pytest.approx(original.correlation, rel=1e-9, abs=1e-12)

    def test_correlation_bounded(self, two_community_config):
        result = empirical_edge_covariance(generate(two_community_config))
        assert -1.0 <= result.correlation <= 1.0
        assert result.stderr >= 0

    def test_transitive_endpoint_mean(self, path_graph):
        closed = path_graph.with_transitive([(0, 2)])
        # ends of regular edges (0,1) and (1,2): X' = 1, 0, 0, 1
        assert transitive_endpoint_mean(closed) == pytest.approx(0.5)


@pytest.mark.unit
class TestLocalClustering:
    """Per-vertex clustering on the simple projection"""

    def test_triangle(self, triangle_graph):
        result = empirical_local_clustering(triangle_graph)
        np.testing.assert_allclose(result.per_vertex, [1.0, 1.0, 1.0])
        assert result.mean == 1.0

    def test_path_center(self, path_graph):
        result = empirical_local_clustering(path_graph)
        assert result.per_vertex[1] == 0.0
        assert result.mean == 0.0

    def test_grouped_by_degrees(self, star_graph):
        closed = star_graph.with_transitive([(1, 2)])
        result = empirical_local_clustering(closed, a=0.5)
        assert list(result.grouped.columns) == ["k", "kprime", "count", "mean", "predicted"]
        row = result.grouped.set_index(["k", "kprime"]).loc[(1, 1)]
        assert row["count"] == 2
        assert row["mean"] == pytest.approx(1.0)
        centre = result.grouped.set_index(["k", "kprime"]).loc[(3, 0)]
        assert centre["mean"] == pytest.approx(1 / 3)

    def test_tree_without_closure(self):
        config = ModelConfig(n_i=(200,), b=1, q=0.0, r=1.0, a=0.0, gamma=2.5, kmin=1, kmax=2, seed=3)
        graph = generate(config)
        assert np.all(graph.transitive_degree == 0)
        star = CtcGraph.from_edges(5, [(0, 1), (0, 2), (0, 3), (3, 4)])
        assert empirical_local_clustering(star).mean == 0.0


@pytest.mark.unit
class TestMixingParameter:
    """Fraction of edges between communities"""

    def test_hand_count(self):
        """3 inter-community edges out of 10"""
        path = CtcGraph.from_edges(11, [(i, i + 1) for i in range(10)])
        labels = [0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 2]
        result = mixing_parameter(path, labels)
        assert result.mu == pytest.approx(0.3)
        assert set(result.per_community) == {0, 1, 2}
        assert result.per_community[2] == 1.0

    def test_all_external(self):
        graph = CtcGraph.from_edges(4, [(0, 1), (2, 3)], community=[0, 1, 0, 1])
        assert mixing_parameter(graph).mu == 1.0

    def test_r_one_gives_zero(self):
        config = ModelConfig(c=3, n_i=(60, 60, 60), b=2, q=0.0, r=1.0, a=0.2, gamma=2.5, kmin=2, kmax=15, seed=4)
        result = mixing_parameter(generate(config))
        assert result.mu == 0.0
        assert all(value == 0.0 for value in result.per_community.values())

    def test_in_unit_interval(self, two_community_config):
        assert 0.0 <= mixing_parameter(generate(two_community_config)).mu <= 1.0

    def test_label_mismatch(self, path_graph):
        with pytest.raises(MeasurementError):
            mixing_parameter(path_graph, [0, 1])


@pytest.mark.unit
class TestFitPowerLaw:
    """Discrete maximum-likelihood exponent"""

    def test_synthetic_gamma_two(self):
        seq = sample_from_distribution(truncated_power_law(2.0, 1, 100), [10000], seed=77)
        fit = fit_power_law(seq.degrees)
        assert abs(fit.gamma - 2.0) <= 0.1
        assert fit.kmin == 1
        assert not fit.low_confidence
        assert 0 < fit.sigma < 0.1

    def test_agrees_with_powerlaw_package(self):
        """Light tail, so truncating at the largest observed degree costs almost nothing"""
        seq = sample_from_distribution(truncated_power_law(3.0, 1, 10000), [10000], seed=5)
        ours = fit_power_law(seq.degrees, kmin=1)
        reference = powerlaw.Fit(seq.degrees, xmin=1, discrete=True, estimate_discrete=False)
        assert ours.gamma == pytest.approx(reference.power_law.alpha, abs=0.01)

    def test_all_equal(self):
        with pytest.raises(MeasurementError, match="no slope"):
            fit_power_law([5] * 200)

    def test_two_points_low_confidence(self):
        fit = fit_power_law([1, 2])
        assert np.isfinite(fit.gamma)
        assert fit.low_confidence

    def test_kmin_filter(self):
        fit = fit_power_law([1, 1, 1, 3, 4, 5, 6], kmin=3)
        assert fit.kmin == 3
        assert fit.n == 4

    def test_no_positive_degrees(self):
        with pytest.raises(MeasurementError):
            fit_power_law([0, 0])


@pytest.mark.unit
class TestNmi:
    """Normalized mutual information with the arithmetic denominator"""

    def test_identical(self):
        labels = [0, 0, 1, 1, 2, 2]
        assert nmi(labels, labels) == pytest.approx(1.0)

    def test_trivial_side(self):
        assert nmi([0, 0, 0, 0], [0, 1, 0, 1]) == 0.0
        assert nmi([0, 1, 0, 1], [5, 5, 5, 5]) == 0.0

    def test_both_trivial(self):
        assert nmi([1, 1, 1], ["a", "a", "a"]) == 1.0

    def test_relabeling(self):
        """Contingency {(a,x):2, (b,y):2} scores 1"""
        assert nmi(["a", "a", "b", "b"], ["x", "x", "y", "y"]) == pytest.approx(1.0)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        p1, p2 = rng.integers(0, 3, 50), rng.integers(0, 4, 50)
        assert nmi(p1, p2) == pytest.approx(nmi(p2, p1))
        assert 0.0 <= nmi(p1, p2) <= 1.0

    def test_permutation_invariant(self):
        p1 = np.array([0, 0, 1, 1, 2, 2, 2])
        p2 = np.array([0, 1, 1, 1, 2, 0, 2])
        assert nmi(p1, p2) == pytest.approx(nmi((p1 + 1) % 3, p2))

    def test_mappings(self):
        assert nmi({0: "a", 1: "b"}, {1: 7, 0: 3}) == pytest.approx(1.0)

    def test_mismatched_vertex_sets(self):
        with pytest.raises(MeasurementError):
            nmi({0: 1, 1: 2}, {0: 1, 2: 2})
        with pytest.raises(MeasurementError):
            nmi([0, 1, 1], [0, 1])

    def test_random_balanced_labelings(self):
        rng = np.random.default_rng(10)
        p1 = rng.permutation(np.repeat(np.arange(10), 1000))
        p2 = rng.permutation(np.repeat(np.arange(10), 1000))
        assert nmi(p1, p2) <= 0.05


@pytest.mark.integration
class TestMeasure:
    """The combined empirical report"""

    def test_histogram_matches_input(self, small_config):
        graph = generate(small_config)
        report = measure(graph, a=small_config.a)
        assert sum(report.degree_histogram.values()) == graph.n
        ks, counts = np.unique(graph.regular_degree, return_counts=True)
        assert report.degree_histogram == dict(zip(ks.tolist(), counts.tolist()))

    def test_report_serializes(self, two_community_config):
        report = measure(generate(two_community_config), a=two_community_config.a)
        out = report.to_dict()
        assert "clustering" not in out
        assert out["m_regular"] == report.m_regular
        assert set(out["mixing_by_community"]) == {"0", "1"}
        assert report.clustering is not None
