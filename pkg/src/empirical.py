"""Measurements on generated graphs, mirroring the closed-form quantities."""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.special import logsumexp
from sklearn.metrics import normalized_mutual_info_score

from src.closed_form import local_clustering_coefficient
from src.ctc_generator import CtcGraph
from src.errors import MeasurementError

logger = logging.getLogger(__name__)

Labels = Union[Mapping[int, Any], Sequence[Any], np.ndarray]

LOW_CONFIDENCE_SAMPLES = 100
GAMMA_GRID = np.linspace(0.01, 10.0, 1000)


class EdgeCovariance(NamedTuple):
    covariance: float
    correlation: float
    stderr: float
    variance: float


def _endpoint_degrees(graph: CtcGraph, degree: np.ndarray):
    # every Regular row counts, repeats and self-loops included
    edges = graph.regular_edges
    if edges.shape[0] == 0:
        raise MeasurementError("graph has no regular edges")
    # both orientations of every edge
    x = np.concatenate([degree[edges[:, 0]], degree[edges[:, 1]]]).astype(float)
    y = np.concatenate([degree[edges[:, 1]], degree[edges[:, 0]]]).astype(float)
    return x, y, edges.shape[0]


def _covariance(x: np.ndarray, y: np.ndarray, m: int, allow_undefined: bool) -> EdgeCovariance:
    dx, dy = x - x.mean(), y - y.mean()
    products = dx * dy
    cov = float(products.mean())
    stderr = float(products.std() / math.sqrt(m))
    variance = float((dx * dx).mean())
    scale = float(np.sqrt(variance * (dy * dy).mean()))
    if scale <= 0:
        if not allow_undefined:
            raise MeasurementError("endpoint degrees have zero variance; correlation undefined")
        return EdgeCovariance(cov, float("nan"), stderr, variance)
    return EdgeCovariance(cov, float(np.clip(cov / scale, -1.0, 1.0)), stderr, variance)


def empirical_edge_covariance(graph: CtcGraph, allow_undefined: bool = False) -> EdgeCovariance:
    """Covariance and correlation of X + X' at the two ends of every Regular edge.

    X is the stub count (the input degree) and X' the transitive degree, so
    repeated Regular edges and self-loops are kept as the configuration
    model produces them. ``stderr`` is the standard error of the covariance
    from the per-edge products.
    """
    x, y, m = _endpoint_degrees(graph, graph.stub_total_degree)
    return _covariance(x, y, m, allow_undefined)


def degree_pearson_regular(graph: CtcGraph, allow_undefined: bool = False) -> EdgeCovariance:
    """Same as empirical_edge_covariance with X alone."""
    x, y, m = _endpoint_degrees(graph, graph.regular_degree)
    return _covariance(x, y, m, allow_undefined)


def transitive_endpoint_mean(graph: CtcGraph) -> float:
    """Mean transitive degree X' at the ends of Regular edges."""
    if graph.m_regular == 0:
        raise MeasurementError("graph has no regular edges")
    return float(graph.transitive_degree[graph.regular_edges].mean())


class ClusteringResult(NamedTuple):
    per_vertex: np.ndarray
    grouped: pd.DataFrame
    mean: float


def empirical_local_clustering(graph: CtcGraph, a: Optional[float] = None) -> ClusteringResult:
    """Local clustering per vertex, grouped by (regular degree, transitive degree).

    Triangles and neighbour pairs are counted on the simple projection;
    the group key k is the stub count. Vertices with total degree below 2
    score 0. With ``a`` the grouped table gains the predicted column.
    """
    adj = graph.adjacency
    triangles = np.asarray((adj @ adj).multiply(adj).sum(axis=1)).ravel() / 2.0
    degree = graph.total_degree.astype(float)
    pairs = degree * (degree - 1) / 2.0
    lcc = np.divide(triangles, pairs, out=np.zeros_like(triangles), where=pairs > 0)

    frame = pd.DataFrame(
        {"k": graph.regular_degree, "kprime": graph.transitive_degree, "lcc": lcc}
    )
    grouped = (
        frame.groupby(["k", "kprime"])["lcc"]
        .agg(["count", "mean"])
        .reset_index()
        .sort_values(["k", "kprime"], ignore_index=True)
    )
    if a is not None:
        grouped["predicted"] = [
            local_clustering_coefficient(int(k), int(kp), a) for k, kp in zip(grouped["k"], grouped["kprime"])
        ]
    return ClusteringResult(per_vertex=lcc, grouped=grouped, mean=float(lcc.mean()) if lcc.size else 0.0)


class MixingResult(NamedTuple):
    mu: float
    per_community: Dict[int, float]


def mixing_parameter(graph: CtcGraph, labels: Optional[Labels] = None) -> MixingResult:
    """Fraction of simple-projection edges whose ends lie in different communities.

    The per-community value is the external share of edges touching that
    community.
    """
    membership = graph.community if labels is None else _as_label_array(labels, graph.n)
    edges = graph.simple_edges()
    communities = np.unique(membership)
    if edges.shape[0] == 0:
        return MixingResult(0.0, {int(c): 0.0 for c in communities})
    lu, lv = membership[edges[:, 0]], membership[edges[:, 1]]
    external = lu != lv
    per_community = {}
    for c in communities:
        touching = (lu == c) | (lv == c)
        total = int(touching.sum())
        per_community[int(c)] = float(external[touching].sum() / total) if total else 0.0
    return MixingResult(float(external.mean()), per_community)


@dataclass(frozen=True)
class PowerLawFit:
    gamma: float
    kmin: int
    kmax: int
    n: int
    sigma: float
    low_confidence: bool


def _log_likelihood(gamma: float, log_k: np.ndarray, log_support: np.ndarray) -> float:
    return -gamma * log_k.sum() - log_k.size * float(logsumexp(-gamma * log_support))


def fit_power_law(degrees: Sequence[int], kmin: Optional[int] = None) -> PowerLawFit:
    """Discrete maximum-likelihood exponent for p_k ~ k^-gamma on [kmin, kmax].

    kmin defaults to the smallest positive degree and kmax is the largest
    observed degree. The likelihood is scanned on a grid and refined with a
    bounded scalar search.
    """
    values = np.asarray(degrees, dtype=np.int64)
    values = values[values > 0]
    if values.size == 0:
        raise MeasurementError("no positive degrees to fit")
    kmin = int(values.min()) if kmin is None else int(kmin)
    values = values[values >= kmin]
    if values.size == 0:
        raise MeasurementError(f"no degrees at or above kmin={kmin}")
    kmax = int(values.max())
    if kmin == kmax:
        raise MeasurementError(f"all degrees equal {kmin}; no slope to fit")

    log_k = np.log(values.astype(float))
    log_support = np.log(np.arange(kmin, kmax + 1, dtype=float))
    scores = np.array([_log_likelihood(g, log_k, log_support) for g in GAMMA_GRID])
    best = int(np.argmax(scores))
    step = GAMMA_GRID[1] - GAMMA_GRID[0]
    lo = GAMMA_GRID[max(best - 1, 0)]
    hi = GAMMA_GRID[min(best + 1, GAMMA_GRID.size - 1)]
    result = optimize.minimize_scalar(
        lambda g: -_log_likelihood(g, log_k, log_support),
        bounds=(lo, hi if hi > lo else lo + step),
        method="bounded",
    )
    gamma = float(result.x)

    # Fisher information of the exponent is n * Var(log k) under the fitted law
    weights = np.exp(-gamma * log_support - logsumexp(-gamma * log_support))
    spread = float(np.dot(weights, log_support ** 2) - np.dot(weights, log_support) ** 2)
    sigma = 1.0 / math.sqrt(values.size * spread) if spread > 0 else float("inf")
    low = values.size < LOW_CONFIDENCE_SAMPLES
    if low:
        logger.warning(f"Power-law fit on only {values.size} samples; estimate is low-confidence")
    return PowerLawFit(gamma=gamma, kmin=kmin, kmax=kmax, n=int(values.size), sigma=sigma, low_confidence=low)


def _as_label_array(labels: Labels, n: Optional[int] = None) -> np.ndarray:
    if isinstance(labels, Mapping):
        keys = sorted(labels)
        if n is not None and keys != list(range(n)):
            raise MeasurementError(f"partition covers {len(keys)} vertices, graph has {n}")
        return np.asarray([labels[k] for k in keys])
    arr = np.asarray(labels)
    if n is not None and arr.size != n:
        raise MeasurementError(f"partition covers {arr.size} vertices, graph has {n}")
    return arr


def nmi(p1: Labels, p2: Labels) -> float:
    """2 I(C1; C2) / (H(C1) + H(C2)) with plug-in probabilities.

    Mappings must cover the same vertex set; sequences must have equal length.
    Two trivial partitions score 1, exactly one trivial partition scores 0.
    """
    if isinstance(p1, Mapping) or isinstance(p2, Mapping):
        if not (isinstance(p1, Mapping) and isinstance(p2, Mapping)):
            raise MeasurementError("compare two mappings or two sequences, not a mix")
        if set(p1) != set(p2):
            raise MeasurementError("partitions are over different vertex sets")
        keys = sorted(p1)
        left = np.asarray([p1[k] for k in keys])
        right = np.asarray([p2[k] for k in keys])
    else:
        left, right = np.asarray(p1), np.asarray(p2)
        if left.shape != right.shape:
            raise MeasurementError(f"partitions have {left.size} and {right.size} vertices")
    if left.size == 0:
        raise MeasurementError("empty partitions")
    trivial_left = np.unique(left).size == 1
    trivial_right = np.unique(right).size == 1
    if trivial_left and trivial_right:
        return 1.0
    if trivial_left or trivial_right:
        return 0.0
    score = normalized_mutual_info_score(left, right, average_method="arithmetic")
    return float(np.clip(score, 0.0, 1.0))


@dataclass
class EmpiricalReport:
    n: int
    m_regular: int
    m_transitive: int
    self_loops: int
    multi_edges: int
    covariance: float
    correlation: Optional[float]
    covariance_stderr: float
    regular_covariance: float
    regular_correlation: Optional[float]
    transitive_mean: float
    mean_clustering: float
    degree_histogram: Dict[int, int]
    mixing: float
    mixing_by_community: Dict[int, float]
    power_law: Optional[Dict[str, Any]] = None
    replicas: int = 1
    clustering: Optional[pd.DataFrame] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out.pop("clustering")
        out["degree_histogram"] = {str(k): v for k, v in self.degree_histogram.items()}
        out["mixing_by_community"] = {str(k): v for k, v in self.mixing_by_community.items()}
        return out


def _nan_to_none(value: float) -> Optional[float]:
    return None if math.isnan(value) else value


def measure(graph: CtcGraph, a: Optional[float] = None, fit: bool = True) -> EmpiricalReport:
    """Everything measurable on one graph."""
    total = empirical_edge_covariance(graph, allow_undefined=True)
    regular = degree_pearson_regular(graph, allow_undefined=True)
    clustering = empirical_local_clustering(graph, a)
    mixing = mixing_parameter(graph)
    ks, counts = np.unique(graph.regular_degree, return_counts=True)

    power_law = None
    if fit:
        try:
            power_law = asdict(fit_power_law(graph.total_degree))
        except MeasurementError as e:
            logger.warning(f"Power-law fit skipped: {e}")

    return EmpiricalReport(
        n=graph.n,
        m_regular=graph.m_regular,
        m_transitive=graph.m_transitive,
        self_loops=graph.self_loops,
        multi_edges=graph.multi_edges,
        covariance=total.covariance,
        correlation=_nan_to_none(total.correlation),
        covariance_stderr=total.stderr,
        regular_covariance=regular.covariance,
        regular_correlation=_nan_to_none(regular.correlation),
        transitive_mean=transitive_endpoint_mean(graph),
        mean_clustering=clustering.mean,
        degree_histogram={int(k): int(c) for k, c in zip(ks, counts)},
        mixing=mixing.mu,
        mixing_by_community=mixing.per_community,
        power_law=power_law,
        clustering=clustering.grouped,
    )
