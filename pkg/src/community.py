"""Community detection and the NMI benchmark harness."""
import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Union

import networkx as nx
import numpy as np
import pandas as pd
from scipy import stats

from src.ctc_generator import CtcGraph, ModelConfig, generate
from src.empirical import Labels, fit_power_law, mixing_parameter, nmi
from src.errors import ConfigError, DetectionError, MeasurementError
from src.io_formats import read_communities, to_json
from src.parallel import run_replicas

logger = logging.getLogger(__name__)

DETECTORS = ("fast_unfolding", "label_propagation", "external")
BENCH_PARAMS = ("q", "r", "a", "b", "gamma", "kmin")
INTEGER_PARAMS = ("b", "kmin")

GraphLike = Union[CtcGraph, nx.Graph]


class DetectionResult(NamedTuple):
    labels: np.ndarray
    modularity_trace: List[float]


def _as_networkx(graph: GraphLike) -> nx.Graph:
    G = graph.to_networkx() if isinstance(graph, CtcGraph) else graph
    if G.number_of_nodes() == 0:
        raise DetectionError("graph has no vertices")
    return G


def _labels_from_sets(G: nx.Graph, communities: Sequence[set]) -> np.ndarray:
    """Community index per vertex (sorted vertex order), numbered by smallest member."""
    index = {v: i for i, v in enumerate(sorted(G.nodes()))}
    labels = np.full(len(index), -1, dtype=np.int64)
    for label, members in enumerate(sorted(communities, key=min)):
        for v in members:
            labels[index[v]] = label
    if (labels < 0).any():
        raise DetectionError("detected partition does not cover every vertex")
    return labels


def _canonical(labels: np.ndarray) -> np.ndarray:
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return rank[inverse]


def modularity(graph: GraphLike, labels: Labels) -> float:
    """Newman modularity (resolution 1) of a labeling on the simple projection."""
    G = _as_networkx(graph)
    if G.number_of_edges() == 0:
        return 0.0
    nodes = sorted(G.nodes())
    values = [labels[v] for v in nodes] if isinstance(labels, dict) else list(np.asarray(labels))
    groups: Dict[Any, set] = {}
    for v, label in zip(nodes, values):
        groups.setdefault(label, set()).add(v)
    return float(nx.community.modularity(G, groups.values(), resolution=1))


def fast_unfolding(graph: GraphLike, seed: Optional[int] = None, threshold: float = 1e-7) -> DetectionResult:
    """Louvain: local moves in seeded random order, then aggregation, until the gain is below ``threshold``.

    The modularity of each level is recorded and must never decrease.
    """
    G = _as_networkx(graph)
    if G.number_of_edges() == 0:
        return DetectionResult(np.arange(G.number_of_nodes()), [0.0])
    levels = list(nx.community.louvain_partitions(G, resolution=1, threshold=threshold, seed=seed))
    trace = [float(nx.community.modularity(G, level, resolution=1)) for level in levels]
    for before, after in zip(trace, trace[1:]):
        if after < before - 1e-12:
            raise DetectionError(f"modularity decreased between levels: {before} -> {after}")
    logger.debug(f"Fast unfolding: {len(levels)} level(s), modularity {trace[-1]:.4f}")
    return DetectionResult(_labels_from_sets(G, levels[-1]), trace)


def label_propagation(graph: GraphLike, seed: Optional[int] = None, max_sweeps: int = 100) -> DetectionResult:
    """Asynchronous label propagation.

    Vertices are visited in a fresh random order every sweep and take one of
    their neighbours' most frequent labels, ties broken uniformly at random
    (the current label gets no preference). Propagation stops after a sweep
    that changes no label, or once every vertex already holds one of its
    most frequent labels.
    """
    G = _as_networkx(graph)
    nodes = sorted(G.nodes())
    adj = nx.to_scipy_sparse_array(G, nodelist=nodes, format="csr")
    rng = np.random.default_rng(seed)
    labels = np.arange(len(nodes))

    def most_frequent(v: int) -> np.ndarray:
        neighbours = adj.indices[adj.indptr[v]:adj.indptr[v + 1]]
        candidates, counts = np.unique(labels[neighbours], return_counts=True)
        return candidates[counts == counts.max()]

    connected = np.flatnonzero(np.diff(adj.indptr) > 0)
    for sweep_no in range(max_sweeps):
        changed = False
        for v in rng.permutation(len(nodes)):
            if adj.indptr[v] == adj.indptr[v + 1]:
                continue
            new = rng.choice(most_frequent(v))
            if new != labels[v]:
                labels[v] = new
                changed = True
        if not changed or all(labels[v] in most_frequent(v) for v in connected):
            logger.debug(f"Label propagation converged after {sweep_no + 1} sweep(s)")
            break
    else:
        logger.warning(f"Label propagation stopped after {max_sweeps} sweeps without converging")
    labels = _canonical(labels)
    return DetectionResult(labels, [modularity(G, labels)])


def score_external(truth: Labels, partition_path: Union[str, Path]) -> float:
    """NMI of an externally computed partition (community TSV) against the truth."""
    detected = read_communities(partition_path)
    truth_map = dict(truth) if isinstance(truth, dict) else dict(enumerate(np.asarray(truth).tolist()))
    try:
        return nmi(truth_map, detected)
    except MeasurementError as e:
        raise DetectionError(f"{partition_path}: {e}")


@dataclass(frozen=True)
class BenchJob:
    config: ModelConfig
    param: str
    value: float
    rep: int
    detector: str
    partition_path: Optional[str] = None


def _bench_replica(job: BenchJob) -> Dict[str, Any]:
    graph = generate(job.config)
    truth = graph.community
    if job.detector == "fast_unfolding":
        score = nmi(truth, fast_unfolding(graph, seed=job.config.seed).labels)
    elif job.detector == "label_propagation":
        score = nmi(truth, label_propagation(graph, seed=job.config.seed).labels)
    else:
        score = score_external(truth, job.partition_path)
    try:
        gamma_hat = fit_power_law(graph.total_degree).gamma
    except MeasurementError:
        gamma_hat = float("nan")
    return {
        "param": job.param,
        "value": job.value,
        "rep": job.rep,
        "nmi": score,
        "mu": mixing_parameter(graph).mu,
        "gamma_hat": gamma_hat,
    }


def _external_path(partition_dir: Optional[str], param: str, value: float, rep: int) -> str:
    if partition_dir is None:
        raise DetectionError("the external detector needs a partition directory")
    root = Path(partition_dir)
    cell = root / f"{param}_{value:g}"
    path = (cell if cell.is_dir() else root) / f"rep_{rep}.tsv"
    if not path.exists():
        raise DetectionError(f"missing external partition {path}")
    return str(path)


@dataclass
class BenchReport:
    """Per-replica NMI table plus its per-cell summary."""

    param: str
    grid: List[float]
    reps: int
    detector: str
    config_digest: str
    replicas: pd.DataFrame
    summary: pd.DataFrame
    spearman: float
    stderr_defined: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "param": self.param,
            "grid": self.grid,
            "reps": self.reps,
            "detector": self.detector,
            "config_digest": self.config_digest,
            "spearman": self.spearman,
            "stderr_defined": self.stderr_defined,
            "summary": self.summary.to_dict(orient="records"),
        }


def config_digest(config: ModelConfig) -> str:
    return hashlib.sha256(to_json(config.to_dict()).encode()).hexdigest()


def run_benchmark(
    base: ModelConfig,
    param: str,
    grid: Sequence[float],
    reps: int,
    detector: str = "fast_unfolding",
    workers: Optional[int] = None,
    partition_dir: Optional[str] = None,
) -> BenchReport:
    """Generate ``reps`` graphs per grid value, detect communities and score them by NMI.

    Replica k of every cell uses seed base.seed + k.
    """
    if detector not in DETECTORS:
        raise DetectionError(f"unknown detector {detector!r}; available: {', '.join(DETECTORS)}")
    if param not in BENCH_PARAMS:
        raise ConfigError(f"cannot sweep {param!r}; choose one of {', '.join(BENCH_PARAMS)}", key="sweep")
    if reps < 1:
        raise ConfigError(f"must be >= 1, got {reps}", key="reps")
    if not grid:
        raise ConfigError("empty grid", key="sweep")
    base_seed = base.seed
    if base_seed is None:
        base_seed = int(np.random.SeedSequence().entropy % (1 << 63))
        logger.warning(f"No seed given; benchmark uses {base_seed}")

    jobs = []
    for value in grid:
        value = int(value) if param in INTEGER_PARAMS else float(value)
        for rep in range(reps):
            config = base.with_updates(**{param: value, "seed": base_seed + rep})
            path = _external_path(partition_dir, param, value, rep) if detector == "external" else None
            jobs.append(BenchJob(config, param, float(value), rep, detector, path))

    logger.info(f"Benchmark: {param} over {len(grid)} value(s), {reps} rep(s), detector {detector}")
    replicas = pd.DataFrame(run_replicas(_bench_replica, jobs, workers))
    summary = (
        replicas.groupby("value", sort=False)
        .agg(
            mean_nmi=("nmi", "mean"),
            stderr=("nmi", lambda s: s.std(ddof=1) / math.sqrt(reps)),
            mean_mu=("mu", "mean"),
            mean_gamma_hat=("gamma_hat", "mean"),
        )
        .reset_index()
    )
    summary.insert(0, "param", param)
    stderr_defined = reps > 1
    if not stderr_defined:
        logger.warning("One replica per cell: standard errors are undefined")

    spearman = float("nan")
    if len(summary) > 1 and summary["mean_nmi"].nunique() > 1:
        spearman = float(stats.spearmanr(summary["value"], summary["mean_nmi"]).correlation)

    return BenchReport(
        param=param,
        grid=[float(v) for v in grid],
        reps=reps,
        detector=detector,
        config_digest=config_digest(base),
        replicas=replicas,
        summary=summary,
        spearman=spearman,
        stderr_defined=stderr_defined,
    )
