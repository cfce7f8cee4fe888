"""Command-line surface: generate, analyze, verify, bench."""
import argparse
import hashlib
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src import config as settings
from src.closed_form import AnalyticReport, analyze, local_clustering_coefficient, sweep
from src.community import DETECTORS, run_benchmark
from src.config_loader import ConfigLoader
from src.ctc_generator import CtcGraph, ModelConfig, generate
from src.degree_model import (
    DegreeDistribution,
    DegreeSequence,
    partition_distribution,
    pmf_from_sequence,
    truncated_power_law,
)
from src.empirical import (
    degree_pearson_regular,
    empirical_edge_covariance,
    empirical_local_clustering,
    measure,
    transitive_endpoint_mean,
)
from src.errors import ClosedFormError, ConfigError, CtcError, DistributionError, PartitionError
from src.io_formats import (
    file_digest,
    read_communities,
    read_edges,
    to_json,
    write_communities,
    write_degree_sequence,
    write_edges,
    write_json,
    write_pmf,
)
from src.parallel import run_replicas

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

# per-replica vertices a (k, k') cell needs before it is compared
MIN_CELL_SAMPLES = 100

GENERATE_OUTPUTS = ("edges.tsv", "communities.tsv", "degrees.txt", "pmf.tsv", "empirical.json")

VALIDATION_ERRORS = (ConfigError, DistributionError, PartitionError, ClosedFormError)


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_sweep(spec: str) -> Tuple[str, List[float]]:
    """``KEY=START:STOP:STEP`` with an inclusive stop."""
    key, sep, rng = spec.partition("=")
    parts = rng.split(":")
    if not sep or len(parts) != 3:
        raise ConfigError(f"expected KEY=START:STOP:STEP, got {spec!r}", key="sweep")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"non-numeric range in {spec!r}", key="sweep")
    if step <= 0 or stop < start:
        raise ConfigError(f"need STEP > 0 and STOP >= START in {spec!r}", key="sweep")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return key.strip(), [round(start + i * step, 12) for i in range(count)]


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    seed: Optional[int]
    tool_version: str = settings.TOOL_VERSION
    inputs: List[Dict[str, str]] = field(default_factory=list)
    outputs: List[Dict[str, str]] = field(default_factory=list)
    started_at: str = ""
    wall_clock_seconds: float = 0.0

    def add_input(self, path: Path):
        self.inputs.append({"path": str(path), "sha256": file_digest(path)})

    def add_output(self, path: Path):
        self.outputs.append({"path": str(path), "sha256": file_digest(path)})

    def digest(self) -> str:
        """Hash of everything except timing, stable for fixed inputs."""
        stable = {k: v for k, v in asdict(self).items() if k not in ("started_at", "wall_clock_seconds")}
        return hashlib.sha256(to_json(stable).encode()).hexdigest()

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        write_json(path, {**asdict(self), "digest": self.digest()})
        return path


def _load(args) -> Tuple[ConfigLoader, ModelConfig]:
    loader = ConfigLoader(args.config)
    config = loader.to_model_config(seed=getattr(args, "seed", None))
    if config.seed is None:
        seed = int(np.random.SeedSequence().entropy % (1 << 64))
        logger.info(f"No seed given; drew {seed} from entropy")
        config = config.with_updates(seed=seed)
    return loader, config


def _start(command: str, loader: ConfigLoader, config: ModelConfig) -> RunManifest:
    manifest = RunManifest(
        command=command,
        config=config.to_dict(),
        seed=config.seed,
        started_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    manifest.add_input(loader.config_path)
    for key in ("degrees", "pmf"):
        value = loader.get(key)
        if value is not None and loader.resolve_path(str(value)).exists():
            manifest.add_input(loader.resolve_path(str(value)))
    return manifest


def _out_dir(args) -> Path:
    out = Path(args.out or settings.OUTPUT_DIR)
    out.mkdir(parents=True, exist_ok=True)
    return out


def analytic_distribution(config: ModelConfig) -> DegreeDistribution:
    """The pmf the closed forms are evaluated on for a given degree source."""
    if config.degree_source == "pmf":
        return config.pmf
    if config.degree_source == "degrees":
        return pmf_from_sequence(DegreeSequence.from_lists(config.degree_lists, repair=False))
    kmax = config.kmax if config.kmax is not None else config.n - 1
    return truncated_power_law(config.gamma, config.kmin, kmax)


def _analytic_report(config: ModelConfig) -> AnalyticReport:
    dist = analytic_distribution(config)
    partition = partition_distribution(dist, config.b, strict=config.strict)
    return analyze(dist, partition, config.a, config.q, config.involution, config.r, config.c)


def cmd_generate(args) -> RunManifest:
    started = time.perf_counter()
    loader, config = _load(args)
    manifest = _start("generate", loader, config)
    out = _out_dir(args)

    graph = generate(config)
    degrees = graph.degree_sequence()
    write_edges(out / "edges.tsv", graph)
    write_communities(out / "communities.tsv", graph.community)
    write_degree_sequence(out / "degrees.txt", degrees)
    write_pmf(out / "pmf.tsv", pmf_from_sequence(degrees))
    write_json(out / "empirical.json", measure(graph, a=config.a).to_dict())
    for name in GENERATE_OUTPUTS:
        manifest.add_output(out / name)
    manifest.config["generation"] = graph.metadata
    manifest.wall_clock_seconds = time.perf_counter() - started
    manifest.write(out)
    print(f"Wrote {graph.m_regular} regular and {graph.m_transitive} transitive edges to {out}")
    return manifest


def cmd_analyze(args) -> RunManifest:
    started = time.perf_counter()
    loader = ConfigLoader(args.config)
    config = loader.to_model_config()
    manifest = _start("analyze", loader, config)
    out = _out_dir(args)

    report = _analytic_report(config)
    write_json(out / "report.json", report.to_dict())
    manifest.add_output(out / "report.json")

    if args.sweep:
        key, values = parse_sweep(args.sweep)
        dist = analytic_distribution(config)
        partition = partition_distribution(dist, config.b, strict=config.strict)
        frame = sweep(dist, partition, key, values, config.a, config.q, config.involution, config.r)
        frame.to_csv(out / "sweep.csv", index=False)
        manifest.add_output(out / "sweep.csv")

    manifest.wall_clock_seconds = time.perf_counter() - started
    manifest.write(out)
    rho = "undefined" if report.correlation is None else f"{report.correlation:.6g}"
    print(f"cov={report.covariance:.6g} var={report.variance:.6g} rho={rho}")
    return manifest


def _verify_replica(config: ModelConfig) -> Dict[str, Any]:
    return _measure_row(generate(config))


def _measure_row(graph: CtcGraph) -> Dict[str, Any]:
    total = empirical_edge_covariance(graph, allow_undefined=True)
    regular = degree_pearson_regular(graph, allow_undefined=True)
    return {
        "covariance": total.covariance,
        "correlation": total.correlation,
        "variance": total.variance,
        "regular_covariance": regular.covariance,
        "transitive_mean": transitive_endpoint_mean(graph),
        "transitive_edges": float(graph.m_transitive),
        "clustering": empirical_local_clustering(graph).grouped,
    }


def compare_replicas(report: AnalyticReport, rows: List[Dict[str, Any]]) -> pd.DataFrame:
    """Analytic value, empirical mean, standard error and z-score per quantity."""
    analytic = {
        "covariance": report.covariance,
        "correlation": report.correlation,
        "variance": report.variance,
        "regular_covariance": report.regular_covariance,
        "transitive_mean": report.transitive["xp"],
        "transitive_edges": None,
    }
    reps = len(rows)
    records = []
    for name, expected in analytic.items():
        values = np.array([row[name] for row in rows], dtype=float)
        values = values[~np.isnan(values)]
        mean = float(values.mean()) if values.size else float("nan")
        se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else float("nan")
        z = float("nan")
        if expected is not None and se > 0:
            z = (mean - expected) / se
        records.append(
            {
                "quantity": name,
                "analytic": float("nan") if expected is None else expected,
                "empirical_mean": mean,
                "stderr": se,
                "z": z,
                "reps": reps,
            }
        )
    return pd.DataFrame(records)


def pool_clustering(frames: List[pd.DataFrame], a: float, min_samples: int = MIN_CELL_SAMPLES) -> pd.DataFrame:
    """Merge per-replica (k, k') clustering tables into count-weighted means.

    ``min_count`` is the smallest per-replica sample count of a cell (0 if
    some replica has none); a cell is ``populated`` when every replica
    holds at least ``min_samples`` vertices in it.
    """
    merged = pd.concat(frames, keys=range(len(frames)), names=["run", None]).reset_index(level=0)
    merged["weighted"] = merged["mean"] * merged["count"]
    pooled = merged.groupby(["k", "kprime"], as_index=False).agg(
        count=("count", "sum"),
        weighted=("weighted", "sum"),
        runs=("run", "nunique"),
        min_count=("count", "min"),
    )
    pooled.loc[pooled["runs"] < len(frames), "min_count"] = 0
    pooled["mean"] = pooled["weighted"] / pooled["count"]
    pooled["predicted"] = [
        local_clustering_coefficient(int(k), int(kp), a) for k, kp in zip(pooled["k"], pooled["kprime"])
    ]
    pooled["populated"] = pooled["min_count"] >= min_samples
    return pooled[["k", "kprime", "count", "min_count", "populated", "mean", "predicted"]]


def cmd_verify(args) -> RunManifest:
    started = time.perf_counter()
    reps = settings.DEFAULT_VERIFY_REPS if args.reps is None else args.reps
    if reps < 1:
        raise ConfigError(f"must be >= 1, got {reps}", key="reps")
    loader, config = _load(args)
    manifest = _start("verify", loader, config)
    out = _out_dir(args)

    report = _analytic_report(config)
    outputs = ["verify.csv", "clustering.csv", "verify.json"]
    if args.edges:
        labels = read_communities(args.communities) if args.communities else None
        graph = read_edges(args.edges, labels)
        manifest.add_input(Path(args.edges))
        if args.communities:
            manifest.add_input(Path(args.communities))
        logger.info(f"Verifying the supplied graph {args.edges} (n={graph.n}, regular={graph.m_regular})")
        rows = [_measure_row(graph)]
        write_json(out / "empirical.json", measure(graph, a=config.a).to_dict())
        outputs.append("empirical.json")
    else:
        configs = [config.with_updates(seed=config.seed + k) for k in range(reps)]
        workers = args.workers if args.workers is not None else loader.get_workers()
        logger.info(f"Verifying against {reps} replica(s)")
        rows = run_replicas(_verify_replica, configs, workers)

    comparison = compare_replicas(report, rows)
    comparison.to_csv(out / "verify.csv", index=False)
    clustering = pool_clustering([row["clustering"] for row in rows], config.a)
    clustering.to_csv(out / "clustering.csv", index=False)
    transitive = comparison.set_index("quantity").loc["transitive_mean"]
    write_json(
        out / "verify.json",
        {
            "analytic": report.to_dict(),
            "comparison": comparison.to_dict(orient="records"),
            # per-wedge analysis minus per-pair simulation
            "closure_gap": float(transitive["analytic"] - transitive["empirical_mean"]),
        },
    )
    for name in outputs:
        manifest.add_output(out / name)

    manifest.wall_clock_seconds = time.perf_counter() - started
    manifest.write(out)
    cov = comparison.set_index("quantity").loc["covariance"]
    print(f"covariance: analytic {cov['analytic']:.6g}, empirical {cov['empirical_mean']:.6g} (z={cov['z']:.3g})")
    return manifest


def cmd_bench(args) -> RunManifest:
    started = time.perf_counter()
    reps = settings.DEFAULT_BENCH_REPS if args.reps is None else args.reps
    loader, config = _load(args)
    manifest = _start("bench", loader, config)
    out = _out_dir(args)
    key, values = parse_sweep(args.sweep)
    workers = args.workers if args.workers is not None else loader.get_workers()

    report = run_benchmark(config, key, values, reps, args.detector, workers, args.partitions)
    report.replicas[["param", "value", "rep", "nmi"]].to_csv(out / "bench_reps.csv", index=False)
    report.summary[["param", "value", "mean_nmi", "stderr"]].to_csv(out / "bench_summary.csv", index=False)
    report.replicas[["param", "value", "rep", "mu", "gamma_hat"]].to_csv(out / "bench_support.csv", index=False)
    write_json(out / "bench.json", report.to_dict())
    for name in ("bench_reps.csv", "bench_summary.csv", "bench_support.csv", "bench.json"):
        manifest.add_output(out / name)

    manifest.wall_clock_seconds = time.perf_counter() - started
    manifest.write(out)
    print(f"Benchmarked {len(values)} cell(s) x {reps} rep(s); Spearman(value, mean NMI) = {report.spearman:.3g}")
    return manifest


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="ctc", description="CTC graph generator and analytics")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_common(sub, seed=True):
        sub.add_argument("--config", default=settings.CONFIG_FILE, help="Model config file (key=value or YAML)")
        sub.add_argument("--out", help=f"Output directory (default: {settings.OUTPUT_DIR})")
        if seed:
            sub.add_argument("--seed", type=int, help="Base seed (default: config seed, else entropy)")

    gen = commands.add_parser("generate", help="Generate one CTC graph")
    add_common(gen)
    gen.set_defaults(handler=cmd_generate)

    ana = commands.add_parser("analyze", help="Evaluate the closed forms")
    add_common(ana, seed=False)
    ana.add_argument("--sweep", help="KEY=START:STOP:STEP over a, q or r")
    ana.set_defaults(handler=cmd_analyze)

    ver = commands.add_parser("verify", help="Compare simulations with the closed forms")
    add_common(ver)
    ver.add_argument("--reps", type=int, help=f"Replicas (default: {settings.DEFAULT_VERIFY_REPS})")
    ver.add_argument("--workers", type=int, help="Worker processes")
    ver.add_argument("--edges", help="Measure this edge list (u<TAB>v[<TAB>R|T]) instead of generating replicas")
    ver.add_argument("--communities", help="vertex<TAB>community file for --edges")
    ver.set_defaults(handler=cmd_verify)

    ben = commands.add_parser("bench", help="Community-detection NMI benchmark")
    add_common(ben)
    ben.add_argument("--sweep", required=True, help="KEY=START:STOP:STEP, e.g. r=0.1:0.9:0.1")
    ben.add_argument("--detector", default="fast_unfolding", choices=DETECTORS)
    ben.add_argument("--reps", type=int, help=f"Replicas per cell (default: {settings.DEFAULT_BENCH_REPS})")
    ben.add_argument("--workers", type=int, help="Worker processes")
    ben.add_argument("--partitions", help="Directory of rep_<k>.tsv files for the external detector")
    ben.set_defaults(handler=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, settings.LOG_LEVEL, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%H:%M:%S',
    )

    try:
        args.handler(args)
    except VALIDATION_ERRORS as e:
        logger.error(f"Invalid input: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CtcError as e:
        logger.error(f"Run failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.critical(f"Fatal error: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
