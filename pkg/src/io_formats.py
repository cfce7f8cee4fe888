"""Text formats: degree sequences, pmfs, edge lists, community files, JSON."""
import hashlib
import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.ctc_generator import CtcGraph
from src.degree_model import DegreeDistribution, DegreeSequence
from src.errors import ConfigError, DistributionError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

KIND_CODES = {"R": "regular", "T": "transitive"}


def read_degree_sequence(path: PathLike) -> List[List[int]]:
    """One integer per line; a blank line starts the next community."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"degree file not found: {path}", key="degrees")
    communities: List[List[int]] = [[]]
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            if communities[-1]:
                communities.append([])
            continue
        if line.startswith("#"):
            continue
        try:
            communities[-1].append(int(line))
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: {line!r} is not an integer degree", key="degrees")
    communities = [c for c in communities if c]
    if not communities:
        raise ConfigError(f"degree file {path} is empty", key="degrees")
    return communities


def write_degree_sequence(path: PathLike, degrees: DegreeSequence):
    blocks = ["\n".join(str(int(k)) for k in community) for community in degrees.communities]
    Path(path).write_text("\n\n".join(blocks) + "\n")


def parse_probability(text: str) -> float:
    """Accepts decimals and fractions such as ``2/3``."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise DistributionError(f"{text!r} is not a probability")


def parse_inline_pmf(text: str) -> DegreeDistribution:
    """``2:2/3,4:1/3`` -> pmf."""
    mapping: Dict[int, float] = {}
    for item in text.split(","):
        if not item.strip():
            continue
        k, sep, p = item.partition(":")
        if not sep:
            raise DistributionError(f"pmf entry {item!r} must look like k:p")
        mapping[int(k)] = mapping.get(int(k), 0.0) + parse_probability(p)
    return DegreeDistribution.from_mapping(mapping)


def read_pmf(path: PathLike) -> DegreeDistribution:
    """Two columns ``k<TAB>p_k``."""
    frame = pd.read_csv(path, sep="\t", header=None, names=["k", "p"], comment="#", dtype=str)
    mapping: Dict[int, float] = {}
    for k, p in zip(frame["k"], frame["p"]):
        mapping[int(k)] = mapping.get(int(k), 0.0) + parse_probability(p)
    return DegreeDistribution.from_mapping(mapping)


def write_pmf(path: PathLike, dist: DegreeDistribution):
    frame = pd.DataFrame({"k": list(dist.probabilities), "p": [repr(p) for p in dist.probabilities.values()]})
    frame.to_csv(path, sep="\t", header=False, index=False)


def write_edges(path: PathLike, graph: CtcGraph):
    """``u<TAB>v<TAB>kind`` with Regular edges (R) before Transitive ones (T)."""
    frame = pd.concat(
        [
            pd.DataFrame({"u": graph.regular_edges[:, 0], "v": graph.regular_edges[:, 1], "kind": "R"}),
            pd.DataFrame({"u": graph.transitive_edges[:, 0], "v": graph.transitive_edges[:, 1], "kind": "T"}),
        ],
        ignore_index=True,
    )
    frame.to_csv(path, sep="\t", header=False, index=False)


def read_edges(path: PathLike, communities: Optional[Mapping[int, Any]] = None) -> CtcGraph:
    """Load an edge list; rows without a kind column count as Regular.

    Community labels are renumbered 0, 1, ... in order of first appearance;
    vertices missing from ``communities`` get -1.
    """
    if not Path(path).exists():
        raise ConfigError(f"edge file not found: {path}", key="edges")
    frame = pd.read_csv(path, sep="\t", header=None, comment="#")
    if frame.shape[1] == 2:
        frame[2] = "R"
    frame.columns = ["u", "v", "kind"]
    unknown = set(frame["kind"]) - set(KIND_CODES)
    if unknown:
        raise DistributionError(f"{path}: unknown edge kinds {sorted(unknown)}")
    n = int(max(frame["u"].max(), frame["v"].max()) + 1) if len(frame) else 0
    labels = None
    if communities is not None:
        n = max(n, max(communities) + 1) if communities else n
        labels, _ = pd.factorize(pd.Series([communities.get(v) for v in range(n)], dtype=object))
    regular = frame.loc[frame["kind"] == "R", ["u", "v"]].to_numpy()
    transitive = frame.loc[frame["kind"] == "T", ["u", "v"]].to_numpy()
    return CtcGraph.from_edges(n, regular, transitive, labels)


def write_communities(path: PathLike, labels: Sequence[Any]):
    frame = pd.DataFrame({"vertex": np.arange(len(labels)), "community": np.asarray(labels)})
    frame.to_csv(path, sep="\t", header=False, index=False)


def read_communities(path: PathLike) -> Dict[int, Any]:
    """``vertex<TAB>community`` -> {vertex: label}."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"community file not found: {path}", key="partition")
    frame = pd.read_csv(path, sep="\t", header=None, names=["vertex", "community"], comment="#", dtype={"community": str})
    if frame["vertex"].duplicated().any():
        raise DistributionError(f"{path}: a vertex is listed twice")
    return dict(zip(frame["vertex"].astype(int), frame["community"]))


def _json_default(obj: Any):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def write_json(path: PathLike, obj: Any):
    Path(path).write_text(to_json(obj) + "\n")


def file_digest(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
