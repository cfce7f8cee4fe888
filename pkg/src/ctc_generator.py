"""CTC graph construction: stub typing, three-pool wiring and triadic closure."""
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from scipy import sparse

from src.degree_model import (
    BlockPartition,
    DegreeDistribution,
    DegreeSequence,
    SeedLike,
    partition_into_blocks,
    sample_from_distribution,
    sample_power_law_sequence,
)
from src.errors import ConfigError, WiringError

logger = logging.getLogger(__name__)

TYPE1, TYPE2, TYPE3 = 1, 2, 3

# slack for the ceilings of 2m_i*q*r/b against float noise
CEIL_EPS = 1e-9

HSpec = Union[str, Sequence[int]]


def resolve_involution(h: HSpec, b: int) -> np.ndarray:
    """Turn "identity", "reversal" or a 1-based image list into a 0-based array.

    Raises ConfigError (key ``h``) unless the result is an involution on b blocks.
    """
    if isinstance(h, str):
        name = h.strip().lower()
        if name in ("identity", "id"):
            return np.arange(b)
        if name in ("reversal", "reverse", "rev"):
            return np.arange(b)[::-1].copy()
        try:
            h = [int(x) for x in name.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"unknown involution {h!r}; use identity, reversal or a comma list", key="h")
    images = np.asarray(list(h), dtype=np.int64) - 1
    if images.size != b:
        raise ConfigError(f"expected {b} images, got {images.size}", key="h")
    if images.min() < 0 or images.max() >= b:
        raise ConfigError(f"images must lie in 1..{b}", key="h")
    if not np.array_equal(images[images], np.arange(b)):
        raise ConfigError(f"{(images + 1).tolist()} is not an involution (h(h(i)) != i)", key="h")
    return images


@dataclass(frozen=True)
class ModelConfig:
    """All CTC parameters plus the degree source.

    Exactly one degree source is used, in order of precedence: explicit
    per-community degree lists, a pmf sampled per vertex, a power law.
    """

    c: int = 1
    n_i: Tuple[int, ...] = (1000,)
    b: int = 2
    q: float = 0.5
    r: float = 1.0
    a: float = 0.0
    h: Tuple[int, ...] = ()
    seed: Optional[int] = None
    gamma: Optional[float] = None
    kmin: int = 1
    kmax: Optional[int] = None
    pmf: Optional[DegreeDistribution] = None
    degree_lists: Optional[Tuple[Tuple[int, ...], ...]] = None
    strict: bool = False

    def __post_init__(self):
        if self.c < 1:
            raise ConfigError(f"must be >= 1, got {self.c}", key="c")
        if self.b < 1:
            raise ConfigError(f"must be >= 1, got {self.b}", key="b")
        if len(self.n_i) != self.c:
            raise ConfigError(f"expected {self.c} community sizes, got {len(self.n_i)}", key="n_i")
        if any(n < 1 for n in self.n_i):
            raise ConfigError(f"community sizes must be positive, got {list(self.n_i)}", key="n_i")
        for key in ("q", "r", "a"):
            value = getattr(self, key)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"must lie in [0, 1], got {value}", key=key)
        if not self.h:
            object.__setattr__(self, "h", tuple(range(1, self.b + 1)))
        resolve_involution(list(self.h), self.b)
        if self.degree_lists is not None:
            sizes = tuple(len(d) for d in self.degree_lists)
            if sizes != tuple(self.n_i):
                raise ConfigError(f"degree file has community sizes {list(sizes)}, config says {list(self.n_i)}", key="n_i")
        elif self.pmf is None and self.gamma is None:
            raise ConfigError("no degree source: give degrees, pmf or gamma", key="gamma")
        if self.degree_source == "power_law":
            if self.gamma <= 1:
                raise ConfigError(f"must be > 1, got {self.gamma}", key="gamma")
            if self.kmin < 1:
                raise ConfigError(f"must be >= 1, got {self.kmin}", key="kmin")
            if self.kmax is not None and self.kmax < self.kmin:
                raise ConfigError(f"kmax={self.kmax} is below kmin={self.kmin}", key="kmax")

    @property
    def n(self) -> int:
        return int(sum(self.n_i))

    @property
    def degree_source(self) -> str:
        if self.degree_lists is not None:
            return "degrees"
        if self.pmf is not None:
            return "pmf"
        return "power_law"

    @property
    def involution(self) -> np.ndarray:
        return resolve_involution(list(self.h), self.b)

    def with_updates(self, **changes) -> "ModelConfig":
        if "b" in changes and "h" not in changes:
            # keep the reversal regime when only b changes
            was_reversal = self.b > 1 and self.h == tuple(range(self.b, 0, -1))
            changes["h"] = tuple(range(int(changes["b"]), 0, -1)) if was_reversal else ()
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        """Flat, JSON-ready view used in manifests and digests."""
        out = asdict(self)
        out["n_i"] = list(self.n_i)
        out["h"] = list(self.h)
        out["pmf"] = (
            {str(k): p for k, p in self.pmf.probabilities.items()} if self.pmf is not None else None
        )
        out["degree_lists"] = (
            [list(d) for d in self.degree_lists] if self.degree_lists is not None else None
        )
        out["degree_source"] = self.degree_source
        return out


@dataclass(frozen=True, eq=False)
class StubLedger:
    """Stub types per community, aligned with the partition's stub arrays."""

    partition: BlockPartition
    stub_types: Tuple[np.ndarray, ...]
    clamped_blocks: Tuple[Tuple[int, int], ...] = ()
    demoted_type1: int = 0
    demoted_type2: int = 0

    def pool(self, community: int, stub_type: int, block: Optional[int] = None) -> np.ndarray:
        """Stub indices (within the community) of one type, optionally one block."""
        mask = self.stub_types[community] == stub_type
        if block is not None:
            mask &= self.partition.communities[community].stub_block == block
        return np.flatnonzero(mask)

    def counts(self) -> Dict[str, int]:
        totals = {TYPE1: 0, TYPE2: 0, TYPE3: 0}
        for types in self.stub_types:
            for kind in totals:
                totals[kind] += int(np.count_nonzero(types == kind))
        return {f"type{k}": v for k, v in totals.items()}


def assign_stub_types(
    partition: BlockPartition,
    q: float,
    r: float,
    seed: SeedLike = None,
    h: Optional[np.ndarray] = None,
) -> StubLedger:
    """Mark ceil(2m_i q r / b) stubs of each block type 1, ceil(2m_i (1-q) r / b) type 2.

    The rest are type 3. Counts exceeding the block are clamped and the block
    is recorded. Afterwards surplus stubs are demoted to type 3 until every
    pool can be matched: paired type-1 pools (j, h(j)) get equal sizes, a
    self-paired type-1 pool and each community's type-2 pool become even.
    """
    if not partition.communities:
        raise WiringError("stub typing needs a partition built from a degree sequence")
    rng = np.random.default_rng(seed)
    b = partition.b
    h = np.arange(b) if h is None else np.asarray(h)
    stub_types = []
    clamped = []
    demoted1 = demoted2 = 0
    for blocks in partition.communities:
        total = int(blocks.stub_vertex.size)
        n1 = math.ceil(total * q * r / b - CEIL_EPS) if total else 0
        n2 = math.ceil(total * (1.0 - q) * r / b - CEIL_EPS) if total else 0
        types = np.full(total, TYPE3, dtype=np.int8)
        for j in range(b):
            members = blocks.block_stubs(j)
            size = members.size
            k1, k2 = min(n1, size), min(n2, max(size - n1, 0))
            if k1 != n1 or k2 != n2:
                clamped.append((blocks.community, j))
            chosen = rng.permutation(members)
            types[chosen[:k1]] = TYPE1
            types[chosen[k1:k1 + k2]] = TYPE2

        for j in range(b):
            hj = int(h[j])
            if hj < j:
                continue
            pool_j = np.flatnonzero((types == TYPE1) & (blocks.stub_block == j))
            if hj == j:
                if pool_j.size % 2:
                    types[rng.choice(pool_j)] = TYPE3
                    demoted1 += 1
                continue
            pool_h = np.flatnonzero((types == TYPE1) & (blocks.stub_block == hj))
            surplus = pool_j.size - pool_h.size
            if surplus:
                larger = pool_j if surplus > 0 else pool_h
                types[rng.choice(larger, size=abs(surplus), replace=False)] = TYPE3
                demoted1 += abs(surplus)

        type2 = np.flatnonzero(types == TYPE2)
        if type2.size % 2:
            types[rng.choice(type2)] = TYPE3
            demoted2 += 1
        stub_types.append(types)

    if clamped:
        logger.warning(f"Type counts clamped to block size in {len(clamped)} block(s)")
    if demoted1 or demoted2:
        logger.warning(f"Parity repair demoted {demoted1} type-1 and {demoted2} type-2 stubs to type 3")
    return StubLedger(
        partition=partition,
        stub_types=tuple(stub_types),
        clamped_blocks=tuple(clamped),
        demoted_type1=demoted1,
        demoted_type2=demoted2,
    )


@dataclass(frozen=True, eq=False)
class RegularWiring:
    """Regular edges with the stub type and endpoint blocks that produced them."""

    edges: np.ndarray
    stub_type: np.ndarray
    blocks: np.ndarray


def wire_regular_edges(ledger: StubLedger, h: Optional[np.ndarray] = None, seed: SeedLike = None) -> RegularWiring:
    """Uniform random perfect matching inside each stub pool.

    Pools are visited in a fixed order (type 1 by community and block pair,
    type 2 by community, then the global type-3 pool) so a seed fixes the
    edge list.
    """
    rng = np.random.default_rng(seed)
    partition = ledger.partition
    b = partition.b
    h = np.arange(b) if h is None else np.asarray(h)
    ends: List[np.ndarray] = []
    kinds: List[np.ndarray] = []
    blocks_out: List[np.ndarray] = []

    def emit(blocks, left: np.ndarray, right: np.ndarray, kind: int):
        ends.append(np.column_stack([blocks.stub_vertex[left], blocks.stub_vertex[right]]))
        blocks_out.append(np.column_stack([blocks.stub_block[left], blocks.stub_block[right]]))
        kinds.append(np.full(left.size, kind, dtype=np.int8))

    for ci, blocks in enumerate(partition.communities):
        for j in range(b):
            hj = int(h[j])
            if hj < j:
                continue
            pool_j = ledger.pool(ci, TYPE1, j)
            if hj == j:
                if pool_j.size % 2:
                    raise WiringError(f"community {ci} block {j + 1}: odd type-1 pool of {pool_j.size}")
                shuffled = rng.permutation(pool_j)
                emit(blocks, shuffled[0::2], shuffled[1::2], TYPE1)
            else:
                pool_h = ledger.pool(ci, TYPE1, hj)
                if pool_j.size != pool_h.size:
                    raise WiringError(
                        f"community {ci}: type-1 pools of blocks {j + 1} and {hj + 1} differ ({pool_j.size} vs {pool_h.size})"
                    )
                emit(blocks, pool_j, rng.permutation(pool_h), TYPE1)
        type2 = ledger.pool(ci, TYPE2)
        if type2.size % 2:
            raise WiringError(f"community {ci}: odd type-2 pool of {type2.size}")
        shuffled = rng.permutation(type2)
        emit(blocks, shuffled[0::2], shuffled[1::2], TYPE2)

    vertex3 = np.concatenate([blk.stub_vertex[ledger.pool(ci, TYPE3)] for ci, blk in enumerate(partition.communities)])
    block3 = np.concatenate([blk.stub_block[ledger.pool(ci, TYPE3)] for ci, blk in enumerate(partition.communities)])
    if vertex3.size % 2:
        raise WiringError(f"global type-3 pool has odd size {vertex3.size}")
    order = rng.permutation(vertex3.size)
    ends.append(np.column_stack([vertex3[order[0::2]], vertex3[order[1::2]]]))
    blocks_out.append(np.column_stack([block3[order[0::2]], block3[order[1::2]]]))
    kinds.append(np.full(order.size // 2, TYPE3, dtype=np.int8))

    edges = np.concatenate(ends).astype(np.int64) if ends else np.zeros((0, 2), dtype=np.int64)
    logger.debug(f"Wired {edges.shape[0]} regular edges")
    return RegularWiring(edges=edges, stub_type=np.concatenate(kinds), blocks=np.concatenate(blocks_out))


def _simple_adjacency(n: int, edges: np.ndarray) -> sparse.csr_matrix:
    keep = edges[edges[:, 0] != edges[:, 1]] if edges.size else edges.reshape(0, 2)
    rows = np.concatenate([keep[:, 0], keep[:, 1]])
    cols = np.concatenate([keep[:, 1], keep[:, 0]])
    adj = sparse.coo_matrix((np.ones(rows.size, dtype=np.int64), (rows, cols)), shape=(n, n)).tocsr()
    adj.data[:] = 1
    return adj


@dataclass(eq=False)
class CtcGraph:
    """Labeled multigraph of Regular and Transitive edges.

    Regular edges may contain self-loops and repeats. Edge-end degree
    statistics count every Regular row; closure, clustering, mixing and
    detection use the simple projection.
    """

    n: int
    community: np.ndarray
    regular_edges: np.ndarray
    transitive_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    regular_stub_type: Optional[np.ndarray] = None
    regular_blocks: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_edges(
        cls,
        n: int,
        regular: Sequence[Tuple[int, int]],
        transitive: Sequence[Tuple[int, int]] = (),
        community: Optional[Sequence[int]] = None,
    ) -> "CtcGraph":
        labels = np.zeros(n, dtype=np.int64) if community is None else np.asarray(community, dtype=np.int64)
        return cls(
            n=n,
            community=labels,
            regular_edges=np.asarray(regular, dtype=np.int64).reshape(-1, 2),
            transitive_edges=np.asarray(transitive, dtype=np.int64).reshape(-1, 2),
        )

    @property
    def m_regular(self) -> int:
        return int(self.regular_edges.shape[0])

    @property
    def m_transitive(self) -> int:
        return int(self.transitive_edges.shape[0])

    @property
    def self_loops(self) -> int:
        return int(np.count_nonzero(self.regular_edges[:, 0] == self.regular_edges[:, 1]))

    @property
    def multi_edges(self) -> int:
        """Regular edges beyond the first between the same pair (self-loops excluded)."""
        return self.m_regular - self.self_loops - int(self.regular_adjacency.nnz // 2)

    @cached_property
    def regular_degree(self) -> np.ndarray:
        """Stub count per vertex; equals the input degree."""
        return np.bincount(self.regular_edges.ravel(), minlength=self.n)

    @cached_property
    def regular_adjacency(self) -> sparse.csr_matrix:
        return _simple_adjacency(self.n, self.regular_edges)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Simple projection over both edge kinds."""
        return _simple_adjacency(self.n, np.concatenate([self.regular_edges, self.transitive_edges]))

    @property
    def simple_regular_degree(self) -> np.ndarray:
        return np.asarray(self.regular_adjacency.sum(axis=1)).ravel()

    @property
    def transitive_degree(self) -> np.ndarray:
        return np.bincount(self.transitive_edges.ravel(), minlength=self.n)

    @property
    def total_degree(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    @property
    def stub_total_degree(self) -> np.ndarray:
        """X + X': stub count plus transitive degree."""
        return self.regular_degree + self.transitive_degree

    def degree_sequence(self) -> DegreeSequence:
        """Stub counts regrouped by community label, in vertex order."""
        return DegreeSequence.from_lists(
            [self.regular_degree[self.community == c] for c in np.unique(self.community)],
            repair=False,
        )

    def simple_edges(self) -> np.ndarray:
        upper = sparse.triu(self.adjacency, k=1).tocoo()
        pairs = np.column_stack([upper.row, upper.col]).astype(np.int64)
        return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]

    def with_transitive(self, transitive: np.ndarray) -> "CtcGraph":
        return replace(self, transitive_edges=np.asarray(transitive, dtype=np.int64).reshape(-1, 2))

    def to_networkx(self) -> nx.Graph:
        """Simple projection as an undirected networkx graph, community as a node attribute."""
        graph = nx.Graph()
        graph.add_nodes_from((v, {"community": int(c)}) for v, c in enumerate(self.community))
        graph.add_edges_from(map(tuple, self.simple_edges().tolist()))
        return graph


def candidate_pairs(graph: CtcGraph) -> np.ndarray:
    """Non-adjacent pairs with at least one common Regular neighbour, sorted (u < v).

    Computed from the wedge counts A @ A of the simple Regular projection,
    so the cost follows the number of wedges rather than n^2.
    """
    adj = graph.regular_adjacency
    wedges = sparse.triu(adj @ adj, k=1).tocsr()
    wedges = wedges - wedges.multiply(adj)
    wedges.eliminate_zeros()
    found = wedges.tocoo()
    pairs = np.column_stack([found.row, found.col]).astype(np.int64)
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


def apply_triadic_closure(graph: CtcGraph, a: float, seed: SeedLike = None) -> np.ndarray:
    """One Bernoulli(a) trial per candidate pair; returns the Transitive edges."""
    rng = np.random.default_rng(seed)
    pairs = candidate_pairs(graph)
    if a <= 0 or pairs.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    keep = rng.random(pairs.shape[0]) < a
    logger.debug(f"Closure: {int(keep.sum())} of {pairs.shape[0]} candidate pairs closed")
    return pairs[keep]


def sample_degrees(config: ModelConfig, seed: SeedLike = None) -> DegreeSequence:
    """Resolve the configured degree source into a parity-repaired sequence."""
    if config.degree_source == "degrees":
        return DegreeSequence.from_lists(config.degree_lists, seed=seed)
    if config.degree_source == "pmf":
        return sample_from_distribution(config.pmf, config.n_i, seed=seed)
    return sample_power_law_sequence(
        config.n,
        config.gamma,
        config.kmin,
        config.kmax,
        seed=seed,
        community_sizes=config.n_i,
    )


def generate(config: ModelConfig) -> CtcGraph:
    """Run the whole construction: degrees, partition, typing, wiring, closure."""
    entropy = config.seed if config.seed is not None else np.random.SeedSequence().entropy
    degree_seed, type_seed, wire_seed, closure_seed = np.random.SeedSequence(entropy).spawn(4)
    h = config.involution

    logger.info(f"Sampling degrees ({config.degree_source}, n={config.n}, c={config.c})")
    degrees = sample_degrees(config, degree_seed)
    # sampled sequences rarely split into equal-mass blocks; strict only applies to the closed forms
    partition = partition_into_blocks(degrees, config.b, strict=False)

    logger.info(f"Typing stubs (b={config.b}, q={config.q}, r={config.r})")
    ledger = assign_stub_types(partition, config.q, config.r, type_seed, h=h)
    wiring = wire_regular_edges(ledger, h, wire_seed)

    graph = CtcGraph(
        n=degrees.n,
        community=degrees.community_of_vertex,
        regular_edges=wiring.edges,
        regular_stub_type=wiring.stub_type,
        regular_blocks=wiring.blocks,
        metadata={
            "seed": int(entropy),
            "repaired_vertices": list(degrees.repaired_vertices),
            "clamped_blocks": [list(x) for x in ledger.clamped_blocks],
            "demoted_type1": ledger.demoted_type1,
            "demoted_type2": ledger.demoted_type2,
            "straddles": list(partition.straddles),
            "stub_counts": ledger.counts(),
        },
    )
    logger.info(f"Closing wedges with a={config.a}")
    graph = graph.with_transitive(apply_triadic_closure(graph, config.a, closure_seed))
    graph.metadata.update(self_loops=graph.self_loops, multi_edges=graph.multi_edges)
    logger.info(
        f"Generated graph: n={graph.n}, regular={graph.m_regular}, transitive={graph.m_transitive}, "
        f"self-loops={graph.self_loops}, multi-edges={graph.multi_edges}"
    )
    return graph
