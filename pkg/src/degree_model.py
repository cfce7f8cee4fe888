"""Degree sequences, degree pmfs and the even block partition of stubs."""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import TOLERANCE
from src.errors import Assumption1Violation, DistributionError, PartitionError

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

PMF_TOLERANCE = 1e-12


@dataclass(frozen=True)
class DegreeDistribution:
    """A degree pmf {p_k} with its first three raw moments."""

    probabilities: Dict[int, float]
    moment1: float
    moment2: float
    moment3: float

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float]) -> "DegreeDistribution":
        """Validate a k -> p_k mapping and compute its moments.

        Zero-probability entries are dropped. Raises DistributionError when a
        degree or probability is negative or the masses do not sum to 1.
        """
        if not mapping:
            raise DistributionError("pmf is empty")
        probabilities: Dict[int, float] = {}
        for k, p in sorted(mapping.items()):
            k_int = int(k)
            if k_int != k or k_int < 0:
                raise DistributionError(f"degree {k} is not a non-negative integer")
            p_float = float(p)
            if p_float < 0 or math.isnan(p_float):
                raise DistributionError(f"p_{k_int} = {p_float} is negative")
            if p_float > 0:
                probabilities[k_int] = probabilities.get(k_int, 0.0) + p_float
        total = math.fsum(probabilities.values())
        if abs(total - 1.0) > PMF_TOLERANCE:
            raise DistributionError(f"pmf sums to {total!r}, expected 1")
        ks = np.array(list(probabilities), dtype=float)
        ps = np.array(list(probabilities.values()), dtype=float)
        m1, m2, m3 = (math.fsum(ks ** i * ps) for i in (1, 2, 3))
        if m1 * m3 < m2 * m2 - TOLERANCE * max(1.0, m2 * m2):
            raise DistributionError("moments violate E[Z]E[Z^3] >= E[Z^2]^2")
        return cls(probabilities=probabilities, moment1=m1, moment2=m2, moment3=m3)

    @property
    def degrees(self) -> np.ndarray:
        return np.fromiter(self.probabilities.keys(), dtype=np.int64)

    @property
    def masses(self) -> np.ndarray:
        return np.fromiter(self.probabilities.values(), dtype=float)

    def p(self, k: int) -> float:
        return self.probabilities.get(int(k), 0.0)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.masses)


@dataclass(frozen=True, eq=False)
class DegreeSequence:
    """Per-community degree lists; vertex ids are assigned community by community."""

    communities: Tuple[np.ndarray, ...]
    repaired_vertices: Tuple[int, ...] = ()

    def __post_init__(self):
        if not self.communities:
            raise DistributionError("degree sequence has no communities")
        for i, degs in enumerate(self.communities):
            if degs.ndim != 1:
                raise DistributionError(f"community {i} degrees must be one-dimensional")
            if degs.size and degs.min() < 0:
                raise DistributionError(f"community {i} has a negative degree")

    @classmethod
    def from_lists(
        cls,
        lists: Iterable[Sequence[int]],
        seed: SeedLike = None,
        repair: bool = True,
    ) -> "DegreeSequence":
        """Build a sequence, incrementing one random vertex per odd community."""
        arrays = [np.asarray(list(degs), dtype=np.int64) for degs in lists]
        if not repair:
            return cls(communities=tuple(arrays))
        rng = np.random.default_rng(seed)
        return _repair_parity(arrays, rng)

    @property
    def degrees(self) -> np.ndarray:
        return np.concatenate(self.communities) if self.communities else np.zeros(0, dtype=np.int64)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(int(d.size) for d in self.communities)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)

    @property
    def stub_counts(self) -> Tuple[int, ...]:
        """2 m_i per community."""
        return tuple(int(d.sum()) for d in self.communities)

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    @property
    def m(self) -> int:
        return int(sum(self.stub_counts) // 2)

    @property
    def community_of_vertex(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.communities)), self.sizes)


def _repair_parity(arrays: List[np.ndarray], rng: np.random.Generator) -> DegreeSequence:
    repaired = []
    offset = 0
    for i, degs in enumerate(arrays):
        if degs.size and degs.sum() % 2 == 1:
            j = int(rng.integers(degs.size))
            degs[j] += 1
            repaired.append(offset + j)
            logger.debug(f"Parity repair: community {i} vertex {offset + j} -> degree {degs[j]}")
        offset += degs.size
    return DegreeSequence(communities=tuple(arrays), repaired_vertices=tuple(repaired))


def pmf_from_sequence(degrees: Union[DegreeSequence, Sequence[int], np.ndarray]) -> DegreeDistribution:
    """Empirical pmf p_k = (count of degree k) / n."""
    values = degrees.degrees if isinstance(degrees, DegreeSequence) else np.asarray(degrees, dtype=np.int64)
    if values.size == 0:
        raise DistributionError("cannot build a pmf from an empty degree sequence")
    ks, counts = np.unique(values, return_counts=True)
    n = values.size
    return DegreeDistribution.from_mapping({int(k): c / n for k, c in zip(ks, counts)})


def distribution_moments(dist: DegreeDistribution) -> Tuple[float, float, float]:
    """(E[Z], E[Z^2], E[Z^3])."""
    return dist.moment1, dist.moment2, dist.moment3


def truncated_power_law(gamma: float, kmin: int, kmax: int) -> DegreeDistribution:
    """p_k proportional to k^-gamma on kmin..kmax."""
    _check_power_law_args(gamma, kmin, kmax)
    ks = np.arange(kmin, kmax + 1)
    weights = ks.astype(float) ** (-gamma)
    weights /= weights.sum()
    # renormalize on the fsum so the 1e-12 check holds for long supports
    weights /= math.fsum(weights)
    return DegreeDistribution.from_mapping(dict(zip(ks.tolist(), weights.tolist())))


def _check_power_law_args(gamma: float, kmin: int, kmax: int):
    if gamma <= 1:
        raise DistributionError(f"gamma must be > 1, got {gamma}")
    if kmin < 1:
        raise DistributionError(f"kmin must be >= 1, got {kmin}")
    if kmin > kmax:
        raise DistributionError(f"kmin={kmin} exceeds kmax={kmax}")


def sample_from_distribution(
    dist: DegreeDistribution,
    community_sizes: Sequence[int],
    seed: SeedLike = None,
) -> DegreeSequence:
    """Draw i.i.d. degrees by inverse CDF, then repair odd communities."""
    if not community_sizes or any(s < 1 for s in community_sizes):
        raise DistributionError(f"community sizes must be positive, got {list(community_sizes)}")
    rng = np.random.default_rng(seed)
    support = dist.degrees
    cdf = dist.cdf()
    total = int(sum(community_sizes))
    idx = np.searchsorted(cdf, rng.random(total), side="right")
    draws = support[np.minimum(idx, support.size - 1)]
    bounds = np.cumsum(community_sizes)[:-1]
    return _repair_parity([chunk.copy() for chunk in np.split(draws, bounds)], rng)


def sample_power_law_sequence(
    n: int,
    gamma: float,
    kmin: int,
    kmax: Optional[int] = None,
    seed: SeedLike = None,
    community_sizes: Optional[Sequence[int]] = None,
) -> DegreeSequence:
    """Sample a power-law degree sequence; kmax defaults to n - 1."""
    if n < 1:
        raise DistributionError(f"n must be >= 1, got {n}")
    kmax = n - 1 if kmax is None else kmax
    _check_power_law_args(gamma, kmin, kmax)
    sizes = list(community_sizes) if community_sizes else [n]
    if sum(sizes) != n:
        raise DistributionError(f"community sizes sum to {sum(sizes)}, expected n={n}")
    dist = truncated_power_law(gamma, kmin, kmax)
    logger.debug(f"Sampling {n} degrees from power law gamma={gamma} on [{kmin}, {kmax}]")
    return sample_from_distribution(dist, sizes, seed)


@dataclass(frozen=True, eq=False)
class CommunityBlocks:
    """Degree-sorted stubs of one community split into b contiguous blocks."""

    community: int
    stub_vertex: np.ndarray
    stub_slot: np.ndarray
    stub_block: np.ndarray
    block_sizes: Tuple[int, ...]
    degree_sets: Tuple[FrozenSet[int], ...]
    straddles: Tuple[bool, ...]

    def block_stubs(self, block: int) -> np.ndarray:
        """Indices (into stub_vertex) of the stubs in a block."""
        start = int(sum(self.block_sizes[:block]))
        return np.arange(start, start + self.block_sizes[block])


@dataclass(frozen=True, eq=False)
class BlockPartition:
    """Blocks H_1..H_b with their moments u_i, t_i and stub masses.

    ``communities`` is empty for a partition built directly from a pmf.
    ``mass[i]`` is the block's share of sum k p_k, i.e. E[Z]/b for a strict
    partition.
    """

    b: int
    strict: bool
    degree_sets: Tuple[FrozenSet[int], ...]
    u: np.ndarray
    t: np.ndarray
    mass: np.ndarray
    straddles: Tuple[bool, ...]
    communities: Tuple[CommunityBlocks, ...] = field(default=())

    @property
    def z(self) -> float:
        """Per-block stub mass E[Z]/b."""
        return float(self.mass.sum() / self.b)

    def block_of_degree(self, k: int) -> int:
        for i, degs in enumerate(self.degree_sets):
            if int(k) in degs:
                return i
        raise PartitionError(f"degree {k} is not in any block")

    def disjoint(self) -> bool:
        seen: set = set()
        for degs in self.degree_sets:
            if seen & degs:
                return False
            seen |= degs
        return True


def partition_into_blocks(degrees: DegreeSequence, b: int, strict: bool = False) -> BlockPartition:
    """Sort each community's stubs by degree and split them into b chunks.

    Chunk sizes differ by at most one. Strict mode requires 2 m_i divisible
    by b and no degree value on both sides of a boundary.
    The pooled u_i, t_i are stub masses: each stub of a degree-k vertex adds
    k / n to u_i and k^2 / n to t_i, which equals sum_{k in H_i} k^2 p_k for
    the empirical pmf whenever the split is strict.
    """
    if b < 1:
        raise PartitionError(f"b must be >= 1, got {b}")
    n = degrees.n
    if n == 0:
        raise PartitionError("cannot partition an empty degree sequence")
    u = np.zeros(b)
    t = np.zeros(b)
    mass = np.zeros(b)
    pooled_sets: List[set] = [set() for _ in range(b)]
    pooled_straddles = [False] * (b - 1)
    blocks = []
    offsets = degrees.offsets
    for ci, degs in enumerate(degrees.communities):
        cb = _split_community(ci, degs, int(offsets[ci]), b, strict)
        blocks.append(cb)
        stub_degree = degrees.degrees[cb.stub_vertex].astype(float)
        np.add.at(u, cb.stub_block, stub_degree / n)
        np.add.at(t, cb.stub_block, stub_degree ** 2 / n)
        np.add.at(mass, cb.stub_block, 1.0 / n)
        for i, degs_i in enumerate(cb.degree_sets):
            pooled_sets[i] |= degs_i
        pooled_straddles = [x or y for x, y in zip(pooled_straddles, cb.straddles)]

    partition = BlockPartition(
        b=b,
        strict=strict,
        degree_sets=tuple(frozenset(s) for s in pooled_sets),
        u=u,
        t=t,
        mass=mass,
        straddles=tuple(pooled_straddles),
        communities=tuple(blocks),
    )
    if strict:
        assert_ascending_blocks(partition)
    elif any(pooled_straddles):
        logger.debug(f"Relaxed partition: straddled boundaries {[i + 1 for i, s in enumerate(pooled_straddles) if s]}")
    return partition


def _split_community(ci: int, degs: np.ndarray, offset: int, b: int, strict: bool) -> CommunityBlocks:
    total = int(degs.sum())
    if strict and total % b:
        raise PartitionError(f"community {ci}: 2m_i={total} is not divisible by b={b}")
    order = np.argsort(degs, kind="stable")
    sorted_degs = degs[order]
    stub_vertex = np.repeat(order + offset, sorted_degs)
    starts = np.repeat(np.cumsum(sorted_degs) - sorted_degs, sorted_degs)
    stub_slot = np.arange(total) - starts
    stub_degree = np.repeat(sorted_degs, sorted_degs)
    sizes = [len(chunk) for chunk in np.array_split(np.arange(total), b)]
    stub_block = np.repeat(np.arange(b), sizes)

    straddles = []
    ends = np.cumsum(sizes)
    for j in range(b - 1):
        end = int(ends[j])
        crossing = 0 < end < total and sizes[j] > 0 and stub_degree[end - 1] == stub_degree[end]
        if crossing and strict:
            raise Assumption1Violation(degree=int(stub_degree[end]), boundary=j + 1, community=ci)
        straddles.append(bool(crossing))

    degree_sets = tuple(
        frozenset(np.unique(stub_degree[stub_block == j]).tolist()) for j in range(b)
    )
    return CommunityBlocks(
        community=ci,
        stub_vertex=stub_vertex,
        stub_slot=stub_slot,
        stub_block=stub_block,
        block_sizes=tuple(sizes),
        degree_sets=degree_sets,
        straddles=tuple(straddles),
    )


def partition_distribution(dist: DegreeDistribution, b: int, strict: bool = True) -> BlockPartition:
    """Split the stub mass sum k p_k of a pmf into b ascending blocks of mass E[Z]/b.

    Strict mode raises Assumption1Violation when a degree's mass would have
    to cross a block boundary. Relaxed mode splits that degree's mass
    fractionally between the neighbouring blocks and flags the boundary.
    """
    if b < 1:
        raise PartitionError(f"b must be >= 1, got {b}")
    if dist.moment1 <= 0:
        raise PartitionError("pmf has no stubs (E[Z] = 0)")
    target = dist.moment1 / b
    slack = TOLERANCE * max(1.0, dist.moment1)
    u = np.zeros(b)
    t = np.zeros(b)
    mass = np.zeros(b)
    sets: List[set] = [set() for _ in range(b)]
    straddles = [False] * (b - 1)

    blk = 0
    for k, p in dist.probabilities.items():
        w = k * p
        if w <= 0:
            sets[0].add(k)
            continue
        remaining = w
        placed_in = []
        while remaining > slack or not placed_in:
            room = math.inf if blk == b - 1 else target - mass[blk]
            if room <= slack:
                blk += 1
                continue
            take = remaining if remaining - room <= slack else room
            if take < remaining and strict:
                raise Assumption1Violation(degree=k, boundary=blk + 1)
            u[blk] += k * take
            t[blk] += k * k * take
            mass[blk] += take
            sets[blk].add(k)
            placed_in.append(blk)
            remaining -= take
        for lo, hi in zip(placed_in, placed_in[1:]):
            straddles[lo] = True

    if strict:
        for i, block_mass in enumerate(mass):
            if abs(block_mass - target) > slack:
                raise PartitionError(
                    f"block {i + 1} holds stub mass {block_mass:.12g}, expected E[Z]/b={target:.12g}"
                )
    partition = BlockPartition(
        b=b,
        strict=strict,
        degree_sets=tuple(frozenset(s) for s in sets),
        u=u,
        t=t,
        mass=mass,
        straddles=tuple(straddles),
    )
    if strict:
        assert_ascending_blocks(partition)
    return partition


def block_moments(partition: BlockPartition, dist: Optional[DegreeDistribution] = None) -> Tuple[np.ndarray, np.ndarray]:
    """u_i = sum_{k in H_i} k^2 p_k and t_i = sum_{k in H_i} k^3 p_k.

    With a strict, disjoint partition and a pmf, the sums run over the pmf;
    otherwise the partition's own stub-mass moments are returned.
    """
    if dist is None or not partition.strict or not partition.disjoint():
        return partition.u.copy(), partition.t.copy()
    u = np.zeros(partition.b)
    t = np.zeros(partition.b)
    target = dist.moment1 / partition.b
    for i, degs in enumerate(partition.degree_sets):
        ks = np.array(sorted(degs), dtype=float)
        ps = np.array([dist.p(k) for k in sorted(degs)])
        block_mass = math.fsum(ks * ps)
        if abs(block_mass - target) > TOLERANCE * max(1.0, dist.moment1):
            raise PartitionError(
                f"block {i + 1}: sum k p_k = {block_mass:.12g} under this pmf, expected E[Z]/b={target:.12g}"
            )
        u[i] = math.fsum(ks ** 2 * ps)
        t[i] = math.fsum(ks ** 3 * ps)
    return u, t


def assert_ascending_blocks(partition: BlockPartition, tol: float = TOLERANCE):
    """Check the non-decreasing block sequences guaranteed by an ascending even split."""
    u, t, z = partition.u, partition.t, partition.z
    sequences = {
        "u": u,
        "t": t,
        "t-u": t - u,
        "u^2": u ** 2,
        "u(u-z)": u * (u - z),
        "u(u-2z)": u * (u - 2 * z),
    }
    for name, seq in sequences.items():
        steps = np.diff(seq)
        scale = max(1.0, float(np.abs(seq).max(initial=0.0)))
        if steps.size and steps.min() < -tol * scale:
            raise PartitionError(f"block sequence {name} is not non-decreasing: {seq.tolist()}")
