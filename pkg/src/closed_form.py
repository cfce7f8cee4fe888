"""Asymptotic closed forms for CTC graphs with one community.

Everything here is a pure function of a degree pmf, its block partition and
the parameters (a, q, h). Expectations are taken over the two ends (X, Y) of
a uniformly chosen regular edge; X' and Y' are the transitive degrees of
those ends.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.config import TOLERANCE
from src.ctc_generator import HSpec, resolve_involution
from src.degree_model import (
    BlockPartition,
    DegreeDistribution,
    SeedLike,
    block_moments,
)
from src.errors import ClosedFormError

logger = logging.getLogger(__name__)


def _involution(h: Union[HSpec, np.ndarray, None], b: int) -> np.ndarray:
    if h is None:
        return np.arange(b)
    if isinstance(h, np.ndarray):
        return resolve_involution((h + 1).tolist(), b)
    return resolve_involution(h, b)


def _close(x: float, y: float, tol: float = TOLERANCE, scale: float = 1.0) -> bool:
    """Relative comparison; ``scale`` raises the floor for results built from larger terms."""
    return abs(x - y) <= tol * max(1.0, abs(x), abs(y), abs(scale))


@dataclass(frozen=True, eq=False)
class _Blocks:
    """Block-level inputs shared by every closed form."""

    E: float
    S: float
    T: float
    u: np.ndarray
    t: np.ndarray
    h: np.ndarray

    @property
    def b(self) -> int:
        return int(self.u.size)

    @property
    def uh(self) -> np.ndarray:
        return self.u[self.h]


def _blocks(dist: DegreeDistribution, partition: BlockPartition, h) -> _Blocks:
    hh = _involution(h, partition.b)
    if partition.strict:
        u, t = block_moments(partition, dist)
        E, S, T = dist.moment1, dist.moment2, dist.moment3
        if not (_close(u.sum(), S) and _close(t.sum(), T)):
            raise ClosedFormError("partition block moments do not add up to the pmf's E[Z^2], E[Z^3]")
    else:
        u, t = partition.u.copy(), partition.t.copy()
        E, S, T = float(partition.mass.sum()), float(u.sum()), float(t.sum())
    if E <= 0:
        raise ClosedFormError("E[Z] = 0: the closed forms are undefined without stubs")
    return _Blocks(E=E, S=S, T=T, u=u, t=t, h=hh)


def effective_type1_fraction(q: float, r: float, c: int = 1) -> float:
    """With one community, type-2 and type-3 stubs are matched alike, so only q*r of stubs are block-paired."""
    if c != 1:
        raise ClosedFormError(f"closed forms cover a single community; got c={c}")
    return q * r


def conditional_mean_degree(x: int, block: int, u: Sequence[float], q: float, h, mean_degree: float) -> float:
    """g(x) = E[Y | X = x] for x in block H_i (0-based ``block``)."""
    if x < 0:
        raise ClosedFormError(f"degree must be non-negative, got {x}")
    return float(g_values(u, q, h, mean_degree)[block])


def g_values(u: Sequence[float], q: float, h, mean_degree: float) -> np.ndarray:
    """g per block: ((1-q) sum(u) + q b u_h(i)) / E[Z]."""
    u = np.asarray(u, dtype=float)
    if mean_degree <= 0:
        raise ClosedFormError("E[Z] must be positive")
    hh = _involution(h, u.size)
    return ((1.0 - q) * u.sum() + q * u.size * u[hh]) / mean_degree


class ConnectionProbability(NamedTuple):
    probability: float
    clamped: bool


def connection_probability(k_a: int, k_b: int, i: int, j: int, q: float, b: int, m: int, h=None) -> ConnectionProbability:
    """Chance that vertices of degrees k_a (block i) and k_b (block j) are joined."""
    if m < 1:
        raise ClosedFormError(f"m must be >= 1, got {m}")
    hh = _involution(h, b)
    factor = 1.0 - q + q * b if hh[i] == j else 1.0 - q
    p = factor * k_a * k_b / (2.0 * m)
    if p > 1.0:
        logger.warning(f"Connection probability {p:.4g} > 1 for degrees ({k_a}, {k_b}); clamped")
        return ConnectionProbability(1.0, True)
    return ConnectionProbability(p, False)


class WTerms(NamedTuple):
    w1: float
    w2: float
    w3: float
    w4: float
    w5: float


def w_terms(u: Sequence[float], t: Sequence[float], h=None) -> WTerms:
    """The five block sums that carry the whole dependence on h."""
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    b = u.size
    uh = u[_involution(h, b)]
    S, T = u.sum(), t.sum()
    cross = float(np.dot(u, uh))
    return WTerms(
        w1=b * cross - S * S,
        w2=b * float(np.dot(t, uh)) - S * T,
        w3=b * float(np.dot(u, u)) - S * S,
        w4=b * float(np.dot(u * u, uh)) - cross * S,
        w5=b * float(np.dot(u * u, uh * uh)) - cross * cross,
    )


class CovarianceCoefficients(NamedTuple):
    alpha0: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    beta5: float


def covariance_coefficients(a: float, q: float, b: int, moments: Tuple[float, float, float]) -> CovarianceCoefficients:
    """alpha_0 and beta_1..beta_5 with Cov(X+X', Y+Y') = alpha_0 + sum beta_i W_i."""
    E, S, T = moments
    if E <= 0:
        raise ClosedFormError("E[Z] = 0: coefficients undefined")
    s = S / E
    alpha0 = 2 * a * (a * (S - E) + E) / E ** 3 * (E * T - S * S)
    beta1 = (
        q / E ** 2
        + 2 * a * q / E ** 2 * ((1 - q) * s - 1)
        + a * a * q * (((1 - q) * S + q * E) ** 2 - 2 * (2 - q * q) * S * E) / E ** 4
    )
    beta2 = 2 * a * a * q / E ** 2
    beta3 = -2 * a * q * q / E ** 2 * ((1 - a) + a * (1 - q) * s)
    beta4 = 2 * a * q * q * b / E ** 3 * ((1 - a) - a * q + a * (1 - q) * s)
    beta5 = a * a * q ** 3 * b * b / E ** 4
    return CovarianceCoefficients(alpha0, beta1, beta2, beta3, beta4, beta5)


@dataclass(frozen=True)
class ExpectationTable:
    """Edge-end expectations; g stands for E[Y|X] (and E[X|Y] in gg terms)."""

    x: float
    x2: float
    xy: float
    x2y: float
    xg: float
    yg: float
    xg2: float
    x2g2: float
    xyg: float
    gg: float
    ygg: float
    xygg: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def expectation_table(dist: DegreeDistribution, partition: BlockPartition, q: float, h=None) -> ExpectationTable:
    """Every expectation the covariance needs, from block moments."""
    bl = _blocks(dist, partition, h)
    E, S, T, b, u, t = bl.E, bl.S, bl.T, bl.b, bl.u, bl.t
    w = w_terms(u, t, bl.h)
    cross = float(np.dot(u, bl.uh))
    th = t[bl.h]

    xy = (S * S + q * w.w1) / E ** 2
    gsq = (S * S + q * q * w.w3) / E ** 2
    xg2 = (S ** 3 + (2 * q - q * q) * S * w.w1 + q * q * b * w.w4) / E ** 3
    x2g2 = (
        (1 - q) ** 2 * S * S * T
        + 2 * (1 - q) * q * b * S * float(np.dot(u, th))
        + q * q * b * b * float(np.dot(u * u, th))
    ) / E ** 3
    # the same sum written with t_i and u_h(i); equal because h is an involution
    x2g2_swapped = (
        (1 - q) ** 2 * S * S * T
        + 2 * (1 - q) * q * b * S * float(np.dot(t, bl.uh))
        + q * q * b * b * float(np.dot(t, bl.uh ** 2))
    ) / E ** 3
    if not _close(x2g2, x2g2_swapped):
        raise ClosedFormError("E[X^2 g(X)^2] differs between its two index orders")

    return ExpectationTable(
        x=S / E,
        x2=T / E,
        xy=xy,
        x2y=(S * T + q * w.w2) / E ** 2,
        xg=xy,
        yg=gsq,
        xg2=xg2,
        x2g2=x2g2,
        xyg=xg2,
        gg=(S * S + q ** 3 * w.w1) / E ** 2,
        ygg=(S ** 3 + q * S * w.w1 + (1 - q) * q * q * S * w.w3 + q ** 3 * b * w.w4) / E ** 3,
        xygg=(
            S ** 4
            + (3 * q - 2 * q * q + q ** 3) * S * S * w.w1
            + q * q * w.w1 ** 2
            + 2 * q * q * (1 - q) * b * S * w.w4
            + q ** 3 * b * b * w.w5
        ) / E ** 4,
    )


def marginal_pmf(dist: DegreeDistribution) -> Dict[int, float]:
    """P(X = x) = x p_x / E[Z] for the end of a random edge."""
    if dist.moment1 <= 0:
        raise ClosedFormError("E[Z] = 0: no edge ends")
    return {k: k * p / dist.moment1 for k, p in dist.probabilities.items() if k > 0}


def _support(dist: DegreeDistribution, partition: BlockPartition) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not partition.strict or not partition.disjoint():
        raise ClosedFormError("exact pmfs need a strict partition with disjoint degree sets")
    ks = np.array([k for k in dist.probabilities if k > 0], dtype=np.int64)
    weights = np.array([k * dist.p(k) for k in ks])
    blocks = np.array([partition.block_of_degree(k) for k in ks], dtype=np.int64)
    return ks, weights, blocks


def _pair_factor(bx: np.ndarray, by: np.ndarray, q: float, b: int, hh: np.ndarray) -> np.ndarray:
    return (1.0 - q) + q * b * (by[None, :] == hh[bx][:, None])


def conditional_pmf(x: int, dist: DegreeDistribution, partition: BlockPartition, q: float, h=None) -> Dict[int, float]:
    """P(Y = y | X = x) = c_ij y p_y / E[Z], c_ij = 1 - q + q b [j = h(i)]."""
    ks, weights, blocks = _support(dist, partition)
    hh = _involution(h, partition.b)
    i = partition.block_of_degree(x)
    factor = _pair_factor(np.array([i]), blocks, q, partition.b, hh)[0]
    probs = factor * weights / dist.moment1
    return dict(zip(ks.tolist(), probs.tolist()))


def joint_pmf(dist: DegreeDistribution, partition: BlockPartition, q: float, h=None) -> pd.DataFrame:
    """Joint law of (X, Y) as rows x, y, block_x, block_y, probability."""
    ks, weights, blocks = _support(dist, partition)
    hh = _involution(h, partition.b)
    probs = _pair_factor(blocks, blocks, q, partition.b, hh) * np.outer(weights, weights) / dist.moment1 ** 2
    xi, yi = np.meshgrid(np.arange(ks.size), np.arange(ks.size), indexing="ij")
    return pd.DataFrame(
        {
            "x": ks[xi.ravel()],
            "y": ks[yi.ravel()],
            "block_x": blocks[xi.ravel()],
            "block_y": blocks[yi.ravel()],
            "probability": probs.ravel(),
        }
    )


def enumerate_expectation_table(dist: DegreeDistribution, partition: BlockPartition, q: float, h=None) -> ExpectationTable:
    """Brute-force counterpart of expectation_table: sum over the joint pmf."""
    joint = joint_pmf(dist, partition, q, h)
    p = joint["probability"].to_numpy()
    x = joint["x"].to_numpy(dtype=float)
    y = joint["y"].to_numpy(dtype=float)
    ey = {
        int(xv): math.fsum(group["probability"] * group["y"]) / math.fsum(group["probability"])
        for xv, group in joint.groupby("x")
    }
    gx = np.array([ey[int(v)] for v in joint["x"]])
    gy = np.array([ey[int(v)] for v in joint["y"]])

    def mean(values: np.ndarray) -> float:
        return math.fsum(p * values)

    return ExpectationTable(
        x=mean(x),
        x2=mean(x * x),
        xy=mean(x * y),
        x2y=mean(x * x * y),
        xg=mean(x * gx),
        yg=mean(y * gx),
        xg2=mean(x * gx * gx),
        x2g2=mean(x * x * gx * gx),
        xyg=mean(x * y * gx),
        gg=mean(gx * gy),
        ygg=mean(y * gx * gy),
        xygg=mean(x * y * gx * gy),
    )


@dataclass(frozen=True)
class TransitiveExpectations:
    xp: float
    xp_y: float
    xp_yp: float
    x_xp: float
    xp_sq: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def transitive_expectations(table: ExpectationTable, a: float) -> TransitiveExpectations:
    """Moments involving the transitive degrees X', Y' (one closure trial per wedge)."""
    ex, ey = table.x, table.x
    first = a * a * table.yg + (a - 3 * a * a) * ey + 2 * a * a - a
    second = 2 * a * a * (-2 * table.xy + 3 * ex + table.xyg - table.yg - 1)
    third = a * (table.xy - 2 * ex + 1) + a * a * (
        -table.x2y + 3 * table.xy - 2 * ey + table.x2g2 - 3 * table.xg2 + 2 * table.yg
    )
    return TransitiveExpectations(
        xp=a * (table.xy - ex),
        xp_y=a * (table.x2 - table.xy + table.xyg - table.yg),
        xp_yp=a * a * (
            -2 * table.x2
            + 2 * table.x2y
            - 2 * table.xyg
            + 2 * table.yg
            + table.gg
            - 2 * table.ygg
            + table.xygg
        ),
        x_xp=a * (table.x2y - table.x2),
        xp_sq=first + second + third,
    )


def covariance_assembled(table: ExpectationTable, trans: TransitiveExpectations) -> float:
    """Cov(X+X', Y+Y') from its four bracketed differences."""
    return (
        (table.xy - table.x ** 2)
        + 2 * (trans.xp_y - trans.xp * table.x)
        + (trans.xp_yp - trans.xp ** 2)
    )


def variance_assembled(table: ExpectationTable, trans: TransitiveExpectations) -> float:
    return (
        table.x2 - table.x ** 2
        + 2 * (trans.x_xp - table.x * trans.xp)
        + trans.xp_sq - trans.xp ** 2
    )


def _covariance_closed(bl: _Blocks, a: float, q: float) -> Tuple[float, WTerms, CovarianceCoefficients]:
    w = w_terms(bl.u, bl.t, bl.h)
    coef = covariance_coefficients(a, q, bl.b, (bl.E, bl.S, bl.T))
    value = coef.alpha0 + sum(beta * wi for beta, wi in zip(coef[1:], w))
    return value, w, coef


def covariance_total(dist: DegreeDistribution, partition: BlockPartition, a: float, q: float, h=None) -> float:
    """Cov(X+X', Y+Y') = alpha_0 + sum beta_i W_i, checked against the assembled expectations."""
    bl = _blocks(dist, partition, h)
    value, _, _ = _covariance_closed(bl, a, q)
    table = expectation_table(dist, partition, q, h)
    assembled = covariance_assembled(table, transitive_expectations(table, a))
    # the assembled path subtracts fourth-order moments
    if not _close(value, assembled, scale=table.x2):
        raise ClosedFormError(f"covariance paths disagree: {value!r} vs {assembled!r}")
    return value


def variance_total(dist: DegreeDistribution, partition: BlockPartition, a: float, q: float, h=None) -> float:
    table = expectation_table(dist, partition, q, h)
    var = variance_assembled(table, transitive_expectations(table, a))
    if var < -TOLERANCE * max(1.0, table.x2):
        raise ClosedFormError(f"negative variance {var!r}")
    return max(var, 0.0)


def pearson_correlation(dist: DegreeDistribution, partition: BlockPartition, a: float, q: float, h=None) -> float:
    """rho = Cov / Var; both edge ends share one variance by symmetry."""
    var = variance_total(dist, partition, a, q, h)
    if var <= TOLERANCE:
        raise ClosedFormError("Var(X+X') is zero; correlation undefined")
    return covariance_total(dist, partition, a, q, h) / var


class Decomposition(NamedTuple):
    d1: float
    d2: float
    d3: float
    d4: float
    d5: float
    d6: float
    d7: float


def theorem1_decomposition(dist: DegreeDistribution, partition: BlockPartition, a: float, q: float, h=None) -> Decomposition:
    """Split the covariance into seven terms, each non-negative when h is the identity."""
    bl = _blocks(dist, partition, h)
    E, S, T, b = bl.E, bl.S, bl.T, bl.b
    w = w_terms(bl.u, bl.t, bl.h)
    K = E * T - S * S
    d1 = q * w.w1 / E ** 2
    d2 = (
        2 * a * a * S / E ** 3 * K
        - 2 * a * a * q * S / E ** 3 * w.w1
        + 2 * a * q * (1 - q) * S / E ** 3 * w.w1
        - 2 * a * a * q * (1 - q) * S / E ** 3 * w.w1
    )
    d3 = 2 * a * (1 - a) / E ** 2 * K + 2 * a * a * q / E ** 2 * w.w2 - 2 * a * q / E ** 2 * w.w1
    d4 = a * a * q * (1 - q) ** 2 * S * S / E ** 4 * w.w1
    d5 = a * a * q ** 3 / E ** 2 * w.w1
    d6 = 2 * a * q * q * b / E ** 3 * (1 - a + a * (1 - q) * S / E) * (w.w4 - (E / b) * w.w3)
    d7 = a * a * q ** 3 * b * b / E ** 4 * (w.w5 - 2 * (E / b) * w.w4)
    return Decomposition(d1, d2, d3, d4, d5, d6, d7)


def local_clustering_coefficient(k: int, kprime: int, a: float) -> float:
    """Expected local clustering of a vertex with regular degree k and transitive degree k'."""
    if k < 0 or kprime < 0:
        raise ClosedFormError(f"degrees must be non-negative, got ({k}, {kprime})")
    if k == 0 or k + kprime <= 1:
        return 0.0
    closed = math.comb(k, 2) * a + kprime + math.comb(kprime, 2) * a / k
    return closed / math.comb(k + kprime, 2)


def predicted_clustering_table(cells: Iterable[Tuple[int, int]], a: float) -> pd.DataFrame:
    rows = [(int(k), int(kp), local_clustering_coefficient(int(k), int(kp), a)) for k, kp in cells]
    return pd.DataFrame(rows, columns=["k", "kprime", "predicted"])


def random_strict_distribution(
    b: int,
    seed: SeedLike = None,
    max_per_block: int = 3,
    max_degree: int = 30,
) -> DegreeDistribution:
    """Random pmf whose degree-sorted stub mass splits exactly into b blocks.

    Each block gets 1..max_per_block distinct ascending degrees and the same
    stub mass sum k p_k.
    """
    rng = np.random.default_rng(seed)
    counts = rng.integers(1, max_per_block + 1, size=b)
    if counts.sum() > max_degree:
        raise ClosedFormError(f"cannot place {counts.sum()} distinct degrees below {max_degree}")
    degrees = np.sort(rng.choice(np.arange(1, max_degree + 1), size=int(counts.sum()), replace=False))
    shares = np.concatenate([rng.dirichlet(np.ones(c)) for c in counts])
    # stub mass k p_k = C * share / b inside each block
    raw = shares / (b * degrees)
    probs = raw / raw.sum()
    return DegreeDistribution.from_mapping(dict(zip(degrees.tolist(), probs.tolist())))


@dataclass
class AnalyticReport:
    """Every closed-form quantity for one parameter point."""

    params: Dict[str, Any]
    moments: Dict[str, float]
    u: List[float]
    t: List[float]
    w: Dict[str, float]
    coefficients: Dict[str, float]
    decomposition: Dict[str, float]
    expectations: Dict[str, float]
    transitive: Dict[str, float]
    covariance: float
    covariance_assembled: float
    regular_covariance: float
    variance: float
    correlation: Optional[float]
    clustering: List[Dict[str, float]] = field(default_factory=list)
    strict: bool = True
    straddles: List[bool] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def analyze(
    dist: DegreeDistribution,
    partition: BlockPartition,
    a: float,
    q: float,
    h=None,
    r: float = 1.0,
    c: int = 1,
) -> AnalyticReport:
    """Full report at one point; q is replaced by q*r for the closed forms."""
    q_eff = effective_type1_fraction(q, r, c)
    if not partition.strict:
        logger.warning("Closed forms evaluated on a relaxed partition; block stub masses are only approximately equal")
    bl = _blocks(dist, partition, h)
    table = expectation_table(dist, partition, q_eff, bl.h)
    trans = transitive_expectations(table, a)
    cov, w, coef = _covariance_closed(bl, a, q_eff)
    cov_assembled = covariance_assembled(table, trans)
    if not _close(cov, cov_assembled, scale=table.x2):
        raise ClosedFormError(f"covariance paths disagree: {cov!r} vs {cov_assembled!r}")
    decomposition = theorem1_decomposition(dist, partition, a, q_eff, bl.h)
    if not _close(sum(decomposition), cov, scale=table.x2):
        raise ClosedFormError(f"decomposition sums to {sum(decomposition)!r}, covariance is {cov!r}")
    var = max(variance_assembled(table, trans), 0.0)
    correlation = cov / var if var > TOLERANCE else None
    if correlation is None:
        logger.warning("Var(X+X') is zero; correlation left undefined")

    g = g_values(bl.u, q_eff, bl.h, bl.E)
    clustering = []
    for k in dist.probabilities:
        if k <= 0:
            continue
        kprime = a * k * (g[partition.block_of_degree(k)] - 1.0)
        clustering.append(
            {"k": k, "kprime_mean": kprime, "predicted": local_clustering_coefficient(k, int(round(kprime)), a)}
        )

    return AnalyticReport(
        params={"a": a, "q": q, "r": r, "c": c, "q_eff": q_eff, "b": bl.b, "h": (bl.h + 1).tolist()},
        moments={"E[Z]": bl.E, "E[Z^2]": bl.S, "E[Z^3]": bl.T},
        u=bl.u.tolist(),
        t=bl.t.tolist(),
        w=w._asdict(),
        coefficients=coef._asdict(),
        decomposition=decomposition._asdict(),
        expectations=table.to_dict(),
        transitive=trans.to_dict(),
        covariance=cov,
        covariance_assembled=cov_assembled,
        regular_covariance=decomposition.d1,
        variance=var,
        correlation=correlation,
        clustering=clustering,
        strict=partition.strict,
        straddles=list(partition.straddles),
    )


SWEEP_KEYS = ("a", "q", "r")


def sweep(
    dist: DegreeDistribution,
    partition: BlockPartition,
    key: str,
    values: Sequence[float],
    a: float,
    q: float,
    h=None,
    r: float = 1.0,
) -> pd.DataFrame:
    """Covariance, variance and correlation along one of a, q or r."""
    if key not in SWEEP_KEYS:
        raise ClosedFormError(f"cannot sweep {key!r}; choose one of {', '.join(SWEEP_KEYS)}")
    rows = []
    for value in values:
        point = {"a": a, "q": q, "r": r, key: float(value)}
        report = analyze(dist, partition, point["a"], point["q"], h, point["r"])
        rows.append(
            {
                key: float(value),
                "covariance": report.covariance,
                "regular_covariance": report.regular_covariance,
                "variance": report.variance,
                "correlation": report.correlation,
            }
        )
    return pd.DataFrame(rows)
