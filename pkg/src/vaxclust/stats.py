"""Rank-based two-sample tests and box-plot summaries across clusters.

The primary test is the two-sided Mann-Whitney U from midrank sums: exact
by enumeration over all C(n_a + n_b, n_a) group assignments when the pooled
sample is small (<= 20), otherwise the tie-corrected normal approximation
with continuity correction. Midranks make U a dyadic rational, so exact
enumeration compares U values without tolerance. Welch's t is computed
alongside for transparency; it is never the significance criterion.

Quartile convention (fixed, because tools disagree): linear interpolation
between order statistics at position p*(n-1), the same rule as
``numpy.quantile(..., method="linear")``. Whiskers reach the most extreme
points within 1.5*IQR of the quartiles; points beyond are outliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import stdtr

from .dataset import RURALITY_CATEGORIES, YearDataset
from .errors import EmptyGroup, EmptySample
from .hcluster import ClusterAssignment

EXACT_ENUMERATION_LIMIT = 20  # combined sample size; C(20, 10) arrangements worst case


@dataclass(frozen=True)
class TestResult:
    feature_name: str
    u_statistic: float
    z: float
    p_two_sided: float
    n_low: int
    n_high: int
    significant_at_0_05: bool
    method: str  # "exact" | "normal"


@dataclass(frozen=True)
class WelchResult:
    feature_name: str
    t_statistic: float
    dof: float
    p_two_sided: float


@dataclass(frozen=True)
class BoxStats:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled))
    i = 0
    while i < len(pooled):
        j = i
        while j + 1 < len(pooled) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _u_from_ranks(ranks_a: np.ndarray, n_a: int) -> float:
    return float(ranks_a.sum() - n_a * (n_a + 1) / 2.0)


def _normal_z(u: float, n_a: int, n_b: int, pooled: np.ndarray) -> float:
    n = n_a + n_b
    mean = n_a * n_b / 2.0
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(((counts**3 - counts)).sum()) / (n * (n - 1)) if n > 1 else 0.0
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 0.0
    diff = u - mean
    if diff > 0:
        diff -= 0.5
    elif diff < 0:
        diff += 0.5
    return diff / math.sqrt(var)


def _exact_p(u_observed: float, ranks: np.ndarray, n_a: int) -> float:
    """Two-sided exact p over all group assignments of the pooled midranks."""
    n = len(ranks)
    offset = n_a * (n_a + 1) / 2.0
    le = 0
    ge = 0
    total = 0
    for chosen in combinations(range(n), n_a):
        u = ranks[list(chosen)].sum() - offset
        total += 1
        if u <= u_observed:
            le += 1
        if u >= u_observed:
            ge += 1
    return min(1.0, 2.0 * min(le / total, ge / total))


def mann_whitney_u(sample_a, sample_b, feature_name: str = "") -> TestResult:
    """Two-sided Mann-Whitney U comparing two value samples.

    ``u_statistic`` is U for ``sample_a``; U_a + U_b = n_a * n_b always holds.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    u = _u_from_ranks(ranks[: a.size], a.size)
    z = _normal_z(u, a.size, b.size, pooled)
    if a.size + b.size <= EXACT_ENUMERATION_LIMIT:
        p = _exact_p(u, ranks, a.size)
        method = "exact"
    else:
        p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
        method = "normal"
    return TestResult(
        feature_name=feature_name,
        u_statistic=u,
        z=z,
        p_two_sided=p,
        n_low=int(a.size),
        n_high=int(b.size),
        significant_at_0_05=bool(p < 0.05),
        method=method,
    )


def welch_t(sample_a, sample_b, feature_name: str = "") -> WelchResult:
    """Welch's unequal-variance t-test, reported alongside the rank test."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise EmptySample("welch_t needs at least 2 values per sample")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    if va + vb == 0:
        equal = float(a.mean()) == float(b.mean())
        return WelchResult(feature_name, 0.0 if equal else math.inf, float(a.size + b.size - 2), 1.0 if equal else 0.0)
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    dof = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = 2.0 * float(stdtr(dof, -abs(t)))
    return WelchResult(feature_name, float(t), float(dof), min(1.0, p))


def quartiles(values) -> tuple[float, float, float]:
    """(q1, median, q3) by linear interpolation at p*(n-1)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise EmptyGroup("cannot take quartiles of an empty sample")
    q1, q2, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return float(q1), float(q2), float(q3)


def box_stats(values, grouping) -> dict[int, BoxStats]:
    """Five-number summary plus 1.5*IQR whiskers and outliers, per cluster."""
    values = np.asarray(values, dtype=np.float64)
    grouping = np.asarray(grouping)
    if values.size == 0:
        raise EmptyGroup("no values to summarize")
    out: dict[int, BoxStats] = {}
    for cluster in sorted(set(int(g) for g in grouping)):
        sample = values[grouping == cluster]
        q1, median, q3 = quartiles(sample)
        iqr = q3 - q1
        low_bound = q1 - 1.5 * iqr
        high_bound = q3 + 1.5 * iqr
        inside = sample[(sample >= low_bound) & (sample <= high_bound)]
        outliers = tuple(sorted(float(x) for x in sample[(sample < low_bound) | (sample > high_bound)]))
        out[cluster] = BoxStats(
            minimum=float(sample.min()),
            q1=q1,
            median=median,
            q3=q3,
            maximum=float(sample.max()),
            whisker_low=float(inside.min()),
            whisker_high=float(inside.max()),
            outliers=outliers,
        )
    return out


def crosstab_from_pairs(rurality_values, cluster_labels, k: int) -> np.ndarray:
    """(6, k) contingency counts; row r is rurality category r+1."""
    table = np.zeros((len(RURALITY_CATEGORIES), k), dtype=np.int64)
    for rurality, cluster in zip(rurality_values, cluster_labels):
        table[int(rurality) - 1, int(cluster)] += 1
    return table


def rurality_cross_tab(assignment: ClusterAssignment, dataset: YearDataset) -> np.ndarray:
    return crosstab_from_pairs(dataset.rurality_column(), assignment.labels, assignment.k)
