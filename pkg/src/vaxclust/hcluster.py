"""Agglomerative clustering of districts by vaccination profile.

Ward linkage is the default: merge heights are Ward merge costs, i.e. the
increase in total within-cluster sum of squares caused by a merge,

    cost(A, B) = |A|*|B| / (|A|+|B|) * ||mean(A) - mean(B)||^2

maintained through the Lance-Williams recurrence. Average and complete
linkage are available for comparison; only Ward heights carry the
sum-of-squares meaning.

All tie-breaking is by smallest (left_node, right_node) pair so reruns are
bit-identical. Leaf nodes are 0..n-1; internal nodes n..2n-2 in merge order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import StandardizedMatrix, YearDataset
from .errors import KOutOfRange, NonFiniteInput, TooFewRows

LINKAGES = ("ward", "average", "complete")

# Cluster display names, ascending mean coverage (index 0 = lowest coverage).
CLUSTER_NAME_VOCAB: dict[int, tuple[str, ...]] = {
    2: ("L", "H"),
    3: ("L", "M", "H"),
    6: ("Ls", "VL", "L", "M", "H", "Hst"),
}


@dataclass(frozen=True)
class DistanceMatrix:
    n: int
    condensed: np.ndarray  # length n*(n-1)/2, row-major upper triangle

    def get(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        if i > j:
            i, j = j, i
        return float(self.condensed[condensed_index(i, j, self.n)])


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    n_leaves: int
    merges: tuple[Merge, ...]


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: np.ndarray  # per-district cluster index, 0..k-1, ascending coverage
    ordered_names: tuple[str, ...]

    def name_of(self, label: int) -> str:
        return self.ordered_names[label]


def condensed_index(i: int, j: int, n: int) -> int:
    """Index of pair (i < j) in the condensed upper-triangular layout."""
    return n * i - (i * (i + 1)) // 2 + (j - i - 1)


def pairwise_distances(X) -> DistanceMatrix:
    """Euclidean distances between rows, condensed storage."""
    if isinstance(X, StandardizedMatrix):
        X = X.values
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise TooFewRows("pairwise_distances requires at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("distance input contains non-finite values")
    n = X.shape[0]
    sq = np.sum(X * X, axis=1)
    gram = X @ X.T
    d2 = sq[:, None] + sq[None, :] - 2.0 * gram
    np.maximum(d2, 0.0, out=d2)
    iu = np.triu_indices(n, k=1)
    return DistanceMatrix(n=n, condensed=np.sqrt(d2[iu]))


def _initial_costs(dist: DistanceMatrix, sizes: np.ndarray, linkage: str) -> np.ndarray:
    n = dist.n
    cost = np.full((n, n), np.inf)
    for i in range(n - 1):
        start = condensed_index(i, i + 1, n)
        row = dist.condensed[start : start + (n - 1 - i)]
        if linkage == "ward":
            w = sizes[i] * sizes[i + 1 :] / (sizes[i] + sizes[i + 1 :])
            cost[i, i + 1 :] = w * row * row
        else:
            cost[i, i + 1 :] = row
        cost[i + 1 :, i] = cost[i, i + 1 :]
    return cost


def agglomerate(dist: DistanceMatrix, sizes=None, linkage: str = "ward") -> Dendrogram:
    """Greedy agglomeration over a precomputed distance matrix.

    Ward merge heights are the Lance-Williams merge costs; average/complete
    heights are the corresponding cluster distances. ``sizes`` gives per-leaf
    weights (default 1 each).
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}; expected one of {LINKAGES}")
    n = dist.n
    if not np.all(np.isfinite(dist.condensed)):
        raise NonFiniteInput("distance matrix contains non-finite values")
    sizes = np.ones(n) if sizes is None else np.asarray(sizes, dtype=np.float64)

    # symmetric cost matrix indexed by slot; slot s hosts cluster node_of[s],
    # inactive slots and the diagonal are +inf
    cost = _initial_costs(dist, sizes, linkage)
    node_of = np.arange(n)
    weight = sizes.copy()
    merges: list[Merge] = []

    for step in range(n - 1):
        height = float(cost.min())
        ties = np.argwhere(cost == height)
        # smallest (left_node, right_node) pair wins; exact float ties only
        a, b = min(
            (slot_pair for slot_pair in ties if slot_pair[0] < slot_pair[1]),
            key=lambda p: (min(node_of[p[0]], node_of[p[1]]), max(node_of[p[0]], node_of[p[1]])),
        )
        wi, wj = weight[a], weight[b]
        merged = wi + wj
        ni, nj = sorted((int(node_of[a]), int(node_of[b])))
        merges.append(Merge(left=ni, right=nj, height=height, size=int(round(merged))))

        # merged cluster reuses slot a; Lance-Williams update against the rest
        others = np.isfinite(cost[a]) | np.isfinite(cost[b])
        others[a] = others[b] = False
        wc = weight[others]
        d_ic = cost[a, others]
        d_jc = cost[b, others]
        if linkage == "ward":
            new = ((wi + wc) * d_ic + (wj + wc) * d_jc - wc * height) / (merged + wc)
        elif linkage == "average":
            new = (wi * d_ic + wj * d_jc) / merged
        else:  # complete
            new = np.maximum(d_ic, d_jc)
        cost[a, others] = new
        cost[others, a] = new
        cost[b, :] = np.inf
        cost[:, b] = np.inf
        weight[a] = merged
        node_of[a] = n + step

    return Dendrogram(n_leaves=n, merges=tuple(merges))


def _members_per_node(dendro: Dendrogram) -> list[list[int]]:
    members: list[list[int]] = [[i] for i in range(dendro.n_leaves)]
    for m in dendro.merges:
        members.append(members[m.left] + members[m.right])
    return members


def cut_at_k(dendro: Dendrogram, k: int) -> np.ndarray:
    """Undo the last k-1 merges; raw labels numbered by smallest member leaf."""
    n = dendro.n_leaves
    if not 1 <= k <= n:
        raise KOutOfRange(f"k={k} not in 1..{n}")
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    members = _members_per_node(dendro)
    for m in dendro.merges[: n - k]:
        ra, rb = find(members[m.left][0]), find(members[m.right][0])
        parent[rb] = ra

    cluster_of_root: dict[int, int] = {}
    labels = np.empty(n, dtype=np.int64)
    for leaf in range(n):
        root = find(leaf)
        if root not in cluster_of_root:
            cluster_of_root[root] = len(cluster_of_root)
        labels[leaf] = cluster_of_root[root]
    return labels


def suggest_k(dendro: Dendrogram, k_min: int = 2, k_max: int = 10) -> int:
    """Smallest k whose cut crosses the largest relative jump in merge height.

    The score for k is the ratio between the first merge a k-cut undoes and
    the last merge it keeps; ties (and the degenerate all-equal case) resolve
    toward smaller k. Advisory only: it never overrides configured k values.
    """
    n = dendro.n_leaves
    if not 1 <= k_min < k_max or k_max > n - 1:
        raise KOutOfRange(f"need 1 <= k_min < k_max <= {n - 1}, got [{k_min}, {k_max}]")
    heights = [m.height for m in dendro.merges]

    def score(k: int) -> float:
        if k == 1:
            return 1.0
        above = heights[n - k]  # first merge undone by the k-cut
        below = heights[n - k - 1]  # last merge kept
        if below > 0.0:
            return above / below
        return float("inf") if above > 0.0 else 1.0

    best_k = k_min
    best = score(k_min)
    for k in range(k_min + 1, k_max + 1):
        s = score(k)
        if s > best:
            best, best_k = s, k
    return best_k


def label_by_coverage(raw_labels: np.ndarray, dataset: YearDataset, k: int) -> ClusterAssignment:
    """Renumber raw clusters by ascending mean raw coverage and attach names.

    Coverage of a cluster is the mean of all 14 raw rates over its districts.
    Equal means tie-break by smallest contained district id. k outside
    {2, 3, 6} falls back to generic names C1..Ck.
    """
    raw_labels = np.asarray(raw_labels)
    rates = dataset.vaccination_matrix()
    ids = dataset.district_ids()
    clusters = sorted(set(int(c) for c in raw_labels))
    if len(clusters) != k:
        raise KOutOfRange(f"raw labels contain {len(clusters)} clusters, expected {k}")
    keyed = []
    for c in clusters:
        mask = raw_labels == c
        coverage = float(rates[mask].mean())
        smallest_id = min(i for i, m in zip(ids, mask) if m)
        keyed.append((coverage, smallest_id, c))
    keyed.sort()
    rank_of = {c: rank for rank, (_, _, c) in enumerate(keyed)}
    labels = np.array([rank_of[int(c)] for c in raw_labels], dtype=np.int64)
    names = CLUSTER_NAME_VOCAB.get(k, tuple(f"C{i + 1}" for i in range(k)))
    return ClusterAssignment(k=k, labels=labels, ordered_names=names)


def cluster_mean_table(assignment: ClusterAssignment, dataset: YearDataset) -> np.ndarray:
    """(k, 14) arithmetic means of raw rates, rows in ascending coverage order.

    Column sums use math.fsum (correctly rounded), so a cluster of 2^m
    identical profiles reproduces that profile bit-exactly.
    """
    rates = dataset.vaccination_matrix()
    table = np.empty((assignment.k, rates.shape[1]))
    for c in range(assignment.k):
        members = rates[assignment.labels == c]
        table[c] = [math.fsum(members[:, j]) / members.shape[0] for j in range(rates.shape[1])]
    return table


def dendrogram_table(dendro: Dendrogram) -> str:
    """Standard 4-column linkage text table (left, right, height, size)."""
    lines = ["left,right,height,size"]
    for m in dendro.merges:
        lines.append(f"{m.left},{m.right},{m.height!r},{m.size}")
    return "\n".join(lines) + "\n"
