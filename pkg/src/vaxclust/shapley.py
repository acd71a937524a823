"""Exact Shapley attribution for the boosted oblivious-tree ensembles.

Two independent routes to the same quantity:

* :func:`tree_shap` — the exact polynomial-time algorithm (path-dependent
  variant). Conditional expectations for features outside a coalition follow
  the training-cover proportions stored on each tree, so no background
  dataset is needed.
* :func:`brute_force_shapley` — the definition, verbatim: for every feature,
  the factorially-weighted average of marginal contributions over all
  feature subsets, with the same cover-based conditional expectation. Only
  viable for small feature counts; exists to cross-check the fast path.

Both operate in margin space, per output column (one column for binary
models, one per class for multiclass). Attributions are additive across
trees and satisfy local accuracy: sum(phi) + base == margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySample, FeatureArityMismatch, MissingCover, TooManyFeatures
from .gbdt import ObliviousTree, TreeEnsemble


@dataclass(frozen=True)
class Attribution:
    phi: np.ndarray  # (n_outputs, n_features), margin space
    base: np.ndarray  # (n_outputs,) cover-weighted expected margin


@dataclass(frozen=True)
class GlobalImportance:
    """Mean |phi| per source feature over a sample (and over output columns).

    Encoded columns derived from one categorical feature are collapsed back
    onto it by summing their |phi| before averaging, so a categorical
    predictor appears once in rankings.
    """

    feature_names: tuple[str, ...]
    values: np.ndarray  # (n_source_features,)

    def ranking(self) -> list[tuple[str, float]]:
        order = sorted(range(len(self.values)), key=lambda j: (-self.values[j], j))
        return [(self.feature_names[j], float(self.values[j])) for j in order]


class _TreeArrays:
    """Binary-tree form of one oblivious tree, shrinkage folded into values.

    Heap layout: node i has children 2i+1 / 2i+2; right child means
    feature > threshold. Internal values are cover-weighted child means so
    values[0] is the tree's expected output over the training distribution.
    """

    __slots__ = ("feature", "threshold", "left", "right", "values", "cover", "class_index")

    def __init__(self, tree: ObliviousTree, learning_rate: float):
        levels = tree.n_levels
        if tree.leaf_cover is None or int(np.sum(tree.leaf_cover)) <= 0:
            raise MissingCover("tree has no populated leaf_cover")
        n_nodes = (1 << (levels + 1)) - 1
        n_internal = (1 << levels) - 1
        self.class_index = tree.class_index
        self.feature = np.full(n_nodes, -1, dtype=np.int64)
        self.threshold = np.zeros(n_nodes)
        self.left = np.full(n_nodes, -1, dtype=np.int64)
        self.right = np.full(n_nodes, -1, dtype=np.int64)
        self.values = np.zeros(n_nodes)
        self.cover = np.zeros(n_nodes)

        for node in range(n_internal):
            level = (node + 1).bit_length() - 1
            f, t = tree.splits[level]
            self.feature[node] = f
            self.threshold[node] = t
            self.left[node] = 2 * node + 1
            self.right[node] = 2 * node + 2

        # leaf heap position encodes level decisions MSB-first; the oblivious
        # leaf index uses bit l for level l
        for leaf in range(1 << levels):
            pos = 0
            for level in range(levels):
                bit = (leaf >> level) & 1
                pos = 2 * pos + 1 + bit
            self.values[pos] = learning_rate * float(tree.leaf_values[leaf])
            self.cover[pos] = float(tree.leaf_cover[leaf])

        for node in range(n_internal - 1, -1, -1):
            l, r = self.left[node], self.right[node]
            w = self.cover[l] + self.cover[r]
            self.cover[node] = w
            if w > 0:
                self.values[node] = (
                    self.cover[l] * self.values[l] + self.cover[r] * self.values[r]
                ) / w

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0


class TreeShapExplainer:
    """Per-tree arrays built once; attributions cached per decision pattern.

    The recursion reads the explained row only through its per-level
    decisions, so an L-level oblivious tree admits at most 2^L distinct
    attribution vectors. Rows hitting a seen pattern reuse the cached vector
    bit-for-bit; exactness is untouched.
    """

    def __init__(self, model: TreeEnsemble):
        self.model = model
        self.trees = model.trees
        self.arrays = [_TreeArrays(t, model.learning_rate) for t in model.trees]
        self.n_features = model.n_features
        self._pattern_phi: list[dict[int, np.ndarray]] = [{} for _ in model.trees]
        base = np.array(model.base_score, dtype=np.float64)
        for arr in self.arrays:
            base[arr.class_index] += arr.values[0]
        self.base = base

    def attribute(self, x) -> Attribution:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape[0] != self.n_features:
            raise FeatureArityMismatch(f"expected {self.n_features} features, got {x.shape[0]}")
        phi = np.zeros((self.model.n_outputs, self.n_features))
        for tree, arr, cache in zip(self.trees, self.arrays, self._pattern_phi):
            pattern = 0
            for level, (f, t) in enumerate(tree.splits):
                if x[f] > t:
                    pattern |= 1 << level
            vector = cache.get(pattern)
            if vector is None:
                vector = np.zeros(self.n_features)
                _shap_recurse(arr, pattern, vector, 0, _Path(), 1.0, 1.0, -1)
                cache[pattern] = vector
            phi[arr.class_index] += vector
        return Attribution(phi=phi, base=self.base.copy())


class _Path:
    """Decision-path bookkeeping for the exact algorithm.

    Parallel lists over unique features met on the way down: the feature
    index, the cover fraction that continues without it (zero), the fraction
    when it is known (one), and the permutation weights by subset size.
    """

    __slots__ = ("features", "zeros", "ones", "pweights")

    def __init__(self):
        self.features: list[int] = []
        self.zeros: list[float] = []
        self.ones: list[float] = []
        self.pweights: list[float] = []

    def copy(self) -> "_Path":
        p = _Path.__new__(_Path)
        p.features = self.features.copy()
        p.zeros = self.zeros.copy()
        p.ones = self.ones.copy()
        p.pweights = self.pweights.copy()
        return p

    def extend(self, zero_fraction: float, one_fraction: float, feature_index: int) -> None:
        depth = len(self.features)
        self.features.append(feature_index)
        self.zeros.append(zero_fraction)
        self.ones.append(one_fraction)
        self.pweights.append(1.0 if depth == 0 else 0.0)
        pw = self.pweights
        for i in range(depth - 1, -1, -1):
            pw[i + 1] += one_fraction * pw[i] * (i + 1) / (depth + 1)
            pw[i] = zero_fraction * pw[i] * (depth - i) / (depth + 1)

    def unwind(self, path_index: int) -> None:
        depth = len(self.features) - 1
        one_fraction = self.ones[path_index]
        zero_fraction = self.zeros[path_index]
        pw = self.pweights
        next_one = pw[depth]
        for i in range(depth - 1, -1, -1):
            if one_fraction != 0.0:
                tmp = pw[i]
                pw[i] = next_one * (depth + 1) / ((i + 1) * one_fraction)
                next_one = tmp - pw[i] * zero_fraction * (depth - i) / (depth + 1)
            else:
                pw[i] = pw[i] * (depth + 1) / (zero_fraction * (depth - i))
        del self.features[path_index], self.zeros[path_index]
        del self.ones[path_index], self.pweights[depth]
        # shift is implicit via list deletion; pweights loses its last slot

    def unwound_sum(self, path_index: int) -> float:
        depth = len(self.features) - 1
        one_fraction = self.ones[path_index]
        zero_fraction = self.zeros[path_index]
        next_one = self.pweights[depth]
        total = 0.0
        for i in range(depth - 1, -1, -1):
            if one_fraction != 0.0:
                tmp = next_one * (depth + 1) / ((i + 1) * one_fraction)
                total += tmp
                next_one = self.pweights[i] - tmp * zero_fraction * (depth - i) / (depth + 1)
            else:
                total += self.pweights[i] / zero_fraction / ((depth - i) / (depth + 1))
        return total


def _shap_recurse(arr, pattern, phi, node, path, parent_zero, parent_one, parent_feature):
    """Canonical decision-path recursion; ``pattern`` holds the per-level
    decision bits of the explained row (bit l set means "went right")."""
    path = path.copy()
    path.extend(parent_zero, parent_one, parent_feature)

    if arr.is_leaf(node):
        value = arr.values[node]
        for i in range(1, len(path.features)):
            w = path.unwound_sum(i)
            phi[path.features[i]] += w * (path.ones[i] - path.zeros[i]) * value
        return

    f = int(arr.feature[node])
    level = (int(node) + 1).bit_length() - 1
    went_right = (pattern >> level) & 1
    hot = arr.right[node] if went_right else arr.left[node]
    cold = arr.left[node] if went_right else arr.right[node]
    w = arr.cover[node]
    hot_zero = arr.cover[hot] / w if w > 0 else 0.0
    cold_zero = arr.cover[cold] / w if w > 0 else 0.0

    incoming_zero, incoming_one = 1.0, 1.0
    try:
        k = path.features.index(f)
    except ValueError:
        k = -1
    if k >= 0:  # feature already on the path: undo, then redo at this node
        incoming_zero, incoming_one = path.zeros[k], path.ones[k]
        path.unwind(k)

    # a subtree whose zero and one fractions both vanish carries no Shapley
    # weight at all (empty training branch off the decision path): skip it
    # rather than push a (0, 0) path element the unwind math cannot handle
    hot_zero_arg = hot_zero * incoming_zero
    cold_zero_arg = cold_zero * incoming_zero
    if hot_zero_arg != 0.0 or incoming_one != 0.0:
        _shap_recurse(arr, pattern, phi, hot, path, hot_zero_arg, incoming_one, f)
    if cold_zero_arg != 0.0:
        _shap_recurse(arr, pattern, phi, cold, path, cold_zero_arg, 0.0, f)


def tree_shap(model: TreeEnsemble, x) -> Attribution:
    """Exact attribution for one encoded feature row (convenience wrapper).

    Building a :class:`TreeShapExplainer` once is cheaper when explaining
    many rows of the same model.
    """
    return TreeShapExplainer(model).attribute(x)


def _conditional_expectation(arr: _TreeArrays, x: np.ndarray, subset_mask: int, node: int) -> float:
    """Descend following x on coalition features, cover proportions elsewhere."""
    if arr.is_leaf(node):
        return float(arr.values[node])
    f = int(arr.feature[node])
    if (subset_mask >> f) & 1:
        child = arr.right[node] if x[f] > arr.threshold[node] else arr.left[node]
        return _conditional_expectation(arr, x, subset_mask, child)
    w = arr.cover[node]
    if w <= 0:
        return 0.0
    l, r = arr.left[node], arr.right[node]
    return (
        arr.cover[l] * _conditional_expectation(arr, x, subset_mask, l)
        + arr.cover[r] * _conditional_expectation(arr, x, subset_mask, r)
    ) / w


def brute_force_shapley(model: TreeEnsemble, x, feature_subset_limit: int = 20) -> Attribution:
    """Subset-enumeration Shapley values; oracle for :func:`tree_shap`.

    phi_j = sum over S not containing j of
            |S|! (d - |S| - 1)! / d! * (v(S + j) - v(S))
    with v(S) the cover-weighted conditional expectation of the margin.
    """
    d = model.n_features
    if d > min(feature_subset_limit, 20):
        raise TooManyFeatures(f"{d} features exceeds enumeration limit")
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != d:
        raise FeatureArityMismatch(f"expected {d} features, got {x.shape[0]}")
    arrays = [_TreeArrays(t, model.learning_rate) for t in model.trees]

    # v(S) per output, for every subset bitmask
    n_outputs = model.n_outputs
    v = np.tile(np.asarray(model.base_score, dtype=np.float64), (1 << d, 1))
    for arr in arrays:
        for mask in range(1 << d):
            v[mask, arr.class_index] += _conditional_expectation(arr, x, mask, 0)

    fact = [math.factorial(i) for i in range(d + 1)]
    weight = [fact[s] * fact[d - s - 1] / fact[d] for s in range(d)]

    phi = np.zeros((n_outputs, d))
    for j in range(d):
        bit = 1 << j
        for mask in range(1 << d):
            if mask & bit:
                continue
            s = bin(mask).count("1")
            phi[:, j] += weight[s] * (v[mask | bit] - v[mask])
    return Attribution(phi=phi, base=v[0].copy())


def global_importance(model: TreeEnsemble, design: np.ndarray) -> GlobalImportance:
    """Mean |phi| over sample rows and output columns, per source feature."""
    design = np.atleast_2d(np.asarray(design, dtype=np.float64))
    if design.shape[0] == 0:
        raise EmptySample("global importance needs at least one row")
    explainer = TreeShapExplainer(model)
    totals = np.zeros((model.n_outputs, model.n_features))
    for row in design:
        totals += np.abs(explainer.attribute(row).phi)
    per_column = totals.mean(axis=0) / design.shape[0]

    source_names: list[str] = []
    source_of: dict[str, int] = {}
    for name in model.feature_source:
        if name not in source_of:
            source_of[name] = len(source_names)
            source_names.append(name)
    values = np.zeros(len(source_names))
    for col, name in enumerate(model.feature_source):
        values[source_of[name]] += per_column[col]
    return GlobalImportance(feature_names=tuple(source_names), values=values)


def fold_average(importances: list[GlobalImportance]) -> GlobalImportance:
    """Arithmetic mean of per-fold importance vectors (matching features)."""
    if not importances:
        raise EmptySample("no fold importances to average")
    names = importances[0].feature_names
    for imp in importances[1:]:
        if imp.feature_names != names:
            raise FeatureArityMismatch("fold importances disagree on feature names")
    values = np.mean([imp.values for imp in importances], axis=0)
    return GlobalImportance(feature_names=names, values=values)
