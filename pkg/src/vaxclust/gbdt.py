"""Gradient-boosted oblivious decision trees over GDSC features.

Oblivious (symmetric) trees apply one (feature, threshold) split per level,
so a leaf is addressed by the bit pattern of its level decisions (bit l set
iff feature > threshold at level l). Leaf values are Newton steps
``-sum(g) / (sum(h) + l2)`` on the logistic / softmax objective; multiclass
rounds grow one scalar tree per class from the round-start probabilities.

Categorical features enter through ordered target statistics: the encoding
of a row uses only target values of rows preceding it in a seeded
permutation, smoothed toward the global prior, which removes the target
leakage a plain mean encoding would introduce. Inference uses the frozen
full-training statistics.

Split candidates are 32-bucket per-feature quantile borders computed once
before boosting; candidate selection ties break to the lowest feature index,
then the lowest threshold, so training is bit-reproducible for a given
(data, config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateLabels,
    FeatureArityMismatch,
    NonFiniteFeature,
    TooFewRows,
)
from .rng import Rng, derive_seed

N_QUANTILE_BUCKETS = 32
_MIN_SPLIT_GAIN = 1e-12

LOSSES = ("auto", "binary_logistic", "multiclass_softmax")


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 500
    depth: int = 6
    learning_rate: float = 0.1
    l2_leaf_reg: float = 3.0
    ts_prior_weight: float = 1.0
    n_permutations: int = 1
    seed: int = 0
    loss: str = "auto"

    def validate(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 1 <= self.depth <= 16:
            raise ValueError("depth must be in 1..16")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.l2_leaf_reg < 0.0:
            raise ValueError("l2_leaf_reg must be >= 0")
        if self.ts_prior_weight <= 0.0:
            raise ValueError("ts_prior_weight must be > 0")
        if self.n_permutations < 1:
            raise ValueError("n_permutations must be >= 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "depth": self.depth,
            "learning_rate": self.learning_rate,
            "l2_leaf_reg": self.l2_leaf_reg,
            "ts_prior_weight": self.ts_prior_weight,
            "n_permutations": self.n_permutations,
            "seed": self.seed,
            "loss": self.loss,
        }


def encode_ordered_ts(categories, targets, permutation, prior_weight: float, prior: float) -> np.ndarray:
    """Ordered target-statistic encoding of one categorical column.

    The row at permutation position j is encoded from the targets of
    same-category rows at positions strictly before j:

        (prefix_sum + prior_weight * prior) / (prefix_count + prior_weight)

    so the first occurrence of any category encodes to the prior exactly.
    """
    categories = np.asarray(categories)
    targets = np.asarray(targets, dtype=np.float64)
    out = np.empty(len(categories), dtype=np.float64)
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for row in permutation:
        c = int(categories[row])
        s = sums.get(c, 0.0)
        n = counts.get(c, 0)
        out[row] = (s + prior_weight * prior) / (n + prior_weight)
        sums[c] = s + targets[row]
        counts[c] = n + 1
    return out


class OrderedTsEncoder:
    """Frozen per-category statistics for inference plus ordered training views.

    One encoded column per (categorical feature, target component); binary
    targets have a single component (the positive class), multiclass targets
    one component per class.
    """

    def __init__(self, feature_names, n_components, prior_weight, priors, stats, component_names):
        self.feature_names = tuple(feature_names)
        self.n_components = int(n_components)
        self.prior_weight = float(prior_weight)
        self.priors = [tuple(float(x) for x in p) for p in priors]  # per component
        # per feature: {category: (count, [sum per component])}
        self.stats = stats
        self.component_names = tuple(component_names)

    @property
    def column_names(self) -> list[str]:
        names = []
        for fname in self.feature_names:
            for comp in self.component_names:
                names.append(fname if comp == "" else f"{fname}|{comp}")
        return names

    @classmethod
    def fit(
        cls,
        categories: np.ndarray,
        labels: np.ndarray,
        n_classes: int,
        config: TrainConfig,
        feature_names=None,
    ):
        """Freeze full-training statistics and return (encoder, training_columns)."""
        n, d_cat = categories.shape
        if n_classes == 2:
            components = [(labels == 1).astype(np.float64)]
            component_names = [""]
        else:
            components = [(labels == c).astype(np.float64) for c in range(n_classes)]
            component_names = [f"class{c}" for c in range(n_classes)]
        priors = [tuple(float(t.mean()) for t in components)]
        priors = priors * d_cat  # prior is global, identical across features

        permutations = [
            Rng(derive_seed(config.seed, 0xC47, p)).permutation(n)
            for p in range(config.n_permutations)
        ]

        stats = []
        train_cols = np.empty((n, d_cat * len(components)), dtype=np.float64)
        col = 0
        for f in range(d_cat):
            feature_stats: dict[int, tuple[int, list[float]]] = {}
            for c in np.unique(categories[:, f]):
                mask = categories[:, f] == c
                feature_stats[int(c)] = (
                    int(mask.sum()),
                    [float(t[mask].sum()) for t in components],
                )
            stats.append(feature_stats)
            for comp_idx, t in enumerate(components):
                prior = priors[f][comp_idx]
                encoded = np.zeros(n, dtype=np.float64)
                for perm in permutations:
                    encoded += encode_ordered_ts(
                        categories[:, f], t, perm, config.ts_prior_weight, prior
                    )
                train_cols[:, col] = encoded / len(permutations)
                col += 1

        if feature_names is None:
            feature_names = [f"cat{f}" for f in range(d_cat)]
        encoder = cls(
            feature_names, len(components), config.ts_prior_weight, priors, stats, component_names
        )
        return encoder, train_cols

    def encode(self, categories: np.ndarray) -> np.ndarray:
        """Full-statistics encoding for inference; unseen categories get the prior."""
        categories = np.asarray(categories)
        if categories.ndim != 2 or categories.shape[1] != len(self.feature_names):
            raise FeatureArityMismatch(
                f"expected {len(self.feature_names)} categorical columns, got shape {categories.shape}"
            )
        n = categories.shape[0]
        out = np.empty((n, len(self.feature_names) * self.n_components), dtype=np.float64)
        col = 0
        for f in range(len(self.feature_names)):
            feature_stats = self.stats[f]
            for comp_idx in range(self.n_components):
                prior = self.priors[f][comp_idx]
                a = self.prior_weight
                for i in range(n):
                    count, sums = feature_stats.get(int(categories[i, f]), (0, None))
                    s = sums[comp_idx] if sums is not None else 0.0
                    out[i, col] = (s + a * prior) / (count + a)
                col += 1
        return out

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "n_components": self.n_components,
            "prior_weight": self.prior_weight,
            "priors": [list(p) for p in self.priors],
            "component_names": list(self.component_names),
            "stats": [
                {str(c): [count, list(sums)] for c, (count, sums) in fs.items()}
                for fs in self.stats
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OrderedTsEncoder":
        stats = [
            {int(c): (int(v[0]), [float(x) for x in v[1]]) for c, v in fs.items()}
            for fs in data["stats"]
        ]
        return cls(
            data["feature_names"],
            data["n_components"],
            data["prior_weight"],
            data["priors"],
            stats,
            data["component_names"],
        )


@dataclass(frozen=True)
class ObliviousTree:
    splits: tuple[tuple[int, float], ...]
    leaf_values: np.ndarray  # (2**len(splits),)
    leaf_cover: np.ndarray  # training rows per leaf, same shape
    class_index: int = 0

    @property
    def n_levels(self) -> int:
        return len(self.splits)

    def leaf_indices(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(X.shape[0], dtype=np.int64)
        for level, (feature, threshold) in enumerate(self.splits):
            idx |= (X[:, feature] > threshold).astype(np.int64) << level
        return idx

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_values[self.leaf_indices(X)]


@dataclass(frozen=True)
class TreeEnsemble:
    n_classes: int
    n_outputs: int  # 1 for binary (positive-class log-odds), k for multiclass
    base_score: np.ndarray  # (n_outputs,)
    learning_rate: float
    trees: tuple[ObliviousTree, ...]
    feature_names: tuple[str, ...]  # design-matrix columns
    feature_source: tuple[str, ...]  # source feature per column (TS columns collapse)
    n_numeric: int
    ts_encoder: OrderedTsEncoder | None
    config: TrainConfig
    training_loss: tuple[float, ...] = field(default_factory=tuple)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def encode_features(self, numeric: np.ndarray, categorical: np.ndarray | None = None) -> np.ndarray:
        numeric = np.atleast_2d(np.asarray(numeric, dtype=np.float64))
        if numeric.shape[1] != self.n_numeric:
            raise FeatureArityMismatch(
                f"expected {self.n_numeric} numeric features, got {numeric.shape[1]}"
            )
        if self.ts_encoder is None:
            if categorical is not None and np.size(categorical):
                raise FeatureArityMismatch("model was trained without categorical features")
            return numeric
        if categorical is None:
            raise FeatureArityMismatch("model requires categorical features")
        categorical = np.atleast_2d(np.asarray(categorical))
        return np.hstack([numeric, self.ts_encoder.encode(categorical)])


def margin_from_design(model: TreeEnsemble, design: np.ndarray) -> np.ndarray:
    """(n, n_outputs) additive margins over an already-encoded design matrix."""
    design = np.atleast_2d(np.asarray(design, dtype=np.float64))
    if design.shape[1] != model.n_features:
        raise FeatureArityMismatch(
            f"expected {model.n_features} design columns, got {design.shape[1]}"
        )
    margins = np.tile(model.base_score, (design.shape[0], 1))
    for tree in model.trees:
        margins[:, tree.class_index] += model.learning_rate * tree.evaluate(design)
    return margins


def predict_margin(model: TreeEnsemble, numeric, categorical=None) -> np.ndarray:
    return margin_from_design(model, model.encode_features(numeric, categorical))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(margins: np.ndarray) -> np.ndarray:
    shifted = margins - margins.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def proba_from_margin(model: TreeEnsemble, margins: np.ndarray) -> np.ndarray:
    if model.n_outputs == 1:
        p = _sigmoid(margins[:, 0])
        return np.column_stack([1.0 - p, p])
    return _softmax(margins)


def predict_proba(model: TreeEnsemble, numeric, categorical=None) -> np.ndarray:
    return proba_from_margin(model, predict_margin(model, numeric, categorical))


def predict_class(model: TreeEnsemble, numeric, categorical=None) -> np.ndarray:
    return np.argmax(predict_proba(model, numeric, categorical), axis=1)


def quantile_candidates(column: np.ndarray, n_buckets: int = N_QUANTILE_BUCKETS) -> np.ndarray:
    """Interior quantile borders (deduplicated); constant columns yield none."""
    qs = np.arange(1, n_buckets) / n_buckets
    borders = np.quantile(column, qs, method="linear")
    return np.unique(borders)


def _grow_oblivious_tree(buckets, candidates, grad, hess, depth, l2):
    """One symmetric tree; greedy level-wise split maximizing total Newton gain.

    ``buckets[j]`` holds per-row candidate-bucket ids for column j (rows with
    bucket <= m fall left of candidates[j][m]). Returns splits and per-leaf
    (value, cover) tables; stops early when no split gains more than the
    minimum threshold.
    """
    n = grad.shape[0]
    leaf_idx = np.zeros(n, dtype=np.int64)
    splits: list[tuple[int, float]] = []

    for level in range(depth):
        n_leaves = 1 << level
        g_leaf = np.bincount(leaf_idx, weights=grad, minlength=n_leaves)
        h_leaf = np.bincount(leaf_idx, weights=hess, minlength=n_leaves)
        denom = h_leaf + l2
        base = np.sum(np.divide(g_leaf * g_leaf, denom, out=np.zeros_like(denom), where=denom > 0))

        best_gain = _MIN_SPLIT_GAIN
        best: tuple[int, float] | None = None
        for j, cand in enumerate(candidates):
            if cand.size == 0:
                continue
            n_buckets = cand.size + 1
            flat = leaf_idx * n_buckets + buckets[j]
            hist_g = np.bincount(flat, weights=grad, minlength=n_leaves * n_buckets)
            hist_h = np.bincount(flat, weights=hess, minlength=n_leaves * n_buckets)
            hist_g = hist_g.reshape(n_leaves, n_buckets)
            hist_h = hist_h.reshape(n_leaves, n_buckets)
            gl = np.cumsum(hist_g, axis=1)[:, :-1]  # (n_leaves, n_candidates)
            hl = np.cumsum(hist_h, axis=1)[:, :-1]
            gr = g_leaf[:, None] - gl
            hr = h_leaf[:, None] - hl
            dl = hl + l2
            dr = hr + l2
            score = np.divide(gl * gl, dl, out=np.zeros_like(dl), where=dl > 0) + np.divide(
                gr * gr, dr, out=np.zeros_like(dr), where=dr > 0
            )
            gains = score.sum(axis=0) - base
            m = int(np.argmax(gains))
            if gains[m] > best_gain:
                best_gain = float(gains[m])
                best = (j, m)
        if best is None:
            break
        j, m = best
        splits.append((j, float(candidates[j][m])))
        leaf_idx |= (buckets[j] > m).astype(np.int64) << level

    n_leaves = 1 << len(splits)
    g_leaf = np.bincount(leaf_idx, weights=grad, minlength=n_leaves)
    h_leaf = np.bincount(leaf_idx, weights=hess, minlength=n_leaves)
    cover = np.bincount(leaf_idx, minlength=n_leaves)
    denom = h_leaf + l2
    values = np.where(denom > 0, -np.divide(g_leaf, denom, out=np.zeros_like(denom), where=denom > 0), 0.0)
    return splits, values, cover, leaf_idx


def fit(
    numeric: np.ndarray,
    categorical: np.ndarray | None,
    labels: np.ndarray,
    config: TrainConfig,
    numeric_names=None,
    categorical_names=None,
) -> TreeEnsemble:
    """Train the boosted oblivious-tree classifier.

    ``numeric`` is (n, d_num) float; ``categorical`` (n, d_cat) integer ids or
    None. Labels must be 0..k-1 with every class present. Deterministic for a
    given (data, config, seed).
    """
    config.validate()
    numeric = np.asarray(numeric, dtype=np.float64)
    if numeric.ndim != 2:
        raise ValueError("numeric features must be 2-D")
    if not np.all(np.isfinite(numeric)):
        raise NonFiniteFeature("numeric features contain non-finite values")
    labels = np.asarray(labels, dtype=np.int64)
    n = numeric.shape[0]
    classes = np.unique(labels)
    if classes.size < 2:
        raise DegenerateLabels("training labels contain a single class")
    n_classes = int(classes.max()) + 1
    if not np.array_equal(classes, np.arange(n_classes)):
        raise ValueError("labels must be contiguous 0..k-1 with every class present")
    if n < 2 * n_classes:
        raise TooFewRows(f"need at least {2 * n_classes} rows for {n_classes} classes")

    loss = config.loss
    if loss == "auto":
        loss = "binary_logistic" if n_classes == 2 else "multiclass_softmax"
    if loss == "binary_logistic" and n_classes != 2:
        raise ValueError("binary_logistic requires exactly 2 classes")

    numeric_names = list(numeric_names or [f"f{j}" for j in range(numeric.shape[1])])
    if len(numeric_names) != numeric.shape[1]:
        raise ValueError("numeric_names length mismatch")

    encoder = None
    design = numeric
    feature_names = list(numeric_names)
    feature_source = list(numeric_names)
    if categorical is not None and np.size(categorical):
        categorical = np.asarray(categorical)
        if categorical.ndim != 2 or categorical.shape[0] != n:
            raise ValueError("categorical features must be (n, d_cat)")
        cat_names = list(categorical_names or [f"cat{j}" for j in range(categorical.shape[1])])
        if len(cat_names) != categorical.shape[1]:
            raise ValueError("categorical_names length mismatch")
        encoder, ts_cols = OrderedTsEncoder.fit(
            categorical, labels, n_classes, config, feature_names=cat_names
        )
        design = np.hstack([numeric, ts_cols])
        for fname in cat_names:
            for comp in encoder.component_names:
                feature_names.append(fname if comp == "" else f"{fname}|{comp}")
                feature_source.append(fname)

    candidates = [quantile_candidates(design[:, j]) for j in range(design.shape[1])]
    buckets = [
        np.searchsorted(candidates[j], design[:, j], side="left") if candidates[j].size else None
        for j in range(design.shape[1])
    ]

    n_outputs = 1 if loss == "binary_logistic" else n_classes
    counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    if n_outputs == 1:
        base = np.array([np.log(counts[1] / counts[0])])
        y = (labels == 1).astype(np.float64)
    else:
        base = np.log(counts / n)
        onehot = np.eye(n_classes)[labels]

    margins = np.tile(base, (n, 1))
    trees: list[ObliviousTree] = []
    losses: list[float] = []
    lr = config.learning_rate
    l2 = config.l2_leaf_reg

    for _ in range(config.n_trees):
        if n_outputs == 1:
            p = _sigmoid(margins[:, 0])
            grad = p - y
            hess = p * (1.0 - p)
            splits, values, cover, leaf_idx = _grow_oblivious_tree(
                buckets, candidates, grad, hess, config.depth, l2
            )
            trees.append(
                ObliviousTree(splits=tuple(splits), leaf_values=values, leaf_cover=cover, class_index=0)
            )
            margins[:, 0] += lr * values[leaf_idx]
            p = np.clip(_sigmoid(margins[:, 0]), 1e-15, 1.0 - 1e-15)
            losses.append(float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))
        else:
            p = _softmax(margins)
            for c in range(n_classes):
                grad = p[:, c] - onehot[:, c]
                hess = p[:, c] * (1.0 - p[:, c])
                splits, values, cover, leaf_idx = _grow_oblivious_tree(
                    buckets, candidates, grad, hess, config.depth, l2
                )
                trees.append(
                    ObliviousTree(
                        splits=tuple(splits), leaf_values=values, leaf_cover=cover, class_index=c
                    )
                )
                margins[:, c] += lr * values[leaf_idx]
            p = _softmax(margins)
            losses.append(float(-np.mean(np.log(np.clip(p[np.arange(n), labels], 1e-15, None)))))

    return TreeEnsemble(
        n_classes=n_classes,
        n_outputs=n_outputs,
        base_score=base,
        learning_rate=lr,
        trees=tuple(trees),
        feature_names=tuple(feature_names),
        feature_source=tuple(feature_source),
        n_numeric=numeric.shape[1],
        ts_encoder=encoder,
        config=replace(config, loss=loss),
        training_loss=tuple(losses),
    )


def to_json(model: TreeEnsemble) -> str:
    """Self-describing JSON document; floats round-trip exactly via repr."""
    doc = {
        "format_version": 1,
        "model_type": "oblivious_gbdt",
        "config": model.config.to_dict(),
        "n_classes": model.n_classes,
        "n_outputs": model.n_outputs,
        "base_score": [float(x) for x in model.base_score],
        "learning_rate": model.learning_rate,
        "feature_names": list(model.feature_names),
        "feature_source": list(model.feature_source),
        "n_numeric": model.n_numeric,
        "encoder": model.ts_encoder.to_dict() if model.ts_encoder else None,
        "training_loss": list(model.training_loss),
        "trees": [
            {
                "class_index": t.class_index,
                "splits": [[f, thr] for f, thr in t.splits],
                "leaf_values": [float(v) for v in t.leaf_values],
                "leaf_cover": [int(c) for c in t.leaf_cover],
            }
            for t in model.trees
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def from_json(text: str) -> TreeEnsemble:
    doc = json.loads(text)
    if doc.get("model_type") != "oblivious_gbdt":
        raise ValueError("not an oblivious_gbdt model document")
    trees = tuple(
        ObliviousTree(
            splits=tuple((int(f), float(t)) for f, t in spec["splits"]),
            leaf_values=np.array(spec["leaf_values"], dtype=np.float64),
            leaf_cover=np.array(spec["leaf_cover"], dtype=np.int64),
            class_index=int(spec["class_index"]),
        )
        for spec in doc["trees"]
    )
    return TreeEnsemble(
        n_classes=int(doc["n_classes"]),
        n_outputs=int(doc["n_outputs"]),
        base_score=np.array(doc["base_score"], dtype=np.float64),
        learning_rate=float(doc["learning_rate"]),
        trees=trees,
        feature_names=tuple(doc["feature_names"]),
        feature_source=tuple(doc["feature_source"]),
        n_numeric=int(doc["n_numeric"]),
        ts_encoder=OrderedTsEncoder.from_dict(doc["encoder"]) if doc["encoder"] else None,
        config=TrainConfig(**doc["config"]),
        training_loss=tuple(doc["training_loss"]),
    )
