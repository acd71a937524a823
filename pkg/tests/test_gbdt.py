from __future__ import annotations

import numpy as np
import pytest

from vaxclust import gbdt
from vaxclust.errors import DegenerateLabels, FeatureArityMismatch, NonFiniteFeature
from vaxclust.gbdt import ObliviousTree, TrainConfig, TreeEnsemble, encode_ordered_ts


def test_encode_ordered_ts_prefix_formula():
    out = encode_ordered_ts([0, 0, 0], [1.0, 0.0, 1.0], [0, 1, 2], 1.0, 0.5)
    assert out.tolist() == [0.5, 0.75, 0.5]


def test_encode_ordered_ts_first_row_gets_prior():
    out = encode_ordered_ts([3, 3, 3], [1.0, 1.0, 0.0], [2, 0, 1], 2.0, 0.25)
    assert out[2] == 0.25  # first position in the permutation


def test_encode_ordered_ts_respects_permutation_positions():
    # permutation [1, 0]: row 1 encodes first (prior), row 0 sees row 1's target
    out = encode_ordered_ts([0, 0], [0.0, 1.0], [1, 0], 1.0, 0.5)
    assert out[1] == 0.5
    assert out[0] == (1.0 + 0.5) / 2.0


def test_encoder_unseen_category_encodes_to_prior():
    labels = np.array([0, 1, 0, 1])
    cats = np.array([[1], [1], [2], [2]])
    encoder, _ = gbdt.OrderedTsEncoder.fit(cats, labels, 2, TrainConfig(seed=0))
    encoded = encoder.encode(np.array([[9]]))
    assert encoded[0, 0] == pytest.approx(0.5)  # prior = mean target


def test_ordered_ts_leakage_guard():
    # changing a later target must not move earlier encodings
    cats = [0, 0, 0, 0]
    perm = [0, 1, 2, 3]
    base = encode_ordered_ts(cats, [1.0, 0.0, 1.0, 0.0], perm, 1.0, 0.5)
    bumped = encode_ordered_ts(cats, [1.0, 0.0, 1.0, 1.0], perm, 1.0, 0.5)
    assert base[:3].tolist() == bumped[:3].tolist()


def test_fit_rejects_degenerate_labels(rng):
    X = rng.normal(size=(20, 3))
    with pytest.raises(DegenerateLabels):
        gbdt.fit(X, None, np.zeros(20, dtype=int), TrainConfig(n_trees=2))


def test_fit_rejects_nonfinite(rng):
    X = rng.normal(size=(20, 3))
    X[4, 1] = np.inf
    with pytest.raises(NonFiniteFeature):
        gbdt.fit(X, None, np.arange(20) % 2, TrainConfig(n_trees=2))


def _separable_data(rng, n=200):
    # class boundary exactly between order statistics 99 and 100, so a
    # 32-bucket quantile border is guaranteed to land inside the gap
    low = rng.uniform(0.0, 0.45, size=n // 2)
    high = rng.uniform(0.55, 1.0, size=n // 2)
    x0 = np.concatenate([low, high])
    x1 = rng.uniform(size=n)
    X = np.column_stack([x0, x1])
    y = (x0 > 0.5).astype(int)
    order = rng.permutation(n)
    return X[order], y[order]


def test_training_accuracy_reaches_one_on_separable_data(rng):
    X, y = _separable_data(rng)
    model = gbdt.fit(X, None, y, TrainConfig(n_trees=50, depth=3, seed=1))
    assert (gbdt.predict_class(model, X) == y).mean() == 1.0


def test_training_logloss_non_increasing(rng):
    for trial in range(5):
        X = rng.normal(size=(60, 4))
        y = (X[:, 0] + 0.3 * rng.normal(size=60) > 0).astype(int)
        model = gbdt.fit(X, None, y, TrainConfig(n_trees=40, depth=4, seed=trial))
        losses = model.training_loss
        assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))


def test_training_logloss_non_increasing_multiclass(rng):
    X = rng.normal(size=(90, 4))
    y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 0.3).astype(int)
    model = gbdt.fit(X, None, y, TrainConfig(n_trees=30, depth=3, seed=2))
    losses = model.training_loss
    assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))


def _manual_tree(splits, values, cover, class_index=0):
    return ObliviousTree(
        splits=tuple(splits),
        leaf_values=np.asarray(values, dtype=np.float64),
        leaf_cover=np.asarray(cover, dtype=np.int64),
        class_index=class_index,
    )


def _manual_ensemble(trees, base, lr=0.5, n_features=2, n_classes=2):
    n_outputs = 1 if n_classes == 2 else n_classes
    return TreeEnsemble(
        n_classes=n_classes,
        n_outputs=n_outputs,
        base_score=np.asarray(base, dtype=np.float64),
        learning_rate=lr,
        trees=tuple(trees),
        feature_names=tuple(f"f{j}" for j in range(n_features)),
        feature_source=tuple(f"f{j}" for j in range(n_features)),
        n_numeric=n_features,
        ts_encoder=None,
        config=TrainConfig(),
    )


def test_predict_margin_empty_ensemble_is_base():
    model = _manual_ensemble([], base=[0.7])
    assert gbdt.predict_margin(model, np.array([[1.0, 2.0]]))[0, 0] == 0.7


def test_predict_margin_single_tree_hand_evaluation():
    tree = _manual_tree([(0, 0.5)], values=[-2.0, 3.0], cover=[4, 6])
    model = _manual_ensemble([tree], base=[0.1], lr=0.5)
    # x0 = 0.2 <= 0.5 -> leaf 0; margin = 0.1 + 0.5 * (-2.0)
    assert gbdt.predict_margin(model, np.array([[0.2, 9.9]]))[0, 0] == pytest.approx(-0.9)
    # boundary goes left: bit set only when strictly greater
    assert gbdt.predict_margin(model, np.array([[0.5, 0.0]]))[0, 0] == pytest.approx(-0.9)
    assert gbdt.predict_margin(model, np.array([[0.6, 0.0]]))[0, 0] == pytest.approx(0.1 + 0.5 * 3.0)


def test_margin_equals_sum_of_tree_evaluations(rng):
    X = rng.normal(size=(50, 5))
    y = (X[:, 1] > 0).astype(int)
    model = gbdt.fit(X, None, y, TrainConfig(n_trees=25, depth=3, seed=3))
    margins = gbdt.predict_margin(model, X)[:, 0]
    manual = np.full(50, model.base_score[0])
    for tree in model.trees:
        manual += model.learning_rate * tree.evaluate(X)
    assert np.abs(margins - manual).max() < 1e-12


def test_predict_proba_zero_margin_is_half():
    model = _manual_ensemble([], base=[0.0])
    proba = gbdt.predict_proba(model, np.array([[0.0, 0.0]]))
    assert proba[0, 1] == 0.5


def test_predict_proba_equal_margins_uniform():
    model = _manual_ensemble([], base=[0.3, 0.3, 0.3], n_classes=3)
    proba = gbdt.predict_proba(model, np.array([[0.0, 0.0]]))
    assert np.abs(proba - 1.0 / 3.0).max() < 1e-12


def test_softmax_shift_invariance(rng):
    model = _manual_ensemble([], base=[0.0, 0.0, 0.0], n_classes=3)
    margins = rng.normal(size=(20, 3))
    shifted = margins + 13.7
    p = gbdt.proba_from_margin(model, margins)
    q = gbdt.proba_from_margin(model, shifted)
    assert np.abs(p - q).max() < 1e-12


def test_probability_simplex(rng):
    X = rng.normal(size=(60, 4))
    y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 0).astype(int)
    model = gbdt.fit(X, None, y, TrainConfig(n_trees=10, depth=3, seed=4))
    proba = gbdt.predict_proba(model, X)
    assert np.abs(proba.sum(axis=1) - 1.0).max() < 1e-12
    assert proba.min() >= 0.0 and proba.max() <= 1.0


def test_determinism_identical_json(rng):
    X = rng.normal(size=(40, 3))
    cats = rng.integers(1, 7, size=(40, 1))
    y = (X[:, 0] > 0).astype(int)
    cfg = TrainConfig(n_trees=12, depth=3, seed=99)
    a = gbdt.fit(X, cats, y, cfg)
    b = gbdt.fit(X.copy(), cats.copy(), y.copy(), cfg)
    assert gbdt.to_json(a) == gbdt.to_json(b)


def test_json_round_trip_preserves_predictions(rng):
    X = rng.normal(size=(50, 3))
    cats = rng.integers(1, 7, size=(50, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    model = gbdt.fit(X, cats, y, TrainConfig(n_trees=15, depth=4, seed=5),
                     categorical_names=["r1", "r2"])
    restored = gbdt.from_json(gbdt.to_json(model))
    assert np.array_equal(
        gbdt.predict_margin(model, X, cats), gbdt.predict_margin(restored, X, cats)
    )
    assert restored.feature_names == model.feature_names


def test_oblivious_level_permutation_reaches_same_leaf(rng):
    X = rng.normal(size=(30, 4))
    y = (X[:, 2] > 0).astype(int)
    model = gbdt.fit(X, None, y, TrainConfig(n_trees=8, depth=4, seed=6))
    for tree in model.trees:
        levels = len(tree.splits)
        if levels < 2:
            continue
        perm = rng.permutation(levels)
        permuted = ObliviousTree(
            splits=tuple(tree.splits[p] for p in perm),
            leaf_values=tree.leaf_values[_remap_leaves(perm, levels)],
            leaf_cover=tree.leaf_cover[_remap_leaves(perm, levels)],
            class_index=tree.class_index,
        )
        assert np.array_equal(tree.evaluate(X), permuted.evaluate(X))


def _remap_leaves(perm, levels):
    """Leaf table reindexed so permuted levels address the same cells."""
    new_to_old = np.empty(1 << levels, dtype=np.int64)
    for leaf in range(1 << levels):
        old = 0
        for new_level, old_level in enumerate(perm):
            if (leaf >> new_level) & 1:
                old |= 1 << old_level
        new_to_old[leaf] = old
    # permuted tree's leaf i must hold the old tree's value for the same region
    out = np.empty(1 << levels, dtype=np.int64)
    for leaf in range(1 << levels):
        out[leaf] = new_to_old[leaf]
    return out


def test_feature_scale_covariance_power_of_two(rng):
    X, y = _separable_data(rng, n=120)
    cfg = TrainConfig(n_trees=15, depth=3, seed=7)
    base = gbdt.fit(X, None, y, cfg)
    scaled_X = X.copy()
    scaled_X[:, 0] *= 4.0  # exact in binary floating point
    scaled = gbdt.fit(scaled_X, None, y, cfg)
    assert np.array_equal(
        gbdt.predict_margin(base, X), gbdt.predict_margin(scaled, scaled_X)
    )


def test_feature_scale_covariance_general(rng):
    X, y = _separable_data(rng, n=120)
    cfg = TrainConfig(n_trees=15, depth=3, seed=8)
    base = gbdt.fit(X, None, y, cfg)
    scaled_X = X.copy()
    scaled_X[:, 1] *= 3.0
    scaled = gbdt.fit(scaled_X, None, y, cfg)
    assert np.allclose(
        gbdt.predict_margin(base, X), gbdt.predict_margin(scaled, scaled_X), atol=1e-8
    )


def test_arity_mismatch(rng):
    X = rng.normal(size=(30, 3))
    y = (X[:, 0] > 0).astype(int)
    model = gbdt.fit(X, None, y, TrainConfig(n_trees=2, depth=2, seed=0))
    with pytest.raises(FeatureArityMismatch):
        gbdt.predict_margin(model, X[:, :2])
    with pytest.raises(FeatureArityMismatch):
        gbdt.predict_margin(model, X, np.ones((30, 1), dtype=int))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(n_trees=0).validate()
    with pytest.raises(ValueError):
        TrainConfig(depth=17).validate()
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0).validate()
    with pytest.raises(ValueError):
        TrainConfig(loss="hinge").validate()
