import numpy as np
import pytest

from winleak.core import ConfigError, InvariantError
from winleak.forest import (
    ForestModel,
    ForestParams,
    Tree,
    knn_predict,
    predict,
    predict_proba,
    splitmix64,
    train_forest,
    train_tree,
    tree_seed,
)

XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


def blobs(rng, n=200, sep=6.0, dim=4):
    y = rng.integers(0, 2, size=n)
    X = rng.normal(size=(n, dim)) + sep * y[:, None] / np.sqrt(dim)
    return X, y


def test_splitmix64_reference_values():
    # first outputs of the reference splitmix64 stream seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4
    assert tree_seed(5, 3) == splitmix64(5 ^ 3)


def test_single_class_is_one_leaf():
    t = train_tree(np.arange(10.0).reshape(-1, 1), np.zeros(10, dtype=int))
    assert t.n_nodes == 1 and t.depth() == 0


def test_one_dimensional_split():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    t = train_tree(X, np.array([0, 0, 1, 1]), ForestParams(min_leaf=1))
    assert t.n_nodes == 3 and t.threshold[0] == 0.0
    assert (t.leaf_class()[t.apply(X)] == [0, 0, 1, 1]).all()


def test_xor_needs_depth_two():
    params = ForestParams(max_depth=2, min_leaf=1, max_features="all")
    t = train_tree(XOR_X, XOR_Y, params)
    assert (t.leaf_class()[t.apply(XOR_X)] == XOR_Y).all()
    shallow = train_tree(XOR_X, XOR_Y, ForestParams(max_depth=1, min_leaf=1, max_features="all"))
    assert (shallow.leaf_class()[shallow.apply(XOR_X)] == XOR_Y).mean() < 1


def test_leaves_hold_counts(rng):
    X, y = blobs(rng, 100)
    t = train_tree(X, y, ForestParams(min_leaf=3))
    leaves = t.apply(X)
    for leaf in np.unique(leaves):
        assert (t.counts[leaf] == np.bincount(y[leaves == leaf], minlength=2)).all()
        assert t.counts[leaf].sum() >= 3


def test_non_finite_features_rejected():
    with pytest.raises(InvariantError):
        train_tree(np.array([[np.nan], [1.0]]), np.array([0, 1]))


def test_single_tree_forest_equals_train_tree(rng):
    X, y = blobs(rng)
    params = ForestParams(n_trees=1, bootstrap=False)
    f = train_forest(X, y, params, seed=9)
    t = train_tree(X, y, params, tree_seed(9, 0), 2)
    assert f.trees[0].to_node_dict() == t.to_node_dict()


def test_forest_is_deterministic(rng):
    X, y = blobs(rng)
    params = ForestParams(n_trees=10)
    a = train_forest(X, y, params, seed=1).dumps()
    assert a == train_forest(X, y, params, seed=1).dumps()
    assert a != train_forest(X, y, params, seed=2).dumps()


def test_forest_serialization_round_trip(rng):
    X, y = blobs(rng)
    m = train_forest(X, y, ForestParams(n_trees=5), seed=3, classes=["a", "b"], schema_fingerprint="abc")
    back = ForestModel.loads(m.dumps())
    assert back.dumps() == m.dumps()
    assert (predict_proba(back, X) == predict_proba(m, X)).all()
    with pytest.raises(ConfigError):
        ForestModel.from_dict({"format": "other"})


def test_separable_blobs(rng):
    X, y = blobs(rng, 400)
    m = train_forest(X[:300], y[:300], ForestParams(n_trees=50), seed=0)
    labels, proba = predict(m, X[300:])
    assert (labels == y[300:]).mean() >= 0.95
    assert np.allclose(proba.sum(axis=1), 1, atol=1e-12) and (proba >= 0).all()


def _stump(cls, n_classes=4):
    counts = np.zeros((1, n_classes), dtype=np.int64)
    counts[0, cls] = 1
    return Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), counts)


def test_vote_shares_and_tie_break():
    m = ForestModel([_stump(2), _stump(2)], 1, list("abcd"), ForestParams(n_trees=2), 0)
    label, proba = predict(m, np.array([0.0]))
    assert label == 2 and proba[2] == 1.0
    m = ForestModel([_stump(3), _stump(1)], 1, list("abcd"), ForestParams(n_trees=2), 0)
    label, proba = predict(m, np.array([0.0]))
    assert label == 1 and proba[1] == proba[3] == 0.5


def test_schema_mismatch_rejected(rng):
    X, y = blobs(rng)
    m = train_forest(X, y, ForestParams(n_trees=2), schema_fingerprint="v1")
    with pytest.raises(ConfigError):
        predict(m, X, "v2")
    with pytest.raises(ConfigError):
        predict(m, X[:, :2])


def test_params_validation():
    with pytest.raises(ConfigError):
        ForestParams(n_trees=0)
    assert ForestParams().features_per_split(10) == 4


def test_knn_examples(rng):
    X, y = blobs(rng, 50)
    assert (knn_predict(X, y, X, k=1) == y).all()
    majority = int(np.argmax(np.bincount(y)))
    assert (knn_predict(X, y, rng.normal(size=(5, 4)), k=len(X)) == majority).all()
    with pytest.raises(ConfigError):
        knn_predict(X[:0], y[:0], X, 1)


def test_knn_distance_tie_goes_to_lower_index():
    X = np.array([[0.0], [2.0], [2.0]])
    assert knn_predict(X, np.array([5, 1, 0]), np.array([[1.0]]), k=1)[0] == 5
    assert knn_predict(X[1:], np.array([1, 0]), np.array([[2.0]]), k=1)[0] == 1


def test_knn_normalisation_uses_training_stats_only():
    X = np.array([[0.0, 0.0], [10.0, 1.0]])
    y = np.array([0, 1])
    # with training stats, feature 2 carries as much weight as feature 1
    assert knn_predict(X, y, np.array([[4.0, 0.9]]), k=1)[0] == 1


def test_knn_duplicate_leakage(rng):
    # test windows duplicated in training: exact retrieval
    X = rng.normal(size=(80, 6))
    y = rng.integers(0, 5, size=80)
    test = np.arange(0, 80, 4)
    assert (knn_predict(X, y, X[test], k=1) == y[test]).mean() == 1.0
