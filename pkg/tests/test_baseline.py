import numpy as np
import pytest

from responsegcn.baseline import (
    DecisionTree,
    ForestConfig,
    pca_reduce,
    rf_features,
    rf_predict,
    train_random_forest,
)
from responsegcn.errors import DegenerateData, InvalidConfig, TooFewSamples


def test_pca_matches_eigh():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 6)) @ np.diag([5, 4, 3, 2, 1, 0.5])
    scores, basis = pca_reduce(X, 4)
    C = np.cov(X, rowvar=False)
    vals, vecs = np.linalg.eigh(C)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    assert np.allclose(basis.eigenvalues, vals[:4], atol=1e-8)
    for k in range(4):
        v = vecs[:, k] * np.sign(vecs[np.argmax(np.abs(vecs[:, k])), k])
        assert np.allclose(basis.components[k], v, atol=1e-8)
    assert np.allclose(scores, (X - X.mean(0)) @ basis.components.T)


def test_pca_line_data():
    t = np.linspace(-1, 1, 11)
    X = np.outer(t, [3.0, 4.0]) + [1.0, 2.0]
    scores, basis = pca_reduce(X, 1)
    assert np.allclose(basis.components[0], [0.6, 0.8], atol=1e-10)
    assert np.allclose(scores[:, 0], 5 * t, atol=1e-10)


def test_pca_full_rank_reconstructs():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(10, 4))
    scores, basis = pca_reduce(X, 4)
    assert np.allclose(basis.inverse_transform(scores), X, atol=1e-8)
    assert np.allclose(basis.components @ basis.components.T, np.eye(4), atol=1e-8)


def test_pca_rank_deficient_gives_zero_rows():
    X = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [3.0, 3.0, 0.0]])
    scores, basis = pca_reduce(X, 3)
    assert np.allclose(basis.components[0], [2**-0.5, 2**-0.5, 0], atol=1e-10)
    assert not basis.components[1:].any()
    assert not scores[:, 1:].any()


def test_pca_validation():
    with pytest.raises(DegenerateData):
        pca_reduce(np.ones((1, 3)), 1)
    with pytest.raises(InvalidConfig):
        pca_reduce(np.ones((4, 3)), 4)


def test_depth_one_tree_finds_split():
    X = np.array([[0.0], [1.0], [2.0], [3.0], [10.0], [11.0]])
    y = np.array([0, 0, 0, 0, 1, 1])
    t = DecisionTree(max_depth=1).fit(X, y)
    assert t.feature[0] == 0 and t.threshold[0] == 6.5
    assert t.predict(X).tolist() == y.tolist()


def test_tree_picks_informative_feature():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 3))
    y = (X[:, 2] > 0.3).astype(int)
    t = DecisionTree(max_depth=1).fit(X, y)
    assert t.feature[0] == 2


def test_forest_solves_xor():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(400, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    f = train_random_forest(X[:300], y[:300], ForestConfig(n_trees=30, features_per_split=2), seed=0)
    pred, frac = rf_predict(f, X[300:])
    assert np.mean(pred == y[300:]) >= 0.95
    assert np.all((frac >= 0) & (frac <= 1))


def test_single_unbagged_tree_equals_forest():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 3))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    f = train_random_forest(X, y, ForestConfig(n_trees=1, bootstrap=False, features_per_split=3), seed=0)
    t = DecisionTree(max_depth=8, max_features=3).fit(X, y)
    assert rf_predict(f, X)[0].tolist() == t.predict(X).tolist()


def test_forest_deterministic_and_needs_both_classes():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(20, 4))
    y = np.arange(20) % 2
    a = rf_predict(train_random_forest(X, y, ForestConfig(n_trees=5), seed=1), X)[1]
    b = rf_predict(train_random_forest(X, y, ForestConfig(n_trees=5), seed=1), X)[1]
    assert np.array_equal(a, b)
    with pytest.raises(TooFewSamples):
        train_random_forest(X, np.zeros(20, int))


def test_rf_features_fit_on_train_rows_only():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(12, 5))
    attrs = rng.integers(0, 2, size=(12, 2))
    train = np.arange(8)
    F = rf_features(X, attrs, train, 3)
    assert F.shape == (12, 5)
    assert np.array_equal(F[:, 3:], attrs)
    X2 = X.copy()
    X2[8:] += 100.0  # test rows do not influence the basis
    F2 = rf_features(X2, attrs, train, 3)
    assert np.allclose(F[:8], F2[:8])
