"""PCA + random forest baseline on the same imaging and binary features.

PCA uses power iteration with deflation on the sample covariance.  The
forest is bagged CART with Gini impurity and a random feature subset per
node; its positive-class vote fraction serves as the ranking score.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateData, InvalidConfig, TooFewSamples
from .seeding import make_rng


@dataclass
class PcaBasis:
    mean: np.ndarray
    components: np.ndarray  # k x d, rows are unit eigenvectors (or zero rows)
    eigenvalues: np.ndarray

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, S):
        return S @ self.components + self.mean


def _fix_sign(v):
    j = np.argmax(np.abs(v))
    return -v if v[j] < 0 else v


def pca_reduce(X, n_components: int, tol: float = 1e-10, max_iter: int = 20000, seed: int = 0):
    """Project ``X`` onto its top principal directions.

    Returns ``(scores, basis)``.  Directions with (numerically) zero variance
    come back as zero rows, so their scores are zero.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DegenerateData("need at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise DegenerateData("non-finite input")
    n, d = X.shape
    k = int(n_components)
    if not 1 <= k <= d:
        raise InvalidConfig(f"n_components must lie in [1, {d}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / (n - 1)
    total = np.trace(C)
    rng = make_rng(seed, "pca")
    comps = np.zeros((k, d))
    lams = np.zeros(k)
    R = C.copy()
    for c in range(k):
        if total <= 0:
            break
        prev = comps[:c]
        v = rng.normal(size=d)
        v -= prev.T @ (prev @ v)
        v /= np.linalg.norm(v)
        for _ in range(max_iter):
            w = R @ v
            w -= prev.T @ (prev @ w)  # stay orthogonal to accepted components
            nw = np.linalg.norm(w)
            if nw <= 1e-14 * total:
                v = None
                break
            w /= nw
            if w @ v < 0:
                w = -w
            done = np.linalg.norm(w - v) < tol
            v = w
            if done:
                break
        if v is None:
            break
        lam = float(v @ C @ v)
        if lam <= 1e-12 * total:
            break
        v = _fix_sign(v)
        comps[c], lams[c] = v, lam
        R = R - lam * np.outer(v, v)
    basis = PcaBasis(mean, comps, lams)
    return basis.transform(X), basis


# ------------------------------------------------------------ decision tree


def _gini_from_counts(counts):
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / n[..., None]
    return 1.0 - np.nansum(p * p, axis=-1)


@dataclass
class DecisionTree:
    max_depth: int = 8
    min_samples_split: int = 2
    max_features: Optional[int] = None
    n_classes: int = 2
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)  # class distribution per node

    def fit(self, X, y, rng=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        self._rng = rng
        self._grow(X, y, np.arange(len(y)), 0)
        del self._rng
        return self

    def _new_node(self, y_node):
        counts = np.bincount(y_node, minlength=self.n_classes).astype(np.float64)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(counts / counts.sum())
        return len(self.feature) - 1

    def _candidate_features(self, d):
        if self.max_features is None or self.max_features >= d:
            return np.arange(d)
        return np.sort(self._rng.choice(d, size=self.max_features, replace=False))

    def _best_split(self, X, y, features):
        best = (np.inf, -1, 0.0)
        onehot = np.eye(self.n_classes)[y]
        n = len(y)
        for f in features:
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            valid = np.flatnonzero(xs[1:] > xs[:-1])  # split after position i
            if valid.size == 0:
                continue
            left = np.cumsum(onehot[order], axis=0)[valid]
            right = onehot.sum(axis=0) - left
            nl = valid + 1.0
            score = (nl * _gini_from_counts(left) + (n - nl) * _gini_from_counts(right)) / n
            j = int(np.argmin(score))
            if score[j] < best[0]:
                best = (float(score[j]), int(f), 0.5 * (xs[valid[j]] + xs[valid[j] + 1]))
        return best

    def _grow(self, X, y, idx, depth):
        node = self._new_node(y[idx])
        y_node = y[idx]
        if depth >= self.max_depth or len(idx) < self.min_samples_split or np.all(y_node == y_node[0]):
            return node
        _, f, thr = self._best_split(X[idx], y_node, self._candidate_features(X.shape[1]))
        if f < 0:
            return node
        go_left = X[idx, f] <= thr
        self.feature[node], self.threshold[node] = f, thr
        self.left[node] = self._grow(X, y, idx[go_left], depth + 1)
        self.right[node] = self._grow(X, y, idx[~go_left], depth + 1)
        return node

    def apply(self, X):
        X = np.asarray(X, dtype=np.float64)
        feature = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            goes_left = X[rows, feature[cur]] <= thr[cur]
            node[rows] = np.where(goes_left, left[cur], right[cur])
            active = feature[node] >= 0
        return node

    def predict_proba(self, X):
        return np.asarray(self.value)[self.apply(X)]

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


# ------------------------------------------------------------ random forest


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 8
    features_per_split: Optional[int] = None  # None -> ceil(sqrt(d))
    min_samples_split: int = 2
    bootstrap: bool = True
    n_components: int = 16


@dataclass
class RandomForest:
    trees: list
    n_trees: int
    max_depth: int
    features_per_split: int
    seed: int


def train_random_forest(X, labels, cfg: ForestConfig = None, seed: int = 0) -> RandomForest:
    cfg = cfg or ForestConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if min(np.sum(y == 0), np.sum(y == 1)) < 2:
        raise TooFewSamples("random forest needs >= 2 samples of each class")
    d = X.shape[1]
    m = cfg.features_per_split or math.ceil(math.sqrt(d))
    rng = make_rng(seed, "forest")
    trees = []
    for _ in range(int(cfg.n_trees)):
        idx = rng.integers(0, len(y), size=len(y)) if cfg.bootstrap else np.arange(len(y))
        tree = DecisionTree(cfg.max_depth, cfg.min_samples_split, m)
        trees.append(tree.fit(X[idx], y[idx], rng))
    return RandomForest(trees, int(cfg.n_trees), int(cfg.max_depth), int(m), int(seed))


def rf_predict(forest: RandomForest, X):
    """Majority-vote labels (ties -> class 0) and positive-class vote fractions."""
    votes = np.vstack([t.predict(X) for t in forest.trees])
    frac = votes.mean(axis=0)
    return (frac > 0.5).astype(np.int64), frac


def rf_features(X_imaging, attrs, train_idx, n_components, seed=0):
    """PCA fitted on training rows only, then binary attributes appended as columns."""
    k = min(int(n_components), X_imaging.shape[1], len(train_idx) - 1)
    _, basis = pca_reduce(X_imaging[train_idx], max(k, 1), seed=seed)
    return np.hstack([basis.transform(X_imaging), np.asarray(attrs, dtype=np.float64)])
