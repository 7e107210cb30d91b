"""Population graph over patients.

Edges come from shared binary attribute status (one unit of weight per
shared attribute), scaled by the nonnegative Pearson correlation of the two
patients' feature vectors.  The GCN consumes the renormalized adjacency
``D^-1/2 (W + I) D^-1/2``.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Cohort
from .errors import AsymmetricInput, InvalidConfig, LengthMismatch, NegativeWeight, UnknownAttribute

DEFAULT_EDGE_ATTRS = ("Cirrhosis", "Sorafenib")


@dataclass
class GraphConfig:
    edge_attrs: list = field(default_factory=lambda: list(DEFAULT_EDGE_ATTRS))
    correlation_weighting: bool = True
    negative_correlation_policy: str = "clamp_to_zero"

    def __post_init__(self):
        if self.negative_correlation_policy != "clamp_to_zero":
            raise InvalidConfig(f"unsupported negative_correlation_policy {self.negative_correlation_policy!r}")

    def without(self, *attrs) -> "GraphConfig":
        return GraphConfig([a for a in self.edge_attrs if a not in attrs], self.correlation_weighting)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as e:
            raise InvalidConfig(str(e)) from None


@dataclass(eq=False)
class PatientGraph:
    features: np.ndarray  # X, n x d
    adjacency: np.ndarray  # W, n x n
    normalized: np.ndarray  # A_hat, n x n
    attr_names: list = field(default_factory=list)

    @property
    def n(self):
        return self.features.shape[0]


def pearson_similarity(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"vectors of shape {x.shape} and {y.shape}")
    if x.size < 2:
        raise LengthMismatch("need at least 2 entries")
    xc = x - x.mean()
    yc = y - y.mean()
    nx = np.sqrt(xc @ xc)
    ny = np.sqrt(yc @ yc)
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(min(max((xc @ yc) / (nx * ny), 0.0), 1.0))


def similarity_matrix(X) -> np.ndarray:
    """All-pairs ``pearson_similarity`` of the rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] < 2:
        raise LengthMismatch("need at least 2 features")
    Z = X - X.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    nz = norms > 0
    Z[nz] /= norms[nz, None]
    Z[~nz] = 0.0
    return np.clip(Z @ Z.T, 0.0, 1.0)


def agreement_counts(attrs: np.ndarray) -> np.ndarray:
    attrs = np.asarray(attrs)
    if attrs.shape[1] == 0:
        return np.zeros((attrs.shape[0], attrs.shape[0]))
    return (attrs[:, None, :] == attrs[None, :, :]).sum(axis=2).astype(np.float64)


def build_adjacency(cohort: Cohort, cfg: GraphConfig) -> np.ndarray:
    unknown = [a for a in cfg.edge_attrs if a not in cohort.attr_names]
    if unknown:
        raise UnknownAttribute(f"edge attributes not in cohort: {unknown}")
    X = cohort.features()
    W = agreement_counts(cohort.attr_matrix(cfg.edge_attrs))
    if cfg.correlation_weighting:
        W = W * similarity_matrix(X)
    # mirror the strict upper triangle so symmetry and the zero diagonal are exact
    W = np.triu(W, 1)
    return W + W.T


def normalize_adjacency(W) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1] or not np.array_equal(W, W.T):
        raise AsymmetricInput("adjacency must be a symmetric square matrix")
    if np.any(W < 0):
        raise NegativeWeight("adjacency weights must be nonnegative")
    A = W + np.eye(W.shape[0])
    d = 1.0 / np.sqrt(A.sum(axis=1))
    return np.outer(d, d) * A


def build_graph(cohort: Cohort, cfg: GraphConfig) -> PatientGraph:
    W = build_adjacency(cohort, cfg)
    return PatientGraph(cohort.features(), W, normalize_adjacency(W), list(cfg.edge_attrs))


def identity_graph(X) -> PatientGraph:
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    return PatientGraph(X, np.zeros((n, n)), np.eye(n), [])


def spectral_radius(A, iters=5000, tol=1e-12, seed=0) -> float:
    """Largest |eigenvalue| of a symmetric matrix by power iteration on A^2."""
    A = np.asarray(A, dtype=np.float64)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=A.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = A @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(nw - lam) <= tol * max(nw, 1.0):
            lam = nw
            break
        lam = nw
    return float(np.sqrt(lam))


def graph_to_json(graph: PatientGraph) -> str:
    doc = {
        "n": graph.n,
        "attr_names": list(graph.attr_names),
        "W": [float(v) for v in graph.adjacency.ravel()],
        "A_hat": [float(v) for v in graph.normalized.ravel()],
    }
    return json.dumps(doc)


def graph_from_json(text: str, features) -> PatientGraph:
    doc = json.loads(text)
    n = doc["n"]
    W = np.asarray(doc["W"], dtype=np.float64).reshape(n, n)
    A = np.asarray(doc["A_hat"], dtype=np.float64).reshape(n, n)
    return PatientGraph(np.asarray(features, dtype=np.float64), W, A, doc.get("attr_names", []))
