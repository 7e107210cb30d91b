"""Two-layer graph convolutional classifier trained from scratch.

    H = relu(A_hat @ drop(X) @ W0)
    P = softmax(A_hat @ drop(H) @ W1)

``drop`` is inverted dropout when a dropout seed is given and the identity
otherwise.  The loss is cross-entropy over the masked (labelled training)
nodes plus L2 weight decay on ``W0``.
"""
import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import codec
from .errors import EmptyMask, InvalidConfig, NonFiniteInput, ShapeMismatch, StaleTrace
from .seeding import derive_seed, make_rng

N_CLASSES = 2
LOG_FLOOR = 1e-12


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 200
    dropout_rate: float = 0.15
    hidden_dim: int = 16
    seed: int = 0

    def validate(self):
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise InvalidConfig("weight_decay must be >= 0")
        if int(self.epochs) < 1:
            raise InvalidConfig("epochs must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig("dropout_rate must lie in [0, 1)")
        if int(self.hidden_dim) < 1:
            raise InvalidConfig("hidden_dim must be >= 1")

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as e:
            raise InvalidConfig(str(e)) from None


@dataclass(eq=False)
class GcnModel:
    w0: np.ndarray
    w1: np.ndarray
    dropout_rate: float = 0.15

    def __post_init__(self):
        if self.w0.ndim != 2 or self.w1.ndim != 2 or self.w0.shape[1] != self.w1.shape[0]:
            raise ShapeMismatch(f"W0 {self.w0.shape} and W1 {self.w1.shape} do not chain")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig("dropout_rate must lie in [0, 1)")

    @property
    def hidden_dim(self):
        return self.w0.shape[1]

    @property
    def n_classes(self):
        return self.w1.shape[1]


@dataclass(eq=False)
class ForwardTrace:
    x_in: np.ndarray  # dropped input features
    mask0: Optional[np.ndarray]
    pre_hidden: np.ndarray  # A_hat @ x_in @ W0
    hidden: np.ndarray
    h_in: np.ndarray  # dropped hidden activations
    mask1: Optional[np.ndarray]
    logits: np.ndarray
    probs: np.ndarray
    a_hat: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    dropout_rate: float


def glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(d: int, cfg: TrainConfig) -> GcnModel:
    rng = make_rng(cfg.seed, "gcn-init")
    w0 = glorot(rng, d, int(cfg.hidden_dim))
    w1 = glorot(rng, int(cfg.hidden_dim), N_CLASSES)
    return GcnModel(w0, w1, float(cfg.dropout_rate))


def softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def dropout_masks(seed, shape0, shape1, rate):
    """Keep-masks for the two dropout sites, drawn in a fixed order from one stream."""
    rng = make_rng(seed, "dropout")
    return rng.random(shape0) >= rate, rng.random(shape1) >= rate


def apply_dropout(x, mask, rate):
    if mask is None:
        return x
    return x * mask * (1.0 / (1.0 - rate))


def forward(model: GcnModel, a_hat, X, seed: Optional[int] = None) -> ForwardTrace:
    """One forward pass; ``seed=None`` is deterministic, an int activates dropout."""
    n = X.shape[0]
    if a_hat.shape != (n, n) or X.shape[1] != model.w0.shape[0]:
        raise ShapeMismatch(f"A_hat {a_hat.shape}, X {X.shape}, W0 {model.w0.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(a_hat))):
        raise NonFiniteInput("non-finite entries in graph or features")
    p = model.dropout_rate
    mask0 = mask1 = None
    if seed is not None:
        mask0, mask1 = dropout_masks(seed, X.shape, (n, model.hidden_dim), p)
    x_in = apply_dropout(X, mask0, p)
    pre = a_hat @ (x_in @ model.w0)
    h = np.maximum(pre, 0.0)
    h_in = apply_dropout(h, mask1, p)
    logits = a_hat @ (h_in @ model.w1)
    return ForwardTrace(x_in, mask0, pre, h, h_in, mask1, logits, softmax_rows(logits), a_hat, model.w0, model.w1, p)


def _check_mask(mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("loss mask selects no nodes")
    return mask


def masked_loss(P, labels, mask, model: GcnModel, weight_decay: float) -> float:
    mask = _check_mask(mask)
    idx = np.flatnonzero(mask)
    y = np.asarray(labels)[idx]
    ce = -np.log(np.maximum(P[idx, y], LOG_FLOOR)).mean()
    return float(ce + 0.5 * weight_decay * np.sum(model.w0 * model.w0))


def logit_gradient(P, labels, mask):
    """d(mean masked cross-entropy)/d(logits)."""
    mask = _check_mask(mask)
    idx = np.flatnonzero(mask)
    G = np.zeros_like(P)
    G[idx] = P[idx]
    G[idx, np.asarray(labels)[idx]] -= 1.0
    return G / idx.size


def backward(trace: ForwardTrace, labels, mask, model: GcnModel, weight_decay: float):
    """Exact gradients of ``masked_loss`` with respect to ``(W0, W1)``."""
    if trace.w0 is not model.w0 or trace.w1 is not model.w1:
        raise StaleTrace("trace was computed with different weights")
    p = trace.dropout_rate
    d_logits = logit_gradient(trace.probs, labels, mask)
    g1 = trace.a_hat.T @ d_logits
    dw1 = trace.h_in.T @ g1
    d_h = apply_dropout(g1 @ model.w1.T, trace.mask1, p)
    d_pre = d_h * (trace.pre_hidden > 0)
    g0 = trace.a_hat.T @ d_pre
    dw0 = trace.x_in.T @ g0 + weight_decay * model.w0
    return dw0, dw1


class Adam:
    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        """Return updated copies of ``params``; inputs are left untouched."""
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def epoch_seed(seed: int, epoch: int) -> int:
    return derive_seed(seed, "gcn-epoch", epoch)


def train(graph, labels, train_mask, cfg: TrainConfig):
    """Full-batch transductive training; returns ``(model, per-epoch losses)``."""
    cfg.validate()
    a_hat, X = graph.normalized, graph.features
    labels = np.asarray(labels)
    train_mask = _check_mask(train_mask)
    model = init_model(X.shape[1], cfg)
    opt = Adam(cfg.learning_rate)
    history = []
    for epoch in range(int(cfg.epochs)):
        trace = forward(model, a_hat, X, seed=epoch_seed(cfg.seed, epoch))
        history.append(masked_loss(trace.probs, labels, train_mask, model, cfg.weight_decay))
        grads = backward(trace, labels, train_mask, model, cfg.weight_decay)
        w0, w1 = opt.step([model.w0, model.w1], grads)
        model = GcnModel(w0, w1, model.dropout_rate)
    return model, history


def predict(model: GcnModel, graph, seed: Optional[int] = None) -> np.ndarray:
    return forward(model, graph.normalized, graph.features, seed).probs


def hard_labels(P) -> np.ndarray:
    # argmax returns the first maximum, so exact ties go to class 0 (NonResponder)
    return np.argmax(P, axis=1)


# ------------------------------------------------------------- checkpoints


def model_to_json(model: GcnModel) -> str:
    doc = {
        "format": "gcn",
        "dropout_rate": model.dropout_rate,
        "hidden_dim": model.hidden_dim,
        "n_classes": model.n_classes,
        "W0": codec.pack_matrix(model.w0),
        "W1": codec.pack_matrix(model.w1),
    }
    return json.dumps(doc, indent=1)


def model_from_json(text: str) -> GcnModel:
    doc = json.loads(text)
    if doc.get("format") != "gcn":
        raise InvalidConfig("not a GCN checkpoint")
    return GcnModel(codec.unpack_matrix(doc["W0"]), codec.unpack_matrix(doc["W1"]), float(doc["dropout_rate"]))


def history_to_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "loss"])
    for i, loss in enumerate(history):
        w.writerow([i, repr(float(loss))])
    return buf.getvalue()
