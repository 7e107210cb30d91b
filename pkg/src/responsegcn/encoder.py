"""Dense autoencoder that turns liver+tumor volumes into node feature vectors.

Inputs are the two grids flattened row-major and concatenated, then
standardized per dimension with statistics from the training cohort.
Training is plain mini-batch gradient descent on mean squared
reconstruction error.
"""
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import codec
from .dataset import Cohort, Volume
from .errors import DimMismatch, DivergedLoss, InvalidConfig, MissingVolume
from .seeding import make_rng

VARIANCE_FLOOR = 1e-8


@dataclass
class EncoderConfig:
    latent_dim: int = 128
    hidden_widths: list = field(default_factory=list)
    learning_rate: float = 0.05
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0

    def validate(self):
        if int(self.latent_dim) < 1:
            raise InvalidConfig("latent_dim must be >= 1")
        if int(self.epochs) < 1:
            raise InvalidConfig("epochs must be >= 1")
        if int(self.batch_size) < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be > 0")
        if any(int(h) < 1 for h in self.hidden_widths):
            raise InvalidConfig("hidden widths must be >= 1")

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as e:
            raise InvalidConfig(str(e)) from None


@dataclass(eq=False)
class Autoencoder:
    """Layer stack ``encoder + decoder``; the first ``n_encoder`` layers form the encoder."""

    weights: list  # (W, b) per layer, W has shape (fan_in, fan_out)
    activations: list  # "relu" or "linear" per layer
    n_encoder: int
    input_mean: np.ndarray
    input_scale: np.ndarray
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.weights) != len(self.activations):
            raise DimMismatch("one activation per layer required")
        for (w0, _), (w1, _) in zip(self.weights, self.weights[1:]):
            if w0.shape[1] != w1.shape[0]:
                raise DimMismatch(f"layer widths {w0.shape} -> {w1.shape} incompatible")
        if self.weights[-1][0].shape[1] != self.input_dim:
            raise DimMismatch("decoder output width must equal input_dim")

    @property
    def input_dim(self):
        return self.weights[0][0].shape[0]

    @property
    def latent_dim(self):
        return self.weights[self.n_encoder - 1][0].shape[1]

    @property
    def encoder_weights(self):
        return self.weights[: self.n_encoder]

    @property
    def decoder_weights(self):
        return self.weights[self.n_encoder :]


def flatten_input(v: Volume) -> np.ndarray:
    return np.concatenate([v.liver.ravel(order="C"), v.tumor.ravel(order="C")])


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else z


def _forward(weights, activations, X):
    """Return the list of layer outputs, starting with the input itself."""
    outs = [X]
    for (w, b), act in zip(weights, activations):
        outs.append(_act(act, outs[-1] @ w + b))
    return outs


def reconstruction_loss(model: Autoencoder, Xs: np.ndarray):
    """Mean squared reconstruction error of standardized inputs and its gradients.

    Returns ``(loss, grads)`` with ``grads`` a list of ``(dW, db)`` per layer.
    """
    outs = _forward(model.weights, model.activations, Xs)
    diff = outs[-1] - Xs
    loss = float(np.mean(diff * diff))
    delta = 2.0 * diff / diff.size
    grads = [None] * len(model.weights)
    for li in range(len(model.weights) - 1, -1, -1):
        w, _ = model.weights[li]
        if model.activations[li] == "relu":
            delta = delta * (outs[li + 1] > 0)
        grads[li] = (outs[li].T @ delta, delta.sum(axis=0))
        if li:
            delta = delta @ w.T
    return loss, grads


def standardize_stats(X):
    mean = X.mean(axis=0)
    scale = np.sqrt(np.maximum(X.var(axis=0), VARIANCE_FLOOR))
    return mean, scale


def init_autoencoder(input_dim, cfg: EncoderConfig, input_mean=None, input_scale=None) -> Autoencoder:
    latent = min(int(cfg.latent_dim), input_dim)
    hidden = [int(h) for h in cfg.hidden_widths]
    widths = [input_dim, *hidden, latent, *reversed(hidden), input_dim]
    n_enc = len(hidden) + 1
    rng = make_rng(cfg.seed, "autoencoder-init")
    weights = []
    for fan_in, fan_out in zip(widths, widths[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append((rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)))
    acts = ["relu"] * len(hidden) + ["linear"] + ["relu"] * len(hidden) + ["linear"]
    if input_mean is None:
        input_mean = np.zeros(input_dim)
    if input_scale is None:
        input_scale = np.ones(input_dim)
    return Autoencoder(weights, acts, n_enc, np.asarray(input_mean, float), np.asarray(input_scale, float))


def cohort_inputs(cohort: Cohort) -> np.ndarray:
    """Flattened volumes, one row per patient."""
    missing = [p.id for p in cohort.patients if p.volume is None]
    if missing:
        raise MissingVolume(f"patients without volume: {missing[:5]}")
    return np.vstack([flatten_input(p.volume) for p in cohort.patients])


def train_autoencoder(cohort: Cohort, cfg: EncoderConfig) -> Autoencoder:
    return train_autoencoder_array(cohort_inputs(cohort), cfg)


def train_autoencoder_array(X: np.ndarray, cfg: EncoderConfig) -> Autoencoder:
    cfg.validate()
    X = np.asarray(X, dtype=np.float64)
    mean, scale = standardize_stats(X)
    Xs = (X - mean) / scale
    model = init_autoencoder(X.shape[1], cfg, mean, scale)
    rng = make_rng(cfg.seed, "autoencoder-batches")
    n = Xs.shape[0]
    bs = min(int(cfg.batch_size), n)
    lr = float(cfg.learning_rate)
    history = [reconstruction_loss(model, Xs)[0]]
    for _ in range(int(cfg.epochs)):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            batch = Xs[order[start : start + bs]]
            loss, grads = reconstruction_loss(model, batch)
            if not math.isfinite(loss):
                raise DivergedLoss("autoencoder loss became non-finite; lower learning_rate")
            model.weights = [(w - lr * gw, b - lr * gb) for (w, b), (gw, gb) in zip(model.weights, grads)]
        epoch_loss = reconstruction_loss(model, Xs)[0]
        if not math.isfinite(epoch_loss):
            raise DivergedLoss("autoencoder loss became non-finite; lower learning_rate")
        history.append(epoch_loss)
    model.loss_history = history
    return model


def encode_array(model: Autoencoder, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.input_dim:
        raise DimMismatch(f"input has {X.shape[1]} values, model expects {model.input_dim}")
    Xs = (X - model.input_mean) / model.input_scale
    return _forward(model.encoder_weights, model.activations[: model.n_encoder], Xs)[-1]


def encode(model: Autoencoder, v: Volume) -> np.ndarray:
    return encode_array(model, flatten_input(v))[0]


def attach_features(cohort: Cohort, model: Autoencoder) -> Cohort:
    """Copy of ``cohort`` with every feature_vector replaced by the encoding of its volume."""
    cohort_inputs(cohort)  # raises MissingVolume early
    patients = [replace(p, feature_vector=encode(model, p.volume)) for p in cohort.patients]
    return Cohort(patients, cohort.attr_names)


# ------------------------------------------------------------- checkpoints


def autoencoder_to_json(model: Autoencoder) -> str:
    doc = {
        "format": "autoencoder",
        "n_encoder": model.n_encoder,
        "activations": list(model.activations),
        "layers": [{"W": codec.pack_matrix(w), "b": codec.pack_matrix(b)} for w, b in model.weights],
        "input_mean": codec.pack_matrix(model.input_mean),
        "input_scale": codec.pack_matrix(model.input_scale),
        "loss_history": [float(v) for v in model.loss_history],
    }
    return json.dumps(doc, indent=1)


def autoencoder_from_json(text: str) -> Autoencoder:
    doc = json.loads(text)
    if doc.get("format") != "autoencoder":
        raise InvalidConfig("not an autoencoder checkpoint")
    weights = [(codec.unpack_matrix(l["W"]), codec.unpack_matrix(l["b"])) for l in doc["layers"]]
    return Autoencoder(
        weights,
        doc["activations"],
        doc["n_encoder"],
        codec.unpack_matrix(doc["input_mean"]),
        codec.unpack_matrix(doc["input_scale"]),
        doc.get("loss_history", []),
    )
