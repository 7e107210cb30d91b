"""Per-node two-layer MLP: the graph-free counterpart of the GCN.

Written without any propagation matrix so that a GCN on an edgeless graph
(A_hat = I) can be checked against it bit for bit.  Initialization, dropout
streams and the optimizer are shared with :mod:`responsegcn.gcn`.
"""
import numpy as np

from .gcn import (
    Adam,
    GcnModel,
    TrainConfig,
    apply_dropout,
    dropout_masks,
    epoch_seed,
    init_model,
    logit_gradient,
    masked_loss,
    softmax_rows,
)


def mlp_forward(model: GcnModel, X, seed=None):
    p = model.dropout_rate
    m0 = m1 = None
    if seed is not None:
        m0, m1 = dropout_masks(seed, X.shape, (X.shape[0], model.hidden_dim), p)
    x_in = apply_dropout(X, m0, p)
    pre = x_in @ model.w0
    h_in = apply_dropout(np.maximum(pre, 0.0), m1, p)
    probs = softmax_rows(h_in @ model.w1)
    return {"x_in": x_in, "pre": pre, "h_in": h_in, "m1": m1, "probs": probs}


def mlp_backward(cache, labels, mask, model: GcnModel, weight_decay):
    d_logits = logit_gradient(cache["probs"], labels, mask)
    dw1 = cache["h_in"].T @ d_logits
    d_pre = apply_dropout(d_logits @ model.w1.T, cache["m1"], model.dropout_rate) * (cache["pre"] > 0)
    dw0 = cache["x_in"].T @ d_pre + weight_decay * model.w0
    return dw0, dw1


def mlp_train(X, labels, train_mask, cfg: TrainConfig):
    cfg.validate()
    model = init_model(X.shape[1], cfg)
    opt = Adam(cfg.learning_rate)
    history = []
    for epoch in range(int(cfg.epochs)):
        cache = mlp_forward(model, X, seed=epoch_seed(cfg.seed, epoch))
        history.append(masked_loss(cache["probs"], labels, train_mask, model, cfg.weight_decay))
        w0, w1 = opt.step([model.w0, model.w1], mlp_backward(cache, labels, train_mask, model, cfg.weight_decay))
        model = GcnModel(w0, w1, model.dropout_rate)
    return model, history


def mlp_predict(model: GcnModel, X, seed=None):
    return mlp_forward(model, X, seed)["probs"]
