"""Cross-validated evaluation of the GCN pipeline, its ablations and the RF baseline."""
import csv
import io
import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .baseline import ForestConfig, rf_features, rf_predict, train_random_forest
from .dataset import Cohort, stratified_kfold
from .encoder import EncoderConfig, cohort_inputs, encode_array, train_autoencoder_array
from .gcn import TrainConfig, train
from .graph import GraphConfig, build_graph
from .metrics import Metrics, binary_metrics
from .seeding import derive_seed
from .uncertainty import mc_predict


@dataclass
class CvResult:
    per_fold: list
    mean: Metrics
    std: Metrics
    # out-of-fold McPredictions (GCN runs only), in fold order
    predictions: list = field(default_factory=list)
    folds: list = field(default_factory=list)

    def to_dict(self):
        return {
            "per_fold": [m.to_dict() for m in self.per_fold],
            "mean": self.mean.to_dict(),
            "std": self.std.to_dict(),
        }


def _nanstat(values, fn):
    vals = [v for v in values if v is not None]
    return float(fn(vals)) if vals else None


def aggregate(per_fold) -> tuple:
    """Mean and population std over folds; AUC ignores folds where it is undefined."""
    mean = Metrics(
        float(np.mean([m.accuracy for m in per_fold])),
        float(np.mean([m.f1 for m in per_fold])),
        _nanstat([m.auc for m in per_fold], np.mean),
    )
    std = Metrics(
        float(np.std([m.accuracy for m in per_fold])),
        float(np.std([m.f1 for m in per_fold])),
        _nanstat([m.auc for m in per_fold], np.std),
    )
    return mean, std


def has_volumes(cohort: Cohort) -> bool:
    return all(p.volume is not None for p in cohort.patients)


def with_features(cohort: Cohort, X) -> Cohort:
    return Cohort([replace(p, feature_vector=row) for p, row in zip(cohort.patients, X)], cohort.attr_names)


def fold_feature_sets(cohort: Cohort, folds, encoder_cfg: EncoderConfig, seed=0) -> list:
    """Node features per fold from an autoencoder fit on that fold's training volumes only."""
    X = cohort_inputs(cohort)
    out = []
    for f, (train_idx, _) in enumerate(folds):
        cfg = replace(encoder_cfg, seed=derive_seed(seed, "fold-ae", f))
        out.append(encode_array(train_autoencoder_array(X[train_idx], cfg), X))
    return out


def run_pipeline_cv(
    cohort: Cohort,
    graph_cfg: GraphConfig,
    train_cfg: TrainConfig,
    k: int = 10,
    n_mc: int = 100,
    seed: int = 0,
    folds=None,
    encoder_cfg: Optional[EncoderConfig] = None,
    features=None,
) -> CvResult:
    """k-fold CV of graph construction + GCN training + MC-dropout prediction.

    The graph spans every patient in every fold; only the loss is restricted
    to the fold's training nodes.  With ``encoder_cfg`` the node features are
    re-encoded per fold by an autoencoder that never sees the test volumes;
    ``features`` may carry those per-fold matrices precomputed.  Otherwise
    the cohort's stored feature vectors are used.
    """
    labels = cohort.labels()
    folds = folds if folds is not None else stratified_kfold(cohort, k, seed)
    if features is None and encoder_cfg is not None:
        features = fold_feature_sets(cohort, folds, encoder_cfg, seed)
    graph = None if features is not None else build_graph(cohort, graph_cfg)
    per_fold, preds = [], []
    for f, (train_idx, test_idx) in enumerate(folds):
        if features is not None:
            graph = build_graph(with_features(cohort, features[f]), graph_cfg)
        mask = np.zeros(len(labels), dtype=bool)
        mask[train_idx] = True
        cfg = replace(train_cfg, seed=derive_seed(seed, "fold-train", f))
        model, _ = train(graph, labels, mask, cfg)
        fold_preds = mc_predict(model, graph, test_idx, n_mc, derive_seed(seed, "fold-mc", f), cohort.ids)
        per_fold.append(
            binary_metrics(
                np.array([p.final for p in fold_preds]),
                np.array([p.mean_prob[1] for p in fold_preds]),
                labels[test_idx],
            )
        )
        preds.extend(fold_preds)
    mean, std = aggregate(per_fold)
    return CvResult(per_fold, mean, std, preds, [(tr.tolist(), te.tolist()) for tr, te in folds])


def ablation_variants(base_cfg: GraphConfig) -> dict:
    """Full graph, one variant per dropped edge attribute, and the edgeless graph."""
    variants = {"full": base_cfg}
    for a in base_cfg.edge_attrs:
        variants[f"w/o {a}"] = base_cfg.without(a)
    variants["w/o non-imaging"] = base_cfg.without(*base_cfg.edge_attrs)
    return variants


def run_ablations(
    cohort, base_cfg: GraphConfig, train_cfg: TrainConfig, k=10, n_mc=100, seed=0, encoder_cfg=None
) -> dict:
    """All ablation variants on shared folds, seeds and per-fold features."""
    folds = stratified_kfold(cohort, k, seed)
    feats = None if encoder_cfg is None else fold_feature_sets(cohort, folds, encoder_cfg, seed)
    return {
        name: run_pipeline_cv(cohort, cfg, train_cfg, k, n_mc, seed, folds=folds, features=feats)
        for name, cfg in ablation_variants(base_cfg).items()
    }


def run_rf_cv(cohort: Cohort, forest_cfg: Optional[ForestConfig] = None, k=10, seed=0, folds=None) -> CvResult:
    """CV of the PCA + random forest baseline on imaging plus all binary attributes.

    Imaging means the flattened volumes when every patient has one, else
    the stored feature vectors.  PCA is refit on each fold's training rows.
    """
    forest_cfg = forest_cfg or ForestConfig()
    labels = cohort.labels()
    X = cohort_inputs(cohort) if has_volumes(cohort) else cohort.features()
    attrs = cohort.attr_matrix()
    folds = folds if folds is not None else stratified_kfold(cohort, k, seed)
    per_fold = []
    for f, (train_idx, test_idx) in enumerate(folds):
        Z = rf_features(X, attrs, train_idx, forest_cfg.n_components, seed=derive_seed(seed, "fold-pca", f))
        forest = train_random_forest(Z[train_idx], labels[train_idx], forest_cfg, derive_seed(seed, "fold-rf", f))
        pred, score = rf_predict(forest, Z[test_idx])
        per_fold.append(binary_metrics(pred, score, labels[test_idx]))
    mean, std = aggregate(per_fold)
    return CvResult(per_fold, mean, std, [], [(tr.tolist(), te.tolist()) for tr, te in folds])


# ----------------------------------------------------------------- reports


def _pm(mean, std):
    if mean is None:
        return "n/a"
    return f"{mean:.3f} ± {std:.3f}"


def results_table(rows: dict) -> str:
    """Text table with one row per method: Method | Accuracy (std) | F1 (std) | AUC (std)."""
    header = ("Method", "Accuracy (std)", "F1 (std)", "AUC (std)")
    body = [
        (
            name,
            _pm(r.mean.accuracy, r.std.accuracy),
            _pm(r.mean.f1, r.std.f1),
            _pm(r.mean.auc, r.std.auc),
        )
        for name, r in rows.items()
    ]
    widths = [max(len(row[j]) for row in [header, *body]) for j in range(4)]

    def fmt(row):
        return " | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()

    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([fmt(header), sep, *map(fmt, body)]) + "\n"


def results_json(rows: dict) -> str:
    return json.dumps({name: r.to_dict() for name, r in rows.items()}, indent=1)


def folds_csv(rows: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "fold", "accuracy", "f1", "auc"])
    for name, r in rows.items():
        for i, m in enumerate(r.per_fold):
            w.writerow([name, i, repr(m.accuracy), repr(m.f1), "" if m.auc is None else repr(m.auc)])
    return buf.getvalue()
