"""Command-line front end.

Every subcommand reads an optional JSON run config (``--config``), lets
flags override it, and derives its random stream from the global seed and
the stage name, so a stage rerun on its own gives the same bytes.

Errors are printed to stderr as one JSON object and the exit code is
nonzero.
"""
import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baseline import ForestConfig
from .dataset import Cohort, SynthConfig, generate_synthetic, load_cohort, save_cohort
from .encoder import EncoderConfig, attach_features, autoencoder_to_json, train_autoencoder
from .errors import InvalidConfig, MissingMeasurements, PipelineError
from .evaluation import (
    has_volumes,
    folds_csv,
    results_json,
    results_table,
    run_ablations,
    run_pipeline_cv,
    run_rf_cv,
)
from .gcn import TrainConfig, history_to_csv, model_from_json, model_to_json, train
from .graph import GraphConfig, build_graph, graph_from_json, graph_to_json
from .qeasl import label_from_measurements
from .seeding import derive_seed
from .uncertainty import (
    DEFAULT_THRESHOLDS,
    mc_predict,
    predictions_from_json,
    predictions_to_json,
    triage,
    triage_table,
)

EXIT_PIPELINE = 1
EXIT_USAGE = 2
EXIT_IO = 3


@dataclass
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    k_folds: int = 10
    n_mc_samples: int = 100
    triage_thresholds: list = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    seed: int = 0

    def validate(self):
        if int(self.k_folds) < 2:
            raise InvalidConfig("k_folds must be >= 2")
        if int(self.n_mc_samples) < 1:
            raise InvalidConfig("n_mc_samples must be >= 1")
        for t in self.triage_thresholds:
            if not 0.5 < float(t) <= 1.0:
                raise InvalidConfig(f"triage threshold {t} outside (0.5, 1.0]")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")
        self.synth.validate()
        self.encoder.validate()
        self.train.validate()

    def stage_seed(self, stage: str) -> int:
        return derive_seed(int(self.seed), stage)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        sections = {
            "synth": SynthConfig.from_dict,
            "encoder": EncoderConfig.from_dict,
            "graph": GraphConfig.from_dict,
            "train": TrainConfig.from_dict,
            "forest": lambda x: ForestConfig(**x),
        }
        kw = {}
        for name, make in sections.items():
            if name in d:
                try:
                    kw[name] = make(d.pop(name))
                except TypeError as e:
                    raise InvalidConfig(str(e)) from None
        for name in ("k_folds", "n_mc_samples", "triage_thresholds", "seed"):
            if name in d:
                kw[name] = d.pop(name)
        d.pop("paths", None)
        if d:
            raise InvalidConfig(f"unknown config keys: {sorted(d)}")
        return cls(**kw)


def load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"config is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise InvalidConfig("config must be a JSON object")
        cfg = RunConfig.from_dict(doc)
    if args.seed is not None:
        cfg.seed = args.seed
    for name in ("k_folds", "n_mc_samples"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "thresholds", None):
        cfg.triage_thresholds = args.thresholds
    if getattr(args, "n_patients", None) is not None:
        cfg.synth = replace(cfg.synth, n_patients=args.n_patients)
    if getattr(args, "edge_attrs", None) is not None:
        cfg.graph = replace(cfg.graph, edge_attrs=[a for a in args.edge_attrs.split(",") if a])
    cfg.validate()
    return cfg


# ------------------------------------------------------------------ output


def write_text(path, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def emit(args, text: str, path=None):
    """Write ``text`` to ``path`` (default ``--out``) or stdout."""
    path = path or args.out
    if path:
        write_text(path, text)
    else:
        sys.stdout.write(text)


def info(args, text: str):
    # tables go to stdout unless --quiet or stdout already carries the primary output
    if not args.quiet and args.out:
        sys.stdout.write(text)


def require(args, name):
    v = getattr(args, name)
    if v is None:
        raise InvalidConfig(f"--{name.replace('_', '-')} is required")
    return v


# ---------------------------------------------------------------- commands


def cmd_synth(args, cfg: RunConfig):
    cohort = generate_synthetic(replace(cfg.synth, seed=cfg.stage_seed("synth")))
    save_cohort(cohort, require(args, "out"))
    info(args, f"wrote {len(cohort.patients)} patients to {args.out}\n")


def cmd_label(args, cfg: RunConfig):
    cohort = load_cohort(require(args, "cohort"))
    patients = []
    for p in cohort.patients:
        if not (p.qeasl_baseline and p.qeasl_followup):
            if not args.allow_unlabelled:
                raise MissingMeasurements(f"patient {p.id!r} has no baseline/follow-up qEASL measurements")
            patients.append(replace(p, label=None))
            continue
        patients.append(replace(p, label=label_from_measurements(p.qeasl_baseline, p.qeasl_followup)))
    out = Cohort(patients, cohort.attr_names)
    save_cohort(out, require(args, "out"))
    n_r = int(np.sum(out.labels() == 1))
    n_nr = int(np.sum(out.labels() == 0))
    info(args, f"labelled {n_r} responders, {n_nr} non-responders\n")


def cmd_encode(args, cfg: RunConfig):
    cohort = load_cohort(require(args, "cohort"))
    model = train_autoencoder(cohort, replace(cfg.encoder, seed=cfg.stage_seed("encode")))
    save_cohort(attach_features(cohort, model), require(args, "out"))
    if args.model_out:
        write_text(args.model_out, autoencoder_to_json(model))
    info(args, f"final reconstruction loss {model.loss_history[-1]:.6g}\n")


def _graph_for(args, cfg, cohort):
    if getattr(args, "graph", None):
        return graph_from_json(Path(args.graph).read_text(), cohort.features())
    return build_graph(cohort, cfg.graph)


def cmd_graph(args, cfg: RunConfig):
    cohort = load_cohort(require(args, "cohort"))
    emit(args, graph_to_json(build_graph(cohort, cfg.graph)))


def cmd_train(args, cfg: RunConfig):
    cohort = load_cohort(require(args, "cohort"))
    graph = _graph_for(args, cfg, cohort)
    labels = cohort.labels()
    model, history = train(graph, labels, labels >= 0, replace(cfg.train, seed=cfg.stage_seed("train")))
    emit(args, model_to_json(model), require(args, "out"))
    if args.history:
        write_text(args.history, history_to_csv(history))
    info(args, f"final training loss {history[-1]:.6g}\n")


def cmd_predict(args, cfg: RunConfig):
    cohort = load_cohort(require(args, "cohort"))
    model = model_from_json(Path(require(args, "model")).read_text())
    graph = _graph_for(args, cfg, cohort)
    nodes = None
    if args.unlabelled_only:
        nodes = np.flatnonzero(cohort.labels() < 0)
    preds = mc_predict(model, graph, nodes, cfg.n_mc_samples, cfg.stage_seed("predict"), cohort.ids)
    labels = cohort.labels()[[p.node for p in preds]]
    emit(args, predictions_to_json(preds, labels))
    info(args, triage_table(preds, labels))


def _encoder_if_volumes(cfg, cohort):
    # imaging cohorts are re-encoded per fold; feature-only cohorts use stored vectors
    return cfg.encoder if has_volumes(cohort) else None


def _write_reports(args, rows):
    table = results_table(rows)
    emit(args, results_json(rows))
    if args.table:
        write_text(args.table, table)
    if args.folds_csv:
        write_text(args.folds_csv, folds_csv(rows))
    info(args, table)


def cmd_crossval(args, cfg: RunConfig):
    cohort = load_cohort(require(args, "cohort"))
    seed = cfg.stage_seed("crossval")
    gcn = run_pipeline_cv(
        cohort, cfg.graph, cfg.train, cfg.k_folds, cfg.n_mc_samples, seed, encoder_cfg=_encoder_if_volumes(cfg, cohort)
    )
    rf = run_rf_cv(cohort, cfg.forest, cfg.k_folds, seed, folds=[(np.array(a), np.array(b)) for a, b in gcn.folds])
    _write_reports(args, {"GCN": gcn, "RF": rf})
    if args.predictions_out:
        labels = cohort.labels()[[p.node for p in gcn.predictions]]
        write_text(args.predictions_out, predictions_to_json(gcn.predictions, labels))


def cmd_ablate(args, cfg: RunConfig):
    cohort = load_cohort(require(args, "cohort"))
    rows = run_ablations(
        cohort,
        cfg.graph,
        cfg.train,
        cfg.k_folds,
        cfg.n_mc_samples,
        cfg.stage_seed("ablate"),
        encoder_cfg=_encoder_if_volumes(cfg, cohort),
    )
    _write_reports(args, rows)


def cmd_triage(args, cfg: RunConfig):
    if args.predictions:
        preds, labels = predictions_from_json(Path(args.predictions).read_text())
    else:
        cohort = load_cohort(require(args, "cohort"))
        r = run_pipeline_cv(
            cohort,
            cfg.graph,
            cfg.train,
            cfg.k_folds,
            cfg.n_mc_samples,
            cfg.stage_seed("crossval"),
            encoder_cfg=_encoder_if_volumes(cfg, cohort),
        )
        preds = r.predictions
        labels = cohort.labels()[[p.node for p in preds]]
    keep = labels >= 0
    preds = [p for p, k in zip(preds, keep) if k]
    labels = labels[keep]
    reports = [triage(preds, labels, float(t)) for t in cfg.triage_thresholds]
    emit(args, json.dumps({"reports": [r.to_dict() for r in reports]}, indent=1))
    lines = ["threshold  retained  flagged  acc_all  acc_retained  gain_acc_%"]
    for r in reports:
        acc_r = "n/a" if r.metrics_retained is None else f"{r.metrics_retained.accuracy:.3f}"
        gain = r.gain_pct()["accuracy"]
        lines.append(
            f"{r.threshold:<9.2f}  {len(r.retained):<8d}  {len(r.flagged):<7d}  "
            f"{r.metrics_all.accuracy:<7.3f}  {acc_r:<12}  {'n/a' if gain is None else f'{gain:.2f}'}"
        )
    info(args, "\n".join(lines) + "\n")


COMMANDS = {
    "synth": cmd_synth,
    "label": cmd_label,
    "encode": cmd_encode,
    "graph": cmd_graph,
    "train": cmd_train,
    "predict": cmd_predict,
    "crossval": cmd_crossval,
    "ablate": cmd_ablate,
    "triage": cmd_triage,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its fields")
    common.add_argument("--seed", type=int, help="global seed (unsigned 64-bit)")
    common.add_argument("--out", help="primary output path")
    common.add_argument("--quiet", action="store_true", help="suppress informational output")

    p = argparse.ArgumentParser(prog="responsegcn", description="TACE response prediction pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    s.add_argument("--n-patients", type=int)

    s = sub.add_parser("label", parents=[common], help="label patients from qEASL measurements")
    s.add_argument("--cohort")
    s.add_argument("--allow-unlabelled", action="store_true", help="leave patients without measurements unlabelled")

    s = sub.add_parser("encode", parents=[common], help="train the autoencoder and attach features")
    s.add_argument("--cohort")
    s.add_argument("--model-out")

    s = sub.add_parser("graph", parents=[common], help="build the population graph")
    s.add_argument("--cohort")
    s.add_argument("--edge-attrs", help="comma-separated edge attributes")

    s = sub.add_parser("train", parents=[common], help="train the GCN on all labelled nodes")
    s.add_argument("--cohort")
    s.add_argument("--graph")
    s.add_argument("--edge-attrs")
    s.add_argument("--history", help="per-epoch loss CSV")

    s = sub.add_parser("predict", parents=[common], help="MC-dropout predictions")
    s.add_argument("--cohort")
    s.add_argument("--model")
    s.add_argument("--graph")
    s.add_argument("--edge-attrs")
    s.add_argument("--n-mc-samples", dest="n_mc_samples", type=int)
    s.add_argument("--unlabelled-only", action="store_true")

    for name, helptext in (("crossval", "k-fold CV of GCN and RF"), ("ablate", "graph ablation suite")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--cohort")
        s.add_argument("--edge-attrs")
        s.add_argument("--k-folds", dest="k_folds", type=int)
        s.add_argument("--n-mc-samples", dest="n_mc_samples", type=int)
        s.add_argument("--table", help="text table path")
        s.add_argument("--folds-csv", help="per-fold metrics CSV path")
        if name == "crossval":
            s.add_argument("--predictions-out", help="out-of-fold MC predictions JSON")

    s = sub.add_parser("triage", parents=[common], help="confidence-based triage")
    s.add_argument("--predictions", help="predictions JSON from predict or crossval")
    s.add_argument("--cohort", help="run cross-validation instead of reading predictions")
    s.add_argument("--edge-attrs")
    s.add_argument("--k-folds", dest="k_folds", type=int)
    s.add_argument("--n-mc-samples", dest="n_mc_samples", type=int)
    s.add_argument("--thresholds", type=float, nargs="+")
    return p


def fail(code: int, payload: dict) -> int:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = load_run_config(args)
        COMMANDS[args.command](args, cfg)
    except InvalidConfig as e:
        return fail(EXIT_USAGE, e.to_dict())
    except PipelineError as e:
        return fail(EXIT_PIPELINE, e.to_dict())
    except OSError as e:
        return fail(EXIT_IO, {"error": "IoError", "message": str(e)})
    except (ValueError, KeyError) as e:
        return fail(EXIT_PIPELINE, {"error": type(e).__name__, "message": str(e)})
    return 0


if __name__ == "__main__":
    sys.exit(main())
