import numpy as np
import pytest

from responsegcn.errors import EmptyPredictions, InvalidConfig, InvalidSampleCount
from responsegcn.gcn import GcnModel, forward, hard_labels
from responsegcn.graph import PatientGraph, normalize_adjacency
from responsegcn.uncertainty import (
    McPrediction,
    majority,
    mc_predict,
    pass_seed,
    predictions_from_json,
    predictions_to_json,
    triage,
    triage_table,
)


def toy(rate=0.15, n=12, seed=0):
    rng = np.random.default_rng(seed)
    W = np.triu(rng.uniform(0, 1, size=(n, n)) * (rng.random((n, n)) < 0.4), 1)
    W = W + W.T
    g = PatientGraph(rng.normal(size=(n, 5)), W, normalize_adjacency(W))
    model = GcnModel(rng.normal(size=(5, 8)), rng.normal(size=(8, 2)), rate)
    return model, g


def test_zero_dropout_gives_full_confidence():
    model, g = toy(rate=0.0)
    preds = mc_predict(model, g, n_samples=20, seed=1)
    assert all(p.confidence == 1.0 for p in preds)
    det = hard_labels(forward(model, g.normalized, g.features).probs)
    assert [p.final for p in preds] == det.tolist()


def test_reproducible_and_matches_recount():
    model, g = toy()
    a = mc_predict(model, g, n_samples=100, seed=42)
    assert a == mc_predict(model, g, n_samples=100, seed=42)
    votes = np.zeros((g.n, 2), dtype=int)
    for i in range(100):
        P = forward(model, g.normalized, g.features, seed=pass_seed(42, i)).probs
        for v in range(g.n):
            votes[v, int(P[v, 1] > P[v, 0])] += 1
    for p in a:
        assert list(p.votes) == votes[p.node].tolist()
        assert sum(p.votes) == 100
        assert p.confidence == max(p.votes) / 100 or p.votes[0] == p.votes[1]


def test_node_subset_and_order_invariance():
    model, g = toy()
    full = {p.node: p for p in mc_predict(model, g, n_samples=30, seed=3)}
    sub = mc_predict(model, g, nodes=[7, 2, 5], n_samples=30, seed=3)
    assert [p.node for p in sub] == [7, 2, 5]
    for p in sub:
        assert p == full[p.node]


def test_confidence_example_63_of_100():
    assert majority([63, 37], [0.6, 0.4]) == 0
    p = McPrediction(0, "a", (63, 37), 0, 0.63, (0.6, 0.4))
    assert triage([p], [0], 0.85).flagged == ["a"]


def test_majority_tie_breaks():
    assert majority([50, 50], [0.4, 0.6]) == 1
    assert majority([50, 50], [0.5, 0.5]) == 0


def test_sample_count_validation():
    model, g = toy()
    with pytest.raises(InvalidSampleCount):
        mc_predict(model, g, n_samples=0)


def test_retained_sets_nested():
    model, g = toy(rate=0.4, n=30, seed=5)
    preds = mc_predict(model, g, n_samples=100, seed=0)
    labels = np.arange(30) % 2
    sets = [set(triage(preds, labels, t).retained) for t in (0.85, 0.90, 0.95)]
    assert sets[0] >= sets[1] >= sets[2]
    for t in (0.85, 0.90, 0.95):
        r = triage(preds, labels, t)
        assert len(r.retained) + len(r.flagged) == 30


def test_threshold_validation():
    p = [McPrediction(0, "a", (1, 0), 0, 1.0, (1.0, 0.0))]
    for bad in (0.5, 0.2, 1.01):
        with pytest.raises(InvalidConfig):
            triage(p, [0], bad)
    with pytest.raises(EmptyPredictions):
        triage([], [], 0.9)


def test_gain_is_relative_percent():
    preds = [
        McPrediction(0, "a", (10, 0), 0, 1.0, (0.9, 0.1)),
        McPrediction(1, "b", (0, 10), 1, 1.0, (0.1, 0.9)),
        McPrediction(2, "c", (6, 4), 0, 0.6, (0.55, 0.45)),
        McPrediction(3, "d", (4, 6), 1, 0.6, (0.45, 0.55)),
    ]
    r = triage(preds, [0, 1, 1, 0], 0.9)
    assert r.retained == ["a", "b"]
    assert r.metrics_all.accuracy == 0.5 and r.metrics_retained.accuracy == 1.0
    assert r.gain_pct()["accuracy"] == pytest.approx(100.0)
    assert r.to_dict()["reference_gain_pct"]["accuracy"] == 6.58


def test_json_round_trip_and_table():
    model, g = toy()
    preds = mc_predict(model, g, n_samples=10, seed=0)
    labels = np.array([1, 0, -1] * 4)
    back, lab = predictions_from_json(predictions_to_json(preds, labels))
    assert back == preds and lab.tolist() == labels.tolist()
    text = triage_table(preds, labels, 0.9)
    assert text.splitlines()[0].split() == ["node_id", "final", "confidence", "true", "retained"]
    assert len(text.splitlines()) == 13
