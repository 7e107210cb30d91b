"""Treatment-response prediction on patient population graphs.

Pipeline: qEASL responder labels -> autoencoder node features ->
attribute/correlation patient graph -> two-layer GCN -> MC-dropout
confidence triage, with cross-validation, ablations and an RF baseline.
"""
__version__ = "0.1.0"
