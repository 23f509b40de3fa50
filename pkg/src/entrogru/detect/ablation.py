"""Placement ablations: retrain the same seed at every attachment point.

One model is trained per placement on an identical dataset and weight-init
stream, so rows differ only in where the module sits; the "None" row is the
plain frame-wise baseline.
"""

from __future__ import annotations

from dataclasses import replace

from .train import TrainConfig, make_benchmark_data, train_and_eval

ABLATION_MODULES = ("gru", "ie")


def run_ablation(placements, cfg: TrainConfig, module: str = "gru"):
    """Train/evaluate one model per placement; returns [{placement, map}, ...]."""
    if module not in ABLATION_MODULES:
        raise ValueError(f"module must be one of {ABLATION_MODULES}, got {module!r}")
    names = [str(p) for p in placements]
    if len(names) < 2 or not any(n.lower() == "none" for n in names):
        raise ValueError("ablation needs at least two placements including 'None'")
    train_seqs, test_seqs = make_benchmark_data(cfg)
    rows = []
    for name in names:
        placement = None if name.lower() == "none" else name
        if module == "gru":
            run_cfg = replace(cfg, gru_placement=placement)
        else:
            run_cfg = replace(cfg, ie_placement=placement)
        result = train_and_eval(run_cfg, train_seqs, test_seqs)
        rows.append({"placement": name, "map": result["metrics"]["map"]})
    return rows
