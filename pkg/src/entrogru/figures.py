"""Matplotlib renderings for the report-producing CLI paths.

Figures are written next to the delimited outputs. PNG metadata is pinned
so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_META = {"Software": "entrogru"}


def _save(fig, path):
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def save_cost_figure(rows, path):
    """Params and MACs per cell variant, derived vs published params."""
    variants = [r["variant"] for r in rows]
    x = np.arange(len(variants))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.bar(x - 0.2, [r["params"] / 1e6 for r in rows], width=0.4, label="derived")
    ax1.bar(x + 0.2, [r["paper_params"] / 1e6 for r in rows], width=0.4,
            label="published")
    ax1.set_xticks(x, variants, rotation=20)
    ax1.set_ylabel("parameters / M")
    ax1.set_yscale("log")
    ax1.legend(fontsize=8)
    ax2.bar(x, [r["macs"] / 1e9 for r in rows], width=0.5, color="tab:green")
    ax2.set_xticks(x, variants, rotation=20)
    ax2.set_ylabel("MACs / G")
    ax2.set_yscale("log")
    fig.tight_layout()
    _save(fig, path)


def save_loss_figure(losses, path):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(np.arange(1, len(losses) + 1), losses, lw=1.0)
    ax.set_xlabel("optimisation step")
    ax.set_ylabel("clip loss")
    ax.set_yscale("log")
    fig.tight_layout()
    _save(fig, path)


def save_ablation_figure(rows, path, module: str = "gru"):
    names = [r["placement"] for r in rows]
    vals = [r["map"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.5, 3.2))
    ax.bar(np.arange(len(names)), vals, color="tab:blue")
    ax.set_xticks(np.arange(len(names)), names, rotation=25)
    ax.set_ylabel("mAP")
    ax.set_title(f"{module} placement")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    _save(fig, path)


def save_eval_figure(metrics, class_names, path):
    per_class = metrics["per_class_ap"]
    ids = sorted(per_class)
    names = [class_names[i] if i < len(class_names) else str(i) for i in ids]
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.bar(np.arange(len(ids)), [per_class[i] for i in ids], color="tab:purple")
    ax.axhline(metrics["map"], color="k", ls="--", lw=1,
               label=f"mAP = {metrics['map']:.3f}")
    ax.set_xticks(np.arange(len(ids)), names, rotation=15)
    ax.set_ylabel("AP @ IoU 0.5")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
