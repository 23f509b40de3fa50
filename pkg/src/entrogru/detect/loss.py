"""SSD-style training loss: L1 box regression plus hard-mined cross-entropy.

The localisation term is the mean absolute error over positive anchors'
encoded offsets; the classification term is cross-entropy over positives
plus the hardest background anchors at a 3:1 negative:positive ratio. With
no positives the localisation term is zero and a minimal negative set keeps
the background signal alive.
"""

from __future__ import annotations

import numpy as np

from ..tensor import Tensor, abs_, log_softmax, mean_all, reshape, take_rows
from .boxes import match_anchors


def ssd_loss_from_matched(loc_pred: Tensor, loc_targets, cls_pred: Tensor,
                          labels, neg_ratio: int = 3):
    """Loss from per-anchor predictions and precomputed match results.

    loc_pred: (n, 4) offsets; cls_pred: (n, classes+1) logits;
    labels: (n,) ints, 0 = background; loc_targets: (n, 4) encoded boxes.
    Returns (loc_loss, cls_loss, total) scalar tensors.
    """
    labels = np.asarray(labels, dtype=np.int64)
    loc_targets = np.asarray(loc_targets, dtype=np.float64)
    n, n_classes = cls_pred.shape
    if loc_pred.shape != (n, 4) or labels.shape != (n,):
        raise ValueError(
            f"inconsistent loss inputs: loc {loc_pred.shape}, cls {cls_pred.shape}, "
            f"labels {labels.shape}")

    pos_idx = np.where(labels > 0)[0]
    logp = log_softmax(cls_pred, axis=1)
    flat = reshape(logp, (n * n_classes, 1))
    nll_all = -flat.data.reshape(n, n_classes)[np.arange(n), labels]

    # hardest negatives by current loss, deterministic tie-break on index
    neg_candidates = np.where(labels == 0)[0]
    n_neg_keep = min(neg_ratio * max(len(pos_idx), 1), len(neg_candidates))
    order = np.lexsort((neg_candidates, -nll_all[neg_candidates]))
    neg_idx = neg_candidates[order[:n_neg_keep]]

    selected = np.concatenate([pos_idx, neg_idx])
    picked = take_rows(flat, selected * n_classes + labels[selected])
    cls_loss = mean_all(-picked)

    if len(pos_idx):
        diff = take_rows(loc_pred, pos_idx) - Tensor(loc_targets[pos_idx],
                                                     dtype=loc_pred.dtype)
        loc_loss = mean_all(abs_(diff))
    else:
        loc_loss = Tensor(np.zeros((), dtype=loc_pred.dtype))
    return loc_loss, cls_loss, loc_loss + cls_loss


def ssd_loss(loc_pred: Tensor, cls_pred: Tensor, anchors, gt_boxes, gt_labels,
             pos_iou: float = 0.5, neg_ratio: int = 3):
    """Match ground truth to anchors, then compute the two-term loss."""
    labels, loc_targets = match_anchors(anchors, gt_boxes, gt_labels, pos_iou)
    return ssd_loss_from_matched(loc_pred, loc_targets, cls_pred, labels,
                                 neg_ratio=neg_ratio)


def random_loss_case(rng):
    """Small seeded loss instance for gradient checking."""
    n, n_classes = 12, 4
    labels = np.array([1, 2, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0], dtype=np.int64)
    loc_pred = Tensor(rng.standard_normal((n, 4)), dtype=np.float64)
    loc_targets = rng.standard_normal((n, 4))
    cls_pred = Tensor(rng.standard_normal((n, n_classes)), dtype=np.float64)
    return loc_pred, loc_targets, cls_pred, labels
