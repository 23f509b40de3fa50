"""Axis-aligned box arithmetic: IoU, NMS, anchor grids and SSD matching.

Boxes are (x_min, y_min, x_max, y_max) rows in image coordinates.
"""

from __future__ import annotations

import numpy as np


def check_boxes(boxes) -> np.ndarray:
    arr = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    bad = (arr[:, 0] >= arr[:, 2]) | (arr[:, 1] >= arr[:, 3])
    if bad.any():
        raise ValueError(f"degenerate box (min >= max): {arr[bad][0].tolist()}")
    return arr


def iou(a, b) -> float:
    """Intersection over union of two boxes."""
    return float(iou_matrix(check_boxes(a), check_boxes(b))[0, 0])


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (n, 4) and (m, 4) box arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[:, :, 0] * wh[:, :, 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)


def nms(boxes, scores, iou_threshold: float = 0.5):
    """Greedy non-maximum suppression; returns kept indices, best first.

    Ties in score break toward the earlier index so results are
    reproducible.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    order = np.lexsort((np.arange(len(scores)), -scores))
    keep = []
    suppressed = np.zeros(len(scores), dtype=bool)
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        ious = iou_matrix(boxes[i:i + 1], boxes)[0]
        suppressed |= ious > iou_threshold
        suppressed[i] = True
    return keep


def encode_boxes(anchors: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """SSD offsets: centre deltas relative to anchor size, log size ratios."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = anchors[:, 0] + 0.5 * aw
    acy = anchors[:, 1] + 0.5 * ah
    gw = gt[:, 2] - gt[:, 0]
    gh = gt[:, 3] - gt[:, 1]
    gcx = gt[:, 0] + 0.5 * gw
    gcy = gt[:, 1] + 0.5 * gh
    return np.stack([(gcx - acx) / aw, (gcy - acy) / ah,
                     np.log(gw / aw), np.log(gh / ah)], axis=1)


def decode_boxes(anchors: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = anchors[:, 0] + 0.5 * aw
    acy = anchors[:, 1] + 0.5 * ah
    cx = offsets[:, 0] * aw + acx
    cy = offsets[:, 1] * ah + acy
    w = np.exp(offsets[:, 2]) * aw
    h = np.exp(offsets[:, 3]) * ah
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)


def grid_anchors(image_size: int, feature_size: int, scales, ratios) -> np.ndarray:
    """Anchor boxes for one feature map, ordered (y, x, scale, ratio)."""
    stride = image_size / feature_size
    out = []
    for gy in range(feature_size):
        for gx in range(feature_size):
            cx = (gx + 0.5) * stride
            cy = (gy + 0.5) * stride
            for s in scales:
                for r in ratios:
                    w = s * image_size * np.sqrt(r)
                    h = s * image_size / np.sqrt(r)
                    out.append([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2])
    return np.asarray(out, dtype=np.float64)


def match_anchors(anchors, gt_boxes, gt_labels, pos_iou: float = 0.5):
    """Assign anchors to ground truths, SSD style.

    Every ground truth claims its highest-IoU anchor, then any anchor whose
    best IoU clears `pos_iou` becomes positive as well. Returns per-anchor
    class labels (0 = background) and the matched box targets for the
    positives (zeros elsewhere).
    """
    anchors = np.asarray(anchors, dtype=np.float64)
    n = len(anchors)
    labels = np.zeros(n, dtype=np.int64)
    loc_targets = np.zeros((n, 4), dtype=np.float64)
    if len(gt_boxes) == 0:
        return labels, loc_targets
    gt_boxes = check_boxes(gt_boxes)
    gt_labels = np.asarray(gt_labels, dtype=np.int64)
    ious = iou_matrix(anchors, gt_boxes)
    best_gt = ious.argmax(axis=1)
    best_iou = ious[np.arange(n), best_gt]
    positive = best_iou >= pos_iou
    # force-match each ground truth's best anchor
    forced = ious.argmax(axis=0)
    positive[forced] = True
    best_gt[forced] = np.arange(len(gt_boxes))
    idx = np.where(positive)[0]
    labels[idx] = gt_labels[best_gt[idx]] + 1
    loc_targets[idx] = encode_boxes(anchors[idx], gt_boxes[best_gt[idx]])
    return labels, loc_targets
