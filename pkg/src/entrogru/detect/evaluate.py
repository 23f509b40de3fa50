"""Detection decoding and mean average precision.

AP uses continuous (all-point) interpolation of the precision-recall
staircase at a single IoU threshold; mAP averages over the classes present
in the ground truth, noting any class that had to be excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import decode_boxes, iou_matrix, nms


@dataclass
class Detection:
    box: np.ndarray   # (4,) x_min, y_min, x_max, y_max
    class_id: int
    score: float

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=np.float64).reshape(4)
        if not (self.box[0] < self.box[2] and self.box[1] < self.box[3]):
            raise ValueError(f"degenerate detection box {self.box.tolist()}")
        if not np.isfinite(self.score):
            raise ValueError("detection score must be finite")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def decode_frame(loc: np.ndarray, cls_logits: np.ndarray, anchors: np.ndarray,
                 image_size: int, conf_thresh: float = 0.05,
                 nms_iou: float = 0.45, max_per_class: int = 20):
    """Turn raw per-anchor outputs into a per-frame Detection list."""
    probs = _softmax(np.asarray(cls_logits, dtype=np.float64))
    boxes = decode_boxes(anchors, np.asarray(loc, dtype=np.float64))
    boxes[:, 0::2] = np.clip(boxes[:, 0::2], 0.0, float(image_size))
    boxes[:, 1::2] = np.clip(boxes[:, 1::2], 0.0, float(image_size))
    detections = []
    for c in range(1, probs.shape[1]):
        scores = probs[:, c]
        keep = np.where(scores >= conf_thresh)[0]
        if len(keep) == 0:
            continue
        cand_boxes = boxes[keep]
        valid = (cand_boxes[:, 2] - cand_boxes[:, 0] > 1e-3) & \
                (cand_boxes[:, 3] - cand_boxes[:, 1] > 1e-3)
        keep = keep[valid]
        if len(keep) == 0:
            continue
        order = nms(boxes[keep], scores[keep], nms_iou)[:max_per_class]
        for i in order:
            detections.append(Detection(box=boxes[keep[i]], class_id=c - 1,
                                         score=float(scores[keep[i]])))
    return detections


def average_precision(scores, matches, n_gt: int) -> float:
    """All-point interpolated AP from per-detection scores and TP flags."""
    if n_gt == 0:
        raise ValueError("average_precision needs at least one ground truth")
    if len(scores) == 0:
        return 0.0
    scores = np.asarray(scores, dtype=np.float64)
    matches = np.asarray(matches, dtype=bool)
    order = np.lexsort((np.arange(len(scores)), -scores))
    tp = np.cumsum(matches[order])
    fp = np.cumsum(~matches[order])
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recall, envelope):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)


def _match_detections(dets, gt_by_frame, iou_thresh):
    """Greedy per-class matching in global score order; returns TP flags."""
    order = np.lexsort((np.arange(len(dets)), -np.asarray([d[0] for d in dets])))
    used = {k: np.zeros(len(v), dtype=bool) for k, v in gt_by_frame.items()}
    flags = np.zeros(len(dets), dtype=bool)
    for i in order:
        score, frame_key, box = dets[i]
        gts = gt_by_frame.get(frame_key)
        if gts is None or len(gts) == 0:
            continue
        ious = iou_matrix(box[None], gts)[0]
        ious[used[frame_key]] = -1.0
        j = int(ious.argmax())
        if ious[j] >= iou_thresh:
            used[frame_key][j] = True
            flags[i] = True
    return flags


def evaluate_detections(all_dets, all_gt, num_classes: int, iou_thresh: float = 0.5):
    """AP per class and mAP from pooled detections.

    all_dets: list of (frame_key, Detection); all_gt: frame_key ->
    (boxes (K,4), labels (K,)). Classes with no ground truth are excluded
    from the mean and reported.
    """
    per_class = {}
    excluded = []
    for c in range(num_classes):
        gt_by_frame = {}
        n_gt = 0
        for key, (boxes, labels) in all_gt.items():
            sel = np.asarray(labels) == c
            gt_by_frame[key] = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)[sel]
            n_gt += int(sel.sum())
        if n_gt == 0:
            excluded.append(c)
            continue
        dets = [(d.score, key, d.box) for key, d in all_dets if d.class_id == c]
        flags = _match_detections(dets, gt_by_frame, iou_thresh)
        per_class[c] = average_precision([d[0] for d in dets], flags, n_gt)
    mean_ap = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return {"per_class_ap": per_class, "map": mean_ap, "excluded_classes": excluded}


def evaluate_map(model, dataset, iou_thresh: float = 0.5,
                 conf_thresh: float = 0.05, nms_iou: float = 0.45):
    """Run the model over a dataset and score it; returns the metric dict."""
    all_dets = []
    all_gt = {}
    for si, seq in enumerate(dataset):
        preds = model.infer_sequence(seq)
        for t, (loc, cls_logits) in enumerate(preds):
            key = (si, t)
            all_gt[key] = (seq.boxes[t], seq.labels[t])
            for det in decode_frame(loc, cls_logits, model.anchors,
                                    model.cfg.image_size, conf_thresh, nms_iou):
                all_dets.append((key, det))
    return evaluate_detections(all_dets, all_gt, model.cfg.num_classes, iou_thresh)


def degraded_frame_recall(model, dataset, iou_thresh: float = 0.5,
                          conf_thresh: float = 0.25):
    """Recall restricted to degraded frames (class-agnostic box matching)."""
    matched = 0
    total = 0
    for seq in dataset:
        if not seq.degraded.any():
            continue
        preds = model.infer_sequence(seq)
        for t in np.where(seq.degraded)[0]:
            gts = np.asarray(seq.boxes[t], dtype=np.float64).reshape(-1, 4)
            total += len(gts)
            dets = decode_frame(*preds[t], model.anchors, model.cfg.image_size,
                                conf_thresh=conf_thresh)
            if not dets or len(gts) == 0:
                continue
            boxes = np.stack([d.box for d in dets])
            ious = iou_matrix(gts, boxes)
            matched += int((ious.max(axis=1) >= iou_thresh).sum())
    return matched / total if total else 0.0
