"""Synthetic moving-shape video clips with box annotations.

Sequences show textured shapes translating over a smooth background:
classes differ by texture (speckle noise, flat fill, stripes, ring) so
entropy maps separate object from background. A configurable fraction of
frames is degraded - the shape is motion-smeared, faded toward the
background and the frame is noised - which single-frame detectors cannot
recover but temporal models can.

Everything is deterministic given the generator seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from ..imagefile import read_pnm, write_ppm

CLASS_NAMES = ("speckle-box", "smooth-disk", "striped-bar", "hollow-ring")


@dataclass
class ToySequence:
    frames: np.ndarray            # (T, H, W, 3) uint8
    boxes: list                   # per frame: (K, 4) float64
    labels: list                  # per frame: (K,) int64
    degraded: np.ndarray          # (T,) bool
    seed: int = 0

    @property
    def seq_len(self) -> int:
        return len(self.frames)


def _background(rng, size):
    base = rng.uniform(90, 150)
    tilt = rng.uniform(-20, 20)
    tint = rng.uniform(-8, 8, size=3)
    rows = base + tilt * (np.arange(size) / size - 0.5)
    img = rows[:, None, None] + tint[None, None, :]
    return np.clip(img, 0, 255) * np.ones((1, size, 1))


def _object_patch(rng, cls, size):
    """(h, w, 3) float patch plus an opacity mask for one object."""
    if cls == 0:  # speckle-box
        side = int(size)
        patch = rng.integers(0, 256, size=(side, side, 3)).astype(np.float64)
        mask = np.ones((side, side))
    elif cls == 1:  # smooth-disk, forced well away from the background grays
        side = int(size)
        r = side / 2.0
        yy, xx = np.mgrid[0:side, 0:side] + 0.5
        mask = ((yy - r) ** 2 + (xx - r) ** 2 <= r * r).astype(np.float64)
        if rng.uniform() < 0.5:
            color = rng.uniform(5, 55, size=3)
        else:
            color = rng.uniform(200, 250, size=3)
        patch = color[None, None, :] * np.ones((side, side, 1))
    elif cls == 2:  # striped-bar, twice as wide as tall
        h = int(size)
        w = 2 * h
        period = int(rng.integers(3, 5))
        c1 = rng.uniform(0, 100, size=3)
        c2 = rng.uniform(155, 255, size=3)
        rows = (np.arange(h) // period) % 2
        patch = np.where(rows[:, None, None] == 0, c1[None, None, :], c2[None, None, :])
        patch = patch * np.ones((1, w, 1))
        mask = np.ones((h, w))
    elif cls == 3:  # hollow-ring
        side = int(size)
        r = side / 2.0
        yy, xx = np.mgrid[0:side, 0:side] + 0.5
        d2 = (yy - r) ** 2 + (xx - r) ** 2
        mask = ((d2 <= r * r) & (d2 >= (0.55 * r) ** 2)).astype(np.float64)
        color = rng.uniform(0, 255, size=3)
        patch = color[None, None, :] * np.ones((side, side, 1))
    else:
        raise ValueError(f"unknown class id {cls}")
    return patch, mask


def _paste(frame, patch, mask, y0, x0, alpha=1.0):
    h, w = mask.shape
    yi, xi = int(round(y0)), int(round(x0))
    region = frame[yi:yi + h, xi:xi + w]
    m = (alpha * mask)[:, :, None]
    frame[yi:yi + h, xi:xi + w] = region * (1 - m) + patch * m


def _generate_sequence(rng, index, image_size, num_classes, seq_len,
                       degrade_prob) -> ToySequence:
    bg = _background(rng, image_size)
    n_obj = int(rng.integers(1, 3))
    objs = []
    for _ in range(n_obj):
        cls = int(rng.integers(0, num_classes))
        size = rng.uniform(0.28, 0.48) * image_size
        if cls == 2:
            size = size / 1.6  # bar height; width doubles it
        patch, mask = _object_patch(rng, cls, max(8, round(size)))
        h, w = mask.shape
        y = rng.uniform(2, image_size - h - 2)
        x = rng.uniform(2, image_size - w - 2)
        v = rng.uniform(1.0, 3.0, size=2) * rng.choice([-1.0, 1.0], size=2)
        objs.append({"cls": cls, "patch": patch, "mask": mask,
                     "y": y, "x": x, "vy": v[0], "vx": v[1]})
    degraded = rng.uniform(size=seq_len) < degrade_prob

    frames = np.empty((seq_len, image_size, image_size, 3), dtype=np.uint8)
    boxes_per_frame, labels_per_frame = [], []
    for t in range(seq_len):
        frame = bg.copy()
        boxes, labels = [], []
        for o in objs:
            h, w = o["mask"].shape
            if t > 0:
                o["y"] += o["vy"]
                o["x"] += o["vx"]
                if o["y"] < 1 or o["y"] + h > image_size - 1:
                    o["vy"] = -o["vy"]
                    o["y"] = float(np.clip(o["y"], 1, image_size - h - 1))
                if o["x"] < 1 or o["x"] + w > image_size - 1:
                    o["vx"] = -o["vx"]
                    o["x"] = float(np.clip(o["x"], 1, image_size - w - 1))
            if degraded[t]:
                # smear along the motion vector, faded to marginal contrast
                fade = rng.uniform(0.06, 0.16)
                for j in range(5):
                    yj = float(np.clip(o["y"] - o["vy"] * j / 4.0, 0, image_size - h))
                    xj = float(np.clip(o["x"] - o["vx"] * j / 4.0, 0, image_size - w))
                    _paste(frame, o["patch"], o["mask"], yj, xj, alpha=fade / 4.0)
            else:
                _paste(frame, o["patch"], o["mask"], o["y"], o["x"])
            boxes.append([o["x"], o["y"], o["x"] + w, o["y"] + h])
            labels.append(o["cls"])
        if degraded[t]:
            frame = frame + rng.normal(0.0, 12.0, size=frame.shape)
        frames[t] = np.clip(frame, 0, 255).astype(np.uint8)
        boxes_per_frame.append(np.asarray(boxes, dtype=np.float64))
        labels_per_frame.append(np.asarray(labels, dtype=np.int64))
    return ToySequence(frames=frames, boxes=boxes_per_frame,
                       labels=labels_per_frame, degraded=degraded, seed=index)


def generate_dataset(seed: int, n_sequences: int, image_size: int = 64,
                     num_classes: int = 3, seq_len: int = 10,
                     degrade_prob: float = 0.35):
    """Deterministic list of ToySequences; same seed, same bytes."""
    if image_size < 32:
        raise ValueError(f"image_size must be >= 32, got {image_size}")
    if not 2 <= num_classes <= 4:
        raise ValueError(f"num_classes must be in [2, 4], got {num_classes}")
    if seq_len < 1:
        raise ValueError(f"seq_len must be >= 1, got {seq_len}")
    if not 0.0 <= degrade_prob <= 1.0:
        raise ValueError(f"degrade_prob must be in [0, 1], got {degrade_prob}")
    seqs = []
    for i in range(n_sequences):
        rng = np.random.default_rng([seed, i])
        seqs.append(_generate_sequence(rng, i, image_size, num_classes,
                                       seq_len, degrade_prob))
    return seqs


def save_dataset(directory, sequences):
    """Persist sequences as PPM frames plus JSON annotations."""
    os.makedirs(directory, exist_ok=True)
    for i, seq in enumerate(sequences):
        sub = os.path.join(directory, f"seq_{i:04d}")
        os.makedirs(sub, exist_ok=True)
        for t in range(seq.seq_len):
            write_ppm(os.path.join(sub, f"frame_{t:02d}.ppm"), seq.frames[t])
        ann = {
            "seed": seq.seed,
            "frames": [{
                "boxes": seq.boxes[t].tolist(),
                "labels": seq.labels[t].tolist(),
                "degraded": bool(seq.degraded[t]),
            } for t in range(seq.seq_len)],
        }
        with open(os.path.join(sub, "annotations.json"), "w") as fh:
            json.dump(ann, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_dataset(directory):
    seqs = []
    for name in sorted(os.listdir(directory)):
        sub = os.path.join(directory, name)
        ann_path = os.path.join(sub, "annotations.json")
        if not os.path.isfile(ann_path):
            continue
        with open(ann_path) as fh:
            ann = json.load(fh)
        frames = [read_pnm(os.path.join(sub, f"frame_{t:02d}.ppm"))
                  for t in range(len(ann["frames"]))]
        seqs.append(ToySequence(
            frames=np.stack(frames),
            boxes=[np.asarray(f["boxes"], dtype=np.float64).reshape(-1, 4)
                   for f in ann["frames"]],
            labels=[np.asarray(f["labels"], dtype=np.int64) for f in ann["frames"]],
            degraded=np.asarray([f["degraded"] for f in ann["frames"]], dtype=bool),
            seed=ann.get("seed", 0),
        ))
    return seqs
