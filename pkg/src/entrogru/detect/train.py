"""RMSprop trainer with backprop through time over whole clips.

Each optimisation step unrolls the model over a full clip (all frames of a
batch of sequences), averages the per-frame losses and backpropagates
through the unrolled graph with no truncation. Anchor matching and entropy
fields depend only on the data, so both are precomputed once per dataset.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..tensor import Tensor
from .boxes import match_anchors
from .data import generate_dataset
from .evaluate import evaluate_map
from .loss import ssd_loss_from_matched
from .model import (BackboneConfig, ToyDetector, build_pipeline, entropy_fields,
                    frames_to_tensor)

TEST_SEED_OFFSET = 1_000_003
WEIGHT_SEED_OFFSET = 77


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    momentum: float = 0.9
    rms_decay: float = 0.9
    epsilon: float = 1e-8
    sequence_len: int = 10
    epochs: int = 60
    batch_size: int = 10
    seed: int = 42
    gru_placement: str | None = "stage-3"
    ie_placement: str | None = "stage-3"
    gru_kind: str = "squeezed_gru"
    image_size: int = 48
    num_classes: int = 3
    n_train: int = 50
    n_test: int = 20
    degrade_prob: float = 0.35
    pos_iou: float = 0.5
    neg_ratio: int = 3

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.sequence_len < 1:
            raise ValueError(f"sequence length must be >= 1, got {self.sequence_len}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)


class RMSprop:
    """RMSprop with momentum: buf = m*buf + g/(sqrt(sq)+eps); p -= lr*buf."""

    def __init__(self, params, lr: float, momentum: float = 0.9,
                 decay: float = 0.9, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.decay = decay
        self.eps = eps
        self.square_avg = [np.zeros_like(p.data) for p in self.params]
        self.buf = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.square_avg[i] = self.decay * self.square_avg[i] + (1 - self.decay) * g * g
            self.buf[i] = self.momentum * self.buf[i] + g / (np.sqrt(self.square_avg[i]) + self.eps)
            p.data = p.data - self.lr * self.buf[i]


def precompute_targets(dataset, anchors, pos_iou: float = 0.5):
    """Per-sequence, per-frame (labels, encoded box targets)."""
    out = []
    for seq in dataset:
        frames = []
        for t in range(seq.seq_len):
            frames.append(match_anchors(anchors, seq.boxes[t], seq.labels[t], pos_iou))
        out.append(frames)
    return out


def precompute_entropy(dataset):
    """Per-sequence (T, H, W) entropy-map stacks."""
    return [entropy_fields(seq.frames) for seq in dataset]


def clip_loss(model: ToyDetector, frames_u8, targets, ie_fields, cfg: TrainConfig):
    """Mean per-frame loss of one batch of clips; returns a scalar tensor.

    frames_u8: (B, T, H, W, 3); targets: per sequence per frame matches;
    ie_fields: per sequence (T, H, W) arrays or None.
    """
    bsz, seq_len = frames_u8.shape[:2]
    frame_tensors = [frames_to_tensor(frames_u8[:, t]) for t in range(seq_len)]
    fields = None
    if ie_fields is not None:
        fields = [np.stack([ie_fields[i][t] for i in range(bsz)])
                  for t in range(seq_len)]
    preds = model.forward_clip(frame_tensors, fields)
    n_anchors = len(model.anchors)
    total = None
    for t, (loc, cls_) in enumerate(preds):
        labels = np.concatenate([targets[i][t][0] for i in range(bsz)])
        loc_t = np.concatenate([targets[i][t][1] for i in range(bsz)])
        loc_flat = loc.reshape(bsz * n_anchors, 4)
        cls_flat = cls_.reshape(bsz * n_anchors, model.cfg.num_classes + 1)
        _, _, frame_total = ssd_loss_from_matched(loc_flat, loc_t, cls_flat, labels,
                                                  neg_ratio=cfg.neg_ratio)
        total = frame_total if total is None else total + frame_total
    return total * (1.0 / seq_len)


def train(model: ToyDetector, dataset, cfg: TrainConfig, targets=None,
          ie_fields=None):
    """Optimise the model in place; returns the per-step loss curve."""
    if not dataset:
        raise ValueError("training needs a non-empty dataset")
    if targets is None:
        targets = precompute_targets(dataset, model.anchors, cfg.pos_iou)
    if ie_fields is None and model.ie_placement is not None:
        ie_fields = precompute_entropy(dataset)
    opt = RMSprop(model.params(), lr=cfg.learning_rate, momentum=cfg.momentum,
                  decay=cfg.rms_decay, eps=cfg.epsilon)
    rng = np.random.default_rng(cfg.seed)
    losses = []
    n = len(dataset)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            frames = np.stack([dataset[i].frames for i in batch])
            batch_targets = [targets[i] for i in batch]
            batch_fields = None if ie_fields is None else [ie_fields[i] for i in batch]
            opt.zero_grad()
            loss = clip_loss(model, frames, batch_targets, batch_fields, cfg)
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"training diverged: loss became {value} at epoch {epoch}, "
                    f"batch starting at {start}")
            loss.backward()
            opt.step()
            losses.append(value)
    return losses


def make_benchmark_data(cfg: TrainConfig):
    """Deterministic train/test split derived from the config seed."""
    train_seqs = generate_dataset(cfg.seed, cfg.n_train, cfg.image_size,
                                  cfg.num_classes, cfg.sequence_len,
                                  cfg.degrade_prob)
    test_seqs = generate_dataset(cfg.seed + TEST_SEED_OFFSET, cfg.n_test,
                                 cfg.image_size, cfg.num_classes,
                                 cfg.sequence_len, cfg.degrade_prob)
    return train_seqs, test_seqs


def build_from_config(cfg: TrainConfig) -> ToyDetector:
    backbone = BackboneConfig(image_size=cfg.image_size, num_classes=cfg.num_classes)
    return build_pipeline(backbone, cfg.gru_placement, cfg.ie_placement,
                          seed=cfg.seed + WEIGHT_SEED_OFFSET, gru_kind=cfg.gru_kind)


def train_and_eval(cfg: TrainConfig, train_seqs=None, test_seqs=None):
    """End-to-end run: build, train, evaluate; returns a result dict."""
    if train_seqs is None or test_seqs is None:
        train_seqs, test_seqs = make_benchmark_data(cfg)
    model = build_from_config(cfg)
    losses = train(model, train_seqs, cfg)
    metrics = evaluate_map(model, test_seqs)
    return {"model": model, "losses": losses, "metrics": metrics,
            "train": train_seqs, "test": test_seqs}
