"""Tiny multi-stage detector with pluggable attention and recurrence.

The backbone is a stack of stride-2 convolutions whose outputs are the
named attachment points (stage-1..stage-4 plus two extra detection maps).
Anchor-based box/class heads read four of those maps. An entropy-map
attention gate and a recurrent cell can each be inserted at any attachment
point; the recurrent output replaces the feature map in-line so downstream
layers see the temporally filtered features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import cells
from ..entropy import ie_map, pooled_attention, to_grayscale
from ..tensor import (ConvSpec, Tensor, concat, conv2d, make_conv_spec, moveaxis,
                      mul, relu, reshape)
from ..tensor_io import load_weights, save_weights
from .boxes import grid_anchors

ATTACH_POINTS = ("stage-1", "stage-2", "stage-3", "stage-4",
                 "extra-map-1", "extra-map-2")

GRU_KINDS = ("squeezed_gru", "conv_gru")


def _default_scales():
    return {
        "stage-3": (0.22, 0.32),
        "stage-4": (0.40, 0.55),
        "extra-map-1": (0.65, 0.80),
        "extra-map-2": (0.90, 1.00),
    }


@dataclass
class BackboneConfig:
    image_size: int = 64
    num_classes: int = 3
    stage_channels: tuple = (8, 16, 32, 64)
    extra_channels: tuple = (64, 64)
    head_maps: tuple = ("stage-3", "stage-4", "extra-map-1", "extra-map-2")
    anchor_scales: dict = field(default_factory=_default_scales)
    anchor_ratios: tuple = (1.0, 2.0)

    def __post_init__(self):
        if len(self.stage_channels) != 4 or len(self.extra_channels) != 2:
            raise ValueError("backbone expects 4 stage widths and 2 extra-map widths")
        for m in self.head_maps:
            if m not in ATTACH_POINTS:
                raise ValueError(f"unknown head map {m!r}; valid: {ATTACH_POINTS}")
            if m not in self.anchor_scales:
                raise ValueError(f"no anchor scales configured for head map {m!r}")

    @property
    def anchors_per_cell(self) -> int:
        return len(self.anchor_ratios) * len(next(iter(self.anchor_scales.values())))


def normalize_placement(name):
    """Map 'none'/'None'/None to None, otherwise validate the point name."""
    if name is None or str(name).lower() == "none":
        return None
    if name not in ATTACH_POINTS:
        raise ValueError(
            f"unknown attachment point {name!r}; valid names: "
            f"{', '.join(ATTACH_POINTS)} or 'none'")
    return name


def _conv_out(n: int) -> int:
    # k=3, stride 2, pad 1
    return (n - 1) // 2 + 1


class ToyDetector:
    """Frame-wise detector with optional entropy attention and recurrence."""

    def __init__(self, cfg: BackboneConfig, gru_placement=None, ie_placement=None,
                 gru_kind: str = "squeezed_gru", seed: int = 0):
        self.cfg = cfg
        self.gru_placement = normalize_placement(gru_placement)
        self.ie_placement = normalize_placement(ie_placement)
        if gru_kind not in GRU_KINDS:
            raise ValueError(f"gru_kind must be one of {GRU_KINDS}, got {gru_kind!r}")
        self.gru_kind = gru_kind
        self.seed = seed
        rng = np.random.default_rng(seed)

        widths = list(cfg.stage_channels) + list(cfg.extra_channels)
        self.point_channels = dict(zip(ATTACH_POINTS, widths))
        self.point_sizes = {}
        size = cfg.image_size
        for name in ATTACH_POINTS:
            size = _conv_out(size)
            self.point_sizes[name] = size

        self.trunk = []
        in_c = 3
        for name in ATTACH_POINTS:
            out_c = self.point_channels[name]
            self.trunk.append((name, make_conv_spec(rng, in_c, out_c, 3, stride=2,
                                                    padding=1)))
            in_c = out_c

        n_cls = cfg.num_classes + 1
        a = cfg.anchors_per_cell
        self.loc_heads, self.cls_heads = {}, {}
        for m in cfg.head_maps:
            c = self.point_channels[m]
            self.loc_heads[m] = make_conv_spec(rng, c, a * 4, 3, padding=1)
            self.cls_heads[m] = make_conv_spec(rng, c, a * n_cls, 3, padding=1)

        self.gru_weights = None
        if self.gru_placement is not None:
            c = self.point_channels[self.gru_placement]
            if gru_kind == "squeezed_gru":
                self.gru_weights = cells.init_squeezed_gru(rng, c, c, kernel_size=3)
            else:
                self.gru_weights = cells.init_conv_gru(rng, c, c, kernel_size=3)

        self.anchors = np.concatenate([
            grid_anchors(cfg.image_size, self.point_sizes[m],
                         cfg.anchor_scales[m], cfg.anchor_ratios)
            for m in cfg.head_maps])

    # -- parameters ----------------------------------------------------------

    def named_params(self):
        out = {}
        for name, spec in self.trunk:
            out[f"backbone/{name}/kernel"] = spec.kernel
            out[f"backbone/{name}/bias"] = spec.bias
        for m in self.cfg.head_maps:
            for kind, spec in (("loc", self.loc_heads[m]), ("cls", self.cls_heads[m])):
                out[f"head/{m}/{kind}/kernel"] = spec.kernel
                out[f"head/{m}/{kind}/bias"] = spec.bias
        if self.gru_weights is not None:
            if self.gru_kind == "squeezed_gru":
                for g, gate in self.gru_weights.gates().items():
                    out[f"gru/{g}/reduce"] = gate.reduce
                    out[f"gru/{g}/depthwise"] = gate.depthwise
                    out[f"gru/{g}/pointwise"] = gate.pointwise
                    out[f"gru/{g}/bias"] = gate.bias
            else:
                w = self.gru_weights
                for g, (k, b) in {"z": (w.kz, w.bz), "r": (w.kr, w.br),
                                  "h": (w.kh, w.bh)}.items():
                    out[f"gru/{g}/kernel"] = k
                    out[f"gru/{g}/bias"] = b
        return out

    def params(self):
        return list(self.named_params().values())

    def num_params(self) -> int:
        return int(sum(p.size for p in self.params()))

    # -- forward -------------------------------------------------------------

    def initial_hidden(self, batch: int):
        if self.gru_placement is None:
            return None
        c = self.point_channels[self.gru_placement]
        s = self.point_sizes[self.gru_placement]
        return Tensor(np.zeros((batch, c, s, s), dtype=np.float32))

    def _gru_step(self, x, hidden):
        if self.gru_kind == "squeezed_gru":
            return cells.squeezed_gru_step(x, hidden, self.gru_weights)
        return cells.conv_gru_step(x, hidden, self.gru_weights)

    def _apply_attention(self, feat: Tensor, fields: np.ndarray) -> Tensor:
        b, _, h, w = feat.shape
        att = np.stack([pooled_attention(fields[i], h, w) for i in range(b)])
        return mul(feat, Tensor(att[:, None].astype(feat.dtype)))

    def _flatten_head(self, t: Tensor, last: int) -> Tensor:
        b, ch, h, w = t.shape
        moved = moveaxis(t, 1, 3)
        return reshape(moved, (b, h * w * (ch // last), last))

    def forward_frame(self, x: Tensor, hidden, ie_field=None):
        """One frame through the pipeline.

        x: (b, 3, s, s) normalised frame; ie_field: (b, H, W) entropy maps
        when the attention gate is placed. Returns (loc, cls, new_hidden)
        with loc (b, n_anchors, 4) and cls (b, n_anchors, classes+1).
        """
        if self.ie_placement is not None and ie_field is None:
            raise ValueError("model has an entropy-attention placement but no "
                             "entropy field was provided")
        cur = x
        new_hidden = hidden
        feats = {}
        for name, spec in self.trunk:
            cur = relu(conv2d(cur, spec))
            if self.ie_placement == name:
                cur = self._apply_attention(cur, ie_field)
            if self.gru_placement == name:
                new_hidden = self._gru_step(cur, hidden)
                cur = new_hidden
            feats[name] = cur
        locs, clss = [], []
        n_cls = self.cfg.num_classes + 1
        for m in self.cfg.head_maps:
            locs.append(self._flatten_head(conv2d(feats[m], self.loc_heads[m]), 4))
            clss.append(self._flatten_head(conv2d(feats[m], self.cls_heads[m]), n_cls))
        return concat(locs, axis=1), concat(clss, axis=1), new_hidden

    def forward_clip(self, frames, ie_fields=None):
        """Run a clip of (b, 3, s, s) frame tensors; returns [(loc, cls), ...]."""
        hidden = self.initial_hidden(frames[0].shape[0])
        out = []
        for t, x in enumerate(frames):
            field_t = None if ie_fields is None else ie_fields[t]
            loc, cls_, hidden = self.forward_frame(x, hidden, field_t)
            out.append((loc, cls_))
        return out

    def infer_sequence(self, seq):
        """Raw per-frame (loc, cls) numpy outputs for one ToySequence."""
        frames = [frames_to_tensor(seq.frames[t:t + 1]) for t in range(seq.seq_len)]
        fields = None
        if self.ie_placement is not None:
            fields = [entropy_fields(seq.frames[t:t + 1]) for t in range(seq.seq_len)]
        preds = self.forward_clip(frames, fields)
        return [(loc.data[0], cls_.data[0]) for loc, cls_ in preds]


def frames_to_tensor(frames_u8: np.ndarray) -> Tensor:
    """(b, H, W, 3) uint8 -> (b, 3, H, W) float32 in [0, 1]."""
    arr = frames_u8.astype(np.float32) / 255.0
    return Tensor(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


def entropy_fields(frames_u8: np.ndarray) -> np.ndarray:
    """Per-frame entropy maps for a (b, H, W, 3) uint8 batch."""
    return np.stack([ie_map(to_grayscale(f)) for f in frames_u8])


def build_pipeline(backbone_cfg: BackboneConfig, gru_placement, ie_placement,
                   seed: int = 0, gru_kind: str = "squeezed_gru") -> ToyDetector:
    """Assemble the detector with the requested module placements."""
    return ToyDetector(backbone_cfg, gru_placement=gru_placement,
                       ie_placement=ie_placement, gru_kind=gru_kind, seed=seed)


# -- serialisation -----------------------------------------------------------


def save_model(directory, model: ToyDetector):
    meta = {
        "image_size": model.cfg.image_size,
        "num_classes": model.cfg.num_classes,
        "stage_channels": list(model.cfg.stage_channels),
        "extra_channels": list(model.cfg.extra_channels),
        "head_maps": list(model.cfg.head_maps),
        "anchor_scales": {k: list(v) for k, v in model.cfg.anchor_scales.items()},
        "anchor_ratios": list(model.cfg.anchor_ratios),
        "gru_placement": model.gru_placement,
        "ie_placement": model.ie_placement,
        "gru_kind": model.gru_kind,
        "seed": model.seed,
    }
    arrays = {name: p.data for name, p in model.named_params().items()}
    save_weights(directory, arrays, meta=meta)


def load_model(directory) -> ToyDetector:
    arrays, meta = load_weights(directory)
    cfg = BackboneConfig(
        image_size=meta["image_size"],
        num_classes=meta["num_classes"],
        stage_channels=tuple(meta["stage_channels"]),
        extra_channels=tuple(meta["extra_channels"]),
        head_maps=tuple(meta["head_maps"]),
        anchor_scales={k: tuple(v) for k, v in meta["anchor_scales"].items()},
        anchor_ratios=tuple(meta["anchor_ratios"]),
    )
    model = ToyDetector(cfg, gru_placement=meta["gru_placement"],
                        ie_placement=meta["ie_placement"],
                        gru_kind=meta["gru_kind"], seed=meta.get("seed", 0))
    params = model.named_params()
    missing = set(params) ^ set(arrays)
    if missing:
        raise ValueError(f"weight bundle does not match model: {sorted(missing)}")
    for name, p in params.items():
        if tuple(arrays[name].shape) != p.shape:
            raise ValueError(f"{name}: saved shape {arrays[name].shape} != {p.shape}")
        p.data = arrays[name].astype(p.dtype)
    return model
