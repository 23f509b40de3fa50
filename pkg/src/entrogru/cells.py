"""Recurrent cells: channel-squeezed convolutional GRU plus baselines.

The squeezed cell replaces each gate's transform with a 1x1 channel
reduction (in+out -> out) followed by a depthwise-separable k x k
convolution, one reduction per gate. Baselines: dense GRU, dense LSTM and a
plain convolutional GRU whose gates are single k x k convolutions over the
channel concatenation.

All gate convolutions use "same" zero padding so the hidden state keeps the
input's spatial dims across steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (ConvSpec, Tensor, concat_channels, concat_features,
                     conv2d, hadamard, matmul, sigmoid, tanh, uniform_init)


def _check_pair(name_x, x, name_h, h, x_channels, h_channels):
    if x.shape[1] != x_channels:
        raise ValueError(
            f"{name_x} has {x.shape[1]} channels, cell expects {x_channels}")
    if h.shape[1] != h_channels:
        raise ValueError(
            f"{name_h} has {h.shape[1]} channels, cell expects {h_channels}")
    if x.shape[0] != h.shape[0] or x.shape[2:] != h.shape[2:]:
        raise ValueError(
            f"{name_x} {x.shape} and {name_h} {h.shape} must share batch and spatial dims")


# -- squeezed convolutional GRU ------------------------------------------------


@dataclass
class SqueezedGateWeights:
    """One gate: 1x1 reduction, depthwise k x k, pointwise 1x1 (+ bias)."""

    reduce: Tensor      # (out, in+out, 1, 1)
    depthwise: Tensor   # (out, 1, k, k)
    pointwise: Tensor   # (out, out, 1, 1)
    bias: Tensor        # (out,)

    def params(self):
        return [self.reduce, self.depthwise, self.pointwise, self.bias]


@dataclass
class SqueezedGruWeights:
    in_channels: int
    out_channels: int
    kernel_size: int
    z: SqueezedGateWeights
    r: SqueezedGateWeights
    h: SqueezedGateWeights

    def gates(self):
        return {"z": self.z, "r": self.r, "h": self.h}

    def params(self):
        return [t for g in (self.z, self.r, self.h) for t in g.params()]

    def flatten(self):
        return self.params()

    @staticmethod
    def unflatten(tensors, in_channels, out_channels, kernel_size):
        gates = []
        for i in range(3):
            red, dw, pw, b = tensors[4 * i:4 * i + 4]
            gates.append(SqueezedGateWeights(red, dw, pw, b))
        return SqueezedGruWeights(in_channels, out_channels, kernel_size, *gates)


def init_squeezed_gru(rng, in_channels, out_channels, kernel_size=3,
                      dtype=np.float32) -> SqueezedGruWeights:
    if kernel_size % 2 == 0:
        raise ValueError(f"gate kernels need odd size for same-padding, got {kernel_size}")
    cat = in_channels + out_channels
    k = kernel_size

    def gate():
        return SqueezedGateWeights(
            reduce=uniform_init(rng, (out_channels, cat, 1, 1), cat, dtype),
            depthwise=uniform_init(rng, (out_channels, 1, k, k), k * k, dtype),
            pointwise=uniform_init(rng, (out_channels, out_channels, 1, 1),
                                   out_channels, dtype),
            bias=Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True),
        )

    return SqueezedGruWeights(in_channels, out_channels, kernel_size,
                              gate(), gate(), gate())


def _squeezed_gate(xh: Tensor, g: SqueezedGateWeights, k: int) -> Tensor:
    reduced = conv2d(xh, ConvSpec(kernel=g.reduce, mode="pointwise"))
    spatial = conv2d(reduced, ConvSpec(kernel=g.depthwise, padding=k // 2,
                                       mode="depthwise"))
    return conv2d(spatial, ConvSpec(kernel=g.pointwise, bias=g.bias,
                                    mode="pointwise"))


def squeezed_gru_step(x: Tensor, h_prev: Tensor, w: SqueezedGruWeights) -> Tensor:
    """One squeezed-GRU step; returns the new hidden state."""
    _check_pair("input", x, "hidden state", h_prev, w.in_channels, w.out_channels)
    xh = concat_channels(x, h_prev)
    z = sigmoid(_squeezed_gate(xh, w.z, w.kernel_size))
    r = sigmoid(_squeezed_gate(xh, w.r, w.kernel_size))
    xrh = concat_channels(x, hadamard(r, h_prev))
    h_cand = tanh(_squeezed_gate(xrh, w.h, w.kernel_size))
    return hadamard(1.0 - z, h_prev) + hadamard(z, h_cand)


# -- plain convolutional GRU ----------------------------------------------------


@dataclass
class ConvGruWeights:
    in_channels: int
    out_channels: int
    kernel_size: int
    kz: Tensor
    bz: Tensor
    kr: Tensor
    br: Tensor
    kh: Tensor
    bh: Tensor

    def params(self):
        return [self.kz, self.bz, self.kr, self.br, self.kh, self.bh]

    def flatten(self):
        return self.params()

    @staticmethod
    def unflatten(tensors, in_channels, out_channels, kernel_size):
        return ConvGruWeights(in_channels, out_channels, kernel_size, *tensors)


def init_conv_gru(rng, in_channels, out_channels, kernel_size=3,
                  dtype=np.float32) -> ConvGruWeights:
    if kernel_size % 2 == 0:
        raise ValueError(f"gate kernels need odd size for same-padding, got {kernel_size}")
    cat = in_channels + out_channels
    k = kernel_size
    fan = cat * k * k

    def kern():
        return uniform_init(rng, (out_channels, cat, k, k), fan, dtype)

    def bias():
        return Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    return ConvGruWeights(in_channels, out_channels, kernel_size,
                          kern(), bias(), kern(), bias(), kern(), bias())


def conv_gru_step(x: Tensor, h_prev: Tensor, w: ConvGruWeights) -> Tensor:
    """Convolutional GRU step: each gate is one k x k conv over [x, h]."""
    _check_pair("input", x, "hidden state", h_prev, w.in_channels, w.out_channels)
    p = w.kernel_size // 2

    def gate(inp, kernel, bias):
        return conv2d(inp, ConvSpec(kernel=kernel, padding=p, bias=bias))

    xh = concat_channels(x, h_prev)
    z = sigmoid(gate(xh, w.kz, w.bz))
    r = sigmoid(gate(xh, w.kr, w.br))
    xrh = concat_channels(x, hadamard(r, h_prev))
    h_cand = tanh(gate(xrh, w.kh, w.bh))
    return hadamard(1.0 - z, h_prev) + hadamard(z, h_cand)


# -- dense baselines -------------------------------------------------------------


@dataclass
class DenseGruWeights:
    in_size: int
    hidden_size: int
    wz: Tensor
    bz: Tensor
    wr: Tensor
    br: Tensor
    wh: Tensor
    bh: Tensor

    def params(self):
        return [self.wz, self.bz, self.wr, self.br, self.wh, self.bh]

    def flatten(self):
        return self.params()

    @staticmethod
    def unflatten(tensors, in_size, hidden_size):
        return DenseGruWeights(in_size, hidden_size, *tensors)


def init_dense_gru(rng, in_size, hidden_size, dtype=np.float32) -> DenseGruWeights:
    cat = in_size + hidden_size

    def w():
        return uniform_init(rng, (cat, hidden_size), cat, dtype)

    def b():
        return Tensor(np.zeros(hidden_size, dtype=dtype), requires_grad=True)

    return DenseGruWeights(in_size, hidden_size, w(), b(), w(), b(), w(), b())


def dense_gru_step(x: Tensor, h_prev: Tensor, w: DenseGruWeights) -> Tensor:
    """Textbook GRU on flat (batch, features) vectors."""
    if x.shape[1] != w.in_size or h_prev.shape[1] != w.hidden_size:
        raise ValueError(
            f"dense GRU expects input {w.in_size} / hidden {w.hidden_size}, "
            f"got {x.shape} and {h_prev.shape}")
    xh = concat_features(x, h_prev)
    z = sigmoid(matmul(xh, w.wz) + w.bz)
    r = sigmoid(matmul(xh, w.wr) + w.br)
    xrh = concat_features(x, hadamard(r, h_prev))
    h_cand = tanh(matmul(xrh, w.wh) + w.bh)
    return (1.0 - z) * h_prev + z * h_cand


@dataclass
class DenseLstmWeights:
    in_size: int
    hidden_size: int
    wi: Tensor
    bi: Tensor
    wf: Tensor
    bf: Tensor
    wg: Tensor
    bg: Tensor
    wo: Tensor
    bo: Tensor

    def params(self):
        return [self.wi, self.bi, self.wf, self.bf,
                self.wg, self.bg, self.wo, self.bo]

    def flatten(self):
        return self.params()

    @staticmethod
    def unflatten(tensors, in_size, hidden_size):
        return DenseLstmWeights(in_size, hidden_size, *tensors)


def init_dense_lstm(rng, in_size, hidden_size, dtype=np.float32) -> DenseLstmWeights:
    cat = in_size + hidden_size

    def w():
        return uniform_init(rng, (cat, hidden_size), cat, dtype)

    def b():
        return Tensor(np.zeros(hidden_size, dtype=dtype), requires_grad=True)

    return DenseLstmWeights(in_size, hidden_size,
                            w(), b(), w(), b(), w(), b(), w(), b())


def dense_lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor,
                    w: DenseLstmWeights):
    """Textbook LSTM step; returns (h_t, c_t)."""
    if x.shape[1] != w.in_size or h_prev.shape[1] != w.hidden_size:
        raise ValueError(
            f"dense LSTM expects input {w.in_size} / hidden {w.hidden_size}, "
            f"got {x.shape} and {h_prev.shape}")
    xh = concat_features(x, h_prev)
    i = sigmoid(matmul(xh, w.wi) + w.bi)
    f = sigmoid(matmul(xh, w.wf) + w.bf)
    g = tanh(matmul(xh, w.wg) + w.bg)
    o = sigmoid(matmul(xh, w.wo) + w.bo)
    c_t = f * c_prev + i * g
    h_t = o * tanh(c_t)
    return h_t, c_t


# -- sequence driver --------------------------------------------------------------


def make_cell(kind: str, weights):
    """Bind weights into a step callable `cell(x, h_prev) -> h_t`."""
    steps = {
        "squeezed_gru": squeezed_gru_step,
        "conv_gru": conv_gru_step,
        "dense_gru": dense_gru_step,
    }
    if kind not in steps:
        raise ValueError(f"unknown cell kind {kind!r}; choose from {sorted(steps)}")
    step = steps[kind]
    return lambda x, h: step(x, h, weights)


def run_sequence(cell, frames, h0: Tensor):
    """Fold `cell` over a frame list; returns [h_1 ... h_T]."""
    if not frames:
        raise ValueError("run_sequence needs at least one frame")
    outputs = []
    h = h0
    for x in frames:
        h = cell(x, h)
        outputs.append(h)
    return outputs


def num_params(weights) -> int:
    """Learnable scalar count actually allocated by a weight bundle."""
    return int(sum(t.size for t in weights.params()))


# -- serialisation ----------------------------------------------------------------

_GATE_FIELDS = {
    "SqueezedGruWeights": [f"{g}/{part}" for g in "zrh"
                           for part in ("reduce", "depthwise", "pointwise", "bias")],
    "ConvGruWeights": ["z/kernel", "z/bias", "r/kernel", "r/bias",
                       "h/kernel", "h/bias"],
    "DenseGruWeights": ["z/weight", "z/bias", "r/weight", "r/bias",
                        "h/weight", "h/bias"],
    "DenseLstmWeights": ["i/weight", "i/bias", "f/weight", "f/bias",
                         "g/weight", "g/bias", "o/weight", "o/bias"],
}

_KIND_DIMS = {
    "SqueezedGruWeights": ("in_channels", "out_channels", "kernel_size"),
    "ConvGruWeights": ("in_channels", "out_channels", "kernel_size"),
    "DenseGruWeights": ("in_size", "hidden_size"),
    "DenseLstmWeights": ("in_size", "hidden_size"),
}


def save_cell_weights(directory, weights):
    """Persist a gate-weight bundle with a manifest of gate roles/shapes."""
    from .tensor_io import save_weights

    kind = type(weights).__name__
    roles = _GATE_FIELDS[kind]
    named = {role: t.data for role, t in zip(roles, weights.flatten())}
    meta = {"kind": kind}
    for dim in _KIND_DIMS[kind]:
        meta[dim] = getattr(weights, dim)
    save_weights(directory, named, meta=meta)


def load_cell_weights(directory):
    """Restore a bundle written by save_cell_weights."""
    from .tensor_io import load_weights

    arrays, meta = load_weights(directory)
    kind = meta["kind"]
    cls = {"SqueezedGruWeights": SqueezedGruWeights,
           "ConvGruWeights": ConvGruWeights,
           "DenseGruWeights": DenseGruWeights,
           "DenseLstmWeights": DenseLstmWeights}[kind]
    tensors = [Tensor(arrays[role], requires_grad=True)
               for role in _GATE_FIELDS[kind]]
    dims = [meta[d] for d in _KIND_DIMS[kind]]
    return cls.unflatten(tensors, *dims)
