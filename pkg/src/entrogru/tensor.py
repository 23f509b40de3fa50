"""Dense-tensor kernel layer with reverse-mode gradients.

Feature maps and weights are carried as 4-D arrays in (batch, channel,
height, width) row-major order. Every operation is a pure function of its
inputs; gradients are accumulated by a tape-free topological sweep over the
recorded parents of each result. Single precision is the working default,
double precision is used for gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_DTYPE = np.float32

PAD_MODES = ("zero", "replicate")
CONV_MODES = ("standard", "depthwise", "pointwise")


class Tensor:
    """Array wrapper that records how it was produced so grads can flow back.

    `data` is a numpy array; feature maps use the (b, c, h, w) convention.
    `grad` is allocated lazily on the first backward pass.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got {self.shape}")
        return float(self.data.reshape(-1)[0])

    # -- graph plumbing ------------------------------------------------------

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, grad=None):
        """Reverse-mode sweep from this tensor through all recorded parents."""
        if grad is None:
            grad = np.ones_like(self.data)
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape if len(shape) > 1 else shape[0])


def _result(data, parents, backward_fn) -> Tensor:
    """Wrap an op result, recording parents only when a grad path exists."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) and dtype is None else Tensor(x, dtype=dtype)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise algebra -----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape).astype(b.dtype, copy=False))

    return _result(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape).astype(b.dtype, copy=False))

    return _result(data, (a, b), backward)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"hadamard operands must match: {a.shape} vs {b.shape}")
    return mul(a, b)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    # split by sign to stay finite for large |x|
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                   np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = out.astype(d.dtype, copy=False)

    def backward(g):
        x._accumulate(g * out * (1.0 - out))

    return _result(out, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - out * out))

    return _result(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0.0)

    def backward(g):
        x._accumulate(g * (x.data > 0))

    return _result(out, (x,), backward)


def abs_(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.abs(x.data)

    def backward(g):
        x._accumulate(g * np.sign(x.data))

    return _result(out, (x,), backward)


# -- shape ops ----------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    data = x.data.reshape(shape)

    def backward(g):
        x._accumulate(g.reshape(old))

    return _result(data, (x,), backward)


def moveaxis(x: Tensor, src, dst) -> Tensor:
    x = as_tensor(x)
    data = np.moveaxis(x.data, src, dst)

    def backward(g):
        x._accumulate(np.moveaxis(g, dst, src))

    return _result(data, (x,), backward)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack two (b, c, h, w) tensors along the channel axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 4 or b.ndim != 4:
        raise ValueError("concat_channels expects 4-D tensors")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(
            f"concat_channels needs matching batch/spatial dims: {a.shape} vs {b.shape}")
    ca = a.shape[1]
    data = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:, :ca])
        if b.requires_grad:
            b._accumulate(g[:, ca:])

    return _result(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product (rows x features) @ (features x out)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shapes incompatible: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _result(data, (a, b), backward)


def concat_features(a: Tensor, b: Tensor) -> Tensor:
    """Stack two (batch, features) tensors along the feature axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError(f"concat_features needs matching rows: {a.shape} vs {b.shape}")
    na = a.shape[1]
    data = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:, :na])
        if b.requires_grad:
            b._accumulate(g[:, na:])

    return _result(data, (a, b), backward)


def concat(parts, axis: int = 0) -> Tensor:
    """Concatenate tensors along an axis."""
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)

    def backward(g):
        ofs = 0
        for p, n in zip(parts, sizes):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(ofs, ofs + n)
                p._accumulate(g[tuple(sl)])
            ofs += n

    return _result(data, tuple(parts), backward)


def take_rows(x: Tensor, idx) -> Tensor:
    """Select rows of a 2-D tensor by integer index."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    data = x.data[idx]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        x._accumulate(full)

    return _result(data, (x,), backward)


# -- reductions ---------------------------------------------------------------


def sum_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    data = np.asarray(x.data.sum(), dtype=x.dtype)

    def backward(g):
        x._accumulate(np.broadcast_to(g, x.shape).astype(x.dtype, copy=False))

    return _result(data, (x,), backward)


def mean_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    n = x.size
    data = np.asarray(x.data.mean(), dtype=x.dtype)

    def backward(g):
        x._accumulate(np.broadcast_to(g / n, x.shape).astype(x.dtype, copy=False))

    return _result(data, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    d = x.data
    m = d.max(axis=axis, keepdims=True)
    shifted = d - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def backward(g):
        soft = np.exp(out)
        x._accumulate(g - soft * g.sum(axis=axis, keepdims=True))

    return _result(out, (x,), backward)


# -- pooling -------------------------------------------------------------------


def avg_pool(x: Tensor, factor: int) -> Tensor:
    """Average non-overlapping factor x factor blocks of a (b, c, h, w) tensor."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError("avg_pool expects a 4-D tensor")
    b, c, h, w = x.shape
    f = int(factor)
    if f <= 0 or h % f or w % f:
        raise ValueError(f"pooling factor {factor} must divide spatial dims ({h}, {w})")
    data = x.data.reshape(b, c, h // f, f, w // f, f).mean(axis=(3, 5))

    def backward(g):
        up = np.repeat(np.repeat(g, f, axis=2), f, axis=3) / (f * f)
        x._accumulate(up.astype(x.dtype, copy=False))

    return _result(data, (x,), backward)


# -- convolution ----------------------------------------------------------------


@dataclass
class ConvSpec:
    """Kernel bundle plus geometry for one convolution.

    kernel layout is (out_channels, in_channels, kh, kw); depthwise kernels
    use (channels, 1, kh, kw). Padding is symmetric, either zero-filled or
    edge-replicating.
    """

    kernel: Tensor
    stride: int = 1
    padding: int = 0
    pad_mode: str = "zero"
    bias: Tensor | None = None
    mode: str = "standard"

    def __post_init__(self):
        self.kernel = as_tensor(self.kernel)
        if self.bias is not None:
            self.bias = as_tensor(self.bias)
        if self.kernel.ndim != 4:
            raise ValueError(f"kernel must be 4-D, got shape {self.kernel.shape}")
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"padding must be non-negative, got {self.padding}")
        if self.pad_mode not in PAD_MODES:
            raise ValueError(f"pad_mode must be one of {PAD_MODES}, got {self.pad_mode!r}")
        if self.mode not in CONV_MODES:
            raise ValueError(f"mode must be one of {CONV_MODES}, got {self.mode!r}")
        oc, ic, kh, kw = self.kernel.shape
        if self.mode == "depthwise" and ic != 1:
            raise ValueError(
                f"depthwise kernels are per-channel (c, 1, kh, kw); got {self.kernel.shape}")
        if self.mode == "pointwise" and (kh != 1 or kw != 1):
            raise ValueError(f"pointwise mode requires a 1x1 kernel, got {kh}x{kw}")
        if self.bias is not None and self.bias.shape != (oc,):
            raise ValueError(
                f"bias must have one value per output channel ({oc},), got {self.bias.shape}")

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        oc, ic, _, _ = self.kernel.shape
        return oc if self.mode == "depthwise" else ic

    def params(self):
        yield self.kernel
        if self.bias is not None:
            yield self.bias


def _pad_input(x, p, mode):
    if p == 0:
        return x
    width = ((0, 0), (0, 0), (p, p), (p, p))
    return np.pad(x, width, mode="constant" if mode == "zero" else "edge")


def _fold_pad_grad(gp, p, mode, h, w):
    """Map the gradient of a padded array back onto the original extent."""
    if p == 0:
        return gp
    if mode == "zero":
        return gp[:, :, p:p + h, p:p + w]
    cols = gp[:, :, :, p:p + w].copy()
    cols[:, :, :, 0] += gp[:, :, :, :p].sum(axis=3)
    cols[:, :, :, w - 1] += gp[:, :, :, p + w:].sum(axis=3)
    g = cols[:, :, p:p + h, :].copy()
    g[:, :, 0, :] += cols[:, :, :p, :].sum(axis=2)
    g[:, :, h - 1, :] += cols[:, :, p + h:, :].sum(axis=2)
    return g


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def conv2d(x: Tensor, spec: ConvSpec) -> Tensor:
    """Direct 2-D convolution (cross-correlation) of a (b, c, h, w) tensor.

    Accumulation runs over kernel offsets in a fixed (dy, dx) order, so
    results are bit-reproducible.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError(f"conv2d input must be 4-D (b, c, h, w), got {x.shape}")
    w = spec.kernel
    oc, kin, kh, kw = w.shape
    b, c, h, wd = x.shape
    depthwise = spec.mode == "depthwise"
    if depthwise:
        if oc != c:
            raise ValueError(
                f"depthwise conv needs out_channels == in_channels: kernel {w.shape}, input {x.shape}")
    elif kin != c:
        raise ValueError(
            f"kernel expects {kin} input channels but input has shape {x.shape}")
    s, p = spec.stride, spec.padding
    oh = conv_output_size(h, kh, s, p)
    ow = conv_output_size(wd, kw, s, p)
    if oh <= 0 or ow <= 0:
        raise ValueError(
            f"conv2d output would be empty: input {x.shape}, kernel {w.shape}, "
            f"stride {s}, padding {p}")

    xp = _pad_input(x.data, p, spec.pad_mode)
    wd_ = w.data
    if depthwise:
        out = np.zeros((b, c, oh, ow), dtype=x.dtype)
        for dy in range(kh):
            for dx in range(kw):
                patch = xp[:, :, dy:dy + s * oh:s, dx:dx + s * ow:s]
                out += wd_[:, 0, dy, dx][None, :, None, None] * patch
    else:
        acc = np.zeros((oc, b, oh, ow), dtype=x.dtype)
        for dy in range(kh):
            for dx in range(kw):
                patch = xp[:, :, dy:dy + s * oh:s, dx:dx + s * ow:s]
                acc += np.tensordot(wd_[:, :, dy, dx], patch, axes=([1], [1]))
        out = np.ascontiguousarray(acc.transpose(1, 0, 2, 3))
    if spec.bias is not None:
        out = out + spec.bias.data[None, :, None, None]

    def backward(g):
        if spec.bias is not None and spec.bias.requires_grad:
            spec.bias._accumulate(g.sum(axis=(0, 2, 3)))
        need_x = x.requires_grad
        need_w = w.requires_grad
        if not (need_x or need_w):
            return
        gxp = np.zeros_like(xp) if need_x else None
        gw = np.zeros_like(wd_) if need_w else None
        for dy in range(kh):
            for dx in range(kw):
                patch = xp[:, :, dy:dy + s * oh:s, dx:dx + s * ow:s]
                if depthwise:
                    if need_w:
                        gw[:, 0, dy, dx] = (g * patch).sum(axis=(0, 2, 3))
                    if need_x:
                        gxp[:, :, dy:dy + s * oh:s, dx:dx + s * ow:s] += \
                            wd_[:, 0, dy, dx][None, :, None, None] * g
                else:
                    if need_w:
                        gw[:, :, dy, dx] = np.tensordot(g, patch, axes=([0, 2, 3], [0, 2, 3]))
                    if need_x:
                        gxp[:, :, dy:dy + s * oh:s, dx:dx + s * ow:s] += \
                            np.tensordot(g, wd_[:, :, dy, dx], axes=([1], [0])).transpose(0, 3, 1, 2)
        if need_w:
            w._accumulate(gw)
        if need_x:
            x._accumulate(_fold_pad_grad(gxp, p, spec.pad_mode, h, wd))

    parents = (x, w) if spec.bias is None else (x, w, spec.bias)
    return _result(out, parents, backward)


def depthwise_separable(x: Tensor, dw: ConvSpec, pw: ConvSpec) -> Tensor:
    """Per-channel spatial convolution followed by a 1x1 cross-channel mix."""
    if dw.mode != "depthwise":
        raise ValueError(f"first spec must have mode 'depthwise', got {dw.mode!r}")
    if pw.mode != "pointwise":
        raise ValueError(f"second spec must have mode 'pointwise', got {pw.mode!r}")
    if pw.in_channels != dw.out_channels:
        raise ValueError(
            f"pointwise expects {pw.in_channels} channels but depthwise yields {dw.out_channels}")
    return conv2d(conv2d(x, dw), pw)


# -- parameter initialisation ---------------------------------------------------


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype=DEFAULT_DTYPE) -> Tensor:
    """Weights drawn uniformly from +-sqrt(1/fan_in)."""
    bound = float(np.sqrt(1.0 / fan_in))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


def make_conv_spec(rng, in_channels, out_channels, kernel_size, stride=1,
                   padding=0, pad_mode="zero", mode="standard", bias=True,
                   dtype=DEFAULT_DTYPE) -> ConvSpec:
    """Randomly initialised ConvSpec; depthwise kernels ignore out_channels."""
    k = int(kernel_size)
    if mode == "depthwise":
        shape = (in_channels, 1, k, k)
        fan_in = k * k
    else:
        shape = (out_channels, in_channels, k, k)
        fan_in = in_channels * k * k
    kernel = uniform_init(rng, shape, fan_in, dtype)
    b = None
    if bias:
        b = Tensor(np.zeros(shape[0], dtype=dtype), requires_grad=True)
    return ConvSpec(kernel=kernel, stride=stride, padding=padding,
                    pad_mode=pad_mode, bias=b, mode=mode)
