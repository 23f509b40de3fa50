"""Finite-difference verification of reverse-mode gradients.

Every differentiable operation in the package is checked by comparing its
backward pass against central differences in double precision. The CLI's
`gradcheck` command runs the whole registry on seeded random shapes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, sum_all, mul


class GradCheckError(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    op_name: str
    tolerance: float
    per_input: list = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max(self.per_input) if self.per_input else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{self.op_name}: max rel err {self.max_rel_error:.3e} [{status}]"


def _rel_error(a, n):
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def grad_check(fn, inputs, tolerance=1e-5, step=1e-6, name=None,
               projection_seed=0) -> GradCheckReport:
    """Compare the backward pass of `fn` against central finite differences.

    `fn` maps Tensors to one Tensor; every input is treated as
    differentiable. Inputs are promoted to double precision and must stay
    small (<= 1e4 elements each) so the sweep stays fast.
    """
    name = name or getattr(fn, "__name__", "op")
    tensors = []
    for i, x in enumerate(inputs):
        arr = np.ascontiguousarray(x.data if isinstance(x, Tensor) else x,
                                   dtype=np.float64)
        if arr.size > 10_000:
            raise GradCheckError(
                f"{name}: input {i} has {arr.size} elements (limit 1e4)")
        tensors.append(Tensor(arr, requires_grad=True))

    proj_rng = np.random.default_rng(projection_seed)

    def scalar_loss(ts):
        out = fn(*ts)
        return out, sum_all(mul(out, projection))

    out0 = fn(*tensors)
    # small projection keeps the scalar loss O(1e-1) so the central
    # difference's roundoff floor stays below even the 1e-10 linear-op bound
    proj = proj_rng.standard_normal(out0.shape) / max(out0.size, 1)
    projection = Tensor(proj, dtype=np.float64)
    loss = sum_all(mul(out0, projection))
    loss.backward()

    report = GradCheckReport(op_name=name, tolerance=tolerance)
    for i, t in enumerate(tensors):
        if t.grad is None:
            analytic = np.zeros_like(t.data)
        else:
            analytic = t.grad
        if not np.all(np.isfinite(analytic)):
            raise GradCheckError(f"{name}: non-finite gradient for input {i}")
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            _, lp = scalar_loss(tensors)
            flat[j] = orig - step
            _, lm = scalar_loss(tensors)
            flat[j] = orig
            nflat[j] = (float(lp.data) - float(lm.data)) / (2.0 * step)
        report.per_input.append(_rel_error(analytic, numeric))
    return report


# -- registry used by the CLI and the acceptance suite ------------------------


def standard_checks(seed: int = 42, variants: int = 3):
    """(name, fn, inputs) cases covering every differentiable op.

    Each op family appears `variants` times on different seeded small
    shapes; weights enter as plain inputs so their gradients are exercised
    along with the data path.
    """
    from . import tensor as T
    from . import cells
    from .entropy import pooled_attention
    from .detect import loss as det_loss

    rng = np.random.default_rng(seed)

    def randt(*shape):
        return Tensor(rng.standard_normal(shape), dtype=np.float64)

    cases = []

    def conv_family(name, shapes, k, stride=1, padding=0, pad_mode="zero",
                    mode="standard"):
        for i, (b, c, h, w, oc) in enumerate(shapes[:variants]):
            x = randt(b, c, h, w)
            if mode == "depthwise":
                kern = randt(c, 1, k, k)
            elif mode == "pointwise":
                kern = randt(oc, c, 1, 1)
            else:
                kern = randt(oc, c, k, k)
            bias = randt(kern.shape[0])

            def fn(x_, w_, b_, _s=stride, _p=padding, _pm=pad_mode, _m=mode):
                spec = T.ConvSpec(kernel=w_, stride=_s, padding=_p, pad_mode=_pm,
                                  bias=b_, mode=_m)
                return T.conv2d(x_, spec)

            cases.append((f"{name}[{i}]", fn, [x, kern, bias]))

    conv_family("conv2d_3x3", [(2, 3, 6, 6, 4), (1, 2, 5, 7, 3), (1, 4, 4, 4, 2)],
                k=3, padding=1)
    conv_family("conv2d_stride2", [(1, 2, 7, 7, 3), (1, 3, 6, 8, 2), (2, 1, 5, 5, 2)],
                k=3, stride=2)
    conv_family("conv2d_replicate", [(1, 2, 5, 5, 2), (1, 1, 4, 6, 3), (2, 2, 3, 3, 1)],
                k=3, padding=1, pad_mode="replicate")
    conv_family("conv2d_depthwise", [(1, 4, 5, 5, 4), (2, 3, 4, 6, 3), (1, 2, 6, 4, 2)],
                k=3, padding=1, mode="depthwise")
    conv_family("conv2d_pointwise", [(2, 5, 4, 4, 3), (1, 3, 5, 3, 4), (1, 2, 3, 6, 2)],
                k=1, mode="pointwise")

    def dwsep(x_, kd, kp, bp):
        dw = T.ConvSpec(kernel=kd, padding=1, mode="depthwise")
        pw = T.ConvSpec(kernel=kp, bias=bp, mode="pointwise")
        return T.depthwise_separable(x_, dw, pw)

    for i, (c, s, oc) in enumerate([(3, 5, 4), (4, 4, 2), (2, 6, 3)][:variants]):
        cases.append((f"depthwise_separable[{i}]", dwsep,
                      [randt(1, c, s, s), randt(c, 1, 3, 3), randt(oc, c, 1, 1),
                       randt(oc)]))

    elementwise_shapes = [(1, 2, 3, 3), (2, 1, 4, 5), (1, 3, 2, 6)]
    for i, shape in enumerate(elementwise_shapes[:variants]):
        cases.append((f"sigmoid[{i}]", T.sigmoid, [randt(*shape)]))
        cases.append((f"tanh[{i}]", T.tanh, [randt(*shape)]))
        # keep relu inputs away from the kink
        r = rng.standard_normal(shape)
        r += np.where(r >= 0, 0.05, -0.05)
        cases.append((f"relu[{i}]", T.relu, [Tensor(r, dtype=np.float64)]))
        cases.append((f"hadamard[{i}]", T.hadamard, [randt(*shape), randt(*shape)]))
        cases.append((f"add[{i}]", T.add, [randt(*shape), randt(*shape)]))
        b, c, h, w = shape
        cases.append((f"concat_channels[{i}]", T.concat_channels,
                      [randt(b, c, h, w), randt(b, c + 1, h, w)]))

    for i, (shape, f) in enumerate([((1, 3, 6, 6), 2), ((1, 2, 6, 9), 3),
                                    ((2, 1, 4, 4), 2)][:variants]):
        cases.append((f"avg_pool[{i}]", lambda x_, _f=f: T.avg_pool(x_, _f),
                      [randt(*shape)]))

    for i, shape in enumerate([(6, 5), (3, 4), (8, 2)][:variants]):
        cases.append((f"log_softmax[{i}]",
                      lambda x_: T.log_softmax(x_, axis=1), [randt(*shape)]))

    # recurrent steps: weights flattened into the input list
    def weights_case(name, step_fn, weights, unflatten, xs):
        ins = list(xs) + list(weights.flatten())

        def fn(*args, _n=len(xs)):
            return step_fn(*args[:_n], unflatten(args[_n:]))

        cases.append((name, fn, ins))

    for i, (nin, nh) in enumerate([(5, 4), (3, 6), (7, 2)][:variants]):
        w = cells.init_dense_gru(rng, nin, nh, dtype=np.float64)
        weights_case(f"dense_gru_step[{i}]", cells.dense_gru_step, w,
                     lambda vals, a=nin, b=nh: cells.DenseGruWeights.unflatten(vals, a, b),
                     [randt(2, nin), randt(2, nh)])

        wl = cells.init_dense_lstm(rng, nin, nh, dtype=np.float64)

        def lstm_h(x_, h_, c_, ws):
            h2, _ = cells.dense_lstm_step(x_, h_, c_, ws)
            return h2

        weights_case(f"dense_lstm_step[{i}]", lstm_h, wl,
                     lambda vals, a=nin, b=nh: cells.DenseLstmWeights.unflatten(vals, a, b),
                     [randt(2, nin), randt(2, nh), randt(2, nh)])

    for i, (nin, nh, hh, ww) in enumerate([(4, 3, 4, 4), (2, 5, 3, 5),
                                           (3, 2, 5, 3)][:variants]):
        w = cells.init_conv_gru(rng, nin, nh, kernel_size=3, dtype=np.float64)
        weights_case(f"conv_gru_step[{i}]", cells.conv_gru_step, w,
                     lambda vals, a=nin, b=nh: cells.ConvGruWeights.unflatten(vals, a, b, 3),
                     [randt(1, nin, hh, ww), randt(1, nh, hh, ww)])

    for i, (nin, nh, hh, ww) in enumerate([(8, 4, 4, 4), (6, 3, 3, 5),
                                           (4, 2, 5, 3)][:variants]):
        w = cells.init_squeezed_gru(rng, nin, nh, kernel_size=3, dtype=np.float64)
        weights_case(f"squeezed_gru_step[{i}]", cells.squeezed_gru_step, w,
                     lambda vals, a=nin, b=nh: cells.SqueezedGruWeights.unflatten(vals, a, b, 3),
                     [randt(1, nin, hh, ww), randt(1, nh, hh, ww)])

    # attention is a constant field wrt the feature map
    for i, (hw, fs) in enumerate([(8, 4), (12, 6), (6, 2)][:variants]):
        att = pooled_attention(rng.uniform(0.0, 3.17, size=(hw, hw)), fs, fs)
        cases.append((f"feature_enhance[{i}]",
                      lambda f, _a=att: mul(f, Tensor(_a[None, None])),
                      [randt(1, 3, fs, fs)]))

    for i in range(variants):
        loc_p, loc_t, cls_p, labels = det_loss.random_loss_case(rng)
        cases.append((f"ssd_loss[{i}]",
                      lambda lp, cp, _t=loc_t, _l=labels:
                      det_loss.ssd_loss_from_matched(lp, _t, cp, _l)[2],
                      [loc_p, cls_p]))

    return cases


def run_standard_checks(tolerance=1e-5, seed=42):
    """Run the whole registry; returns the report list."""
    return [grad_check(fn, ins, tolerance=tolerance, name=name)
            for name, fn, ins in standard_checks(seed)]
