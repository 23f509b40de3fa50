"""Independent brute-force oracles used across the test suite.

Everything here is written as plain scalar loops (or the most literal
numpy transcription of one) so the production implementations are checked
against a second, independent route.
"""

import numpy as np

from entrogru.entropy import entropy_from_counts


def pad_image(x, p, mode):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)),
                  mode="constant" if mode == "zero" else "edge")


def conv2d_reference(x, w, bias=None, stride=1, padding=0, pad_mode="zero",
                     depthwise=False):
    """Direct quadruple-loop convolution."""
    xp = pad_image(np.asarray(x, dtype=np.float64), padding, pad_mode)
    w = np.asarray(w, dtype=np.float64)
    b, c, hp, wp = xp.shape
    oc, ic, kh, kw = w.shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    out = np.zeros((b, oc, oh, ow))
    for n in range(b):
        for o in range(oc):
            for y in range(oh):
                for x_ in range(ow):
                    acc = 0.0
                    if depthwise:
                        for dy in range(kh):
                            for dx in range(kw):
                                acc += w[o, 0, dy, dx] * \
                                    xp[n, o, y * stride + dy, x_ * stride + dx]
                    else:
                        for i in range(ic):
                            for dy in range(kh):
                                for dx in range(kw):
                                    acc += w[o, i, dy, dx] * \
                                        xp[n, i, y * stride + dy, x_ * stride + dx]
                    if bias is not None:
                        acc += bias[o]
                    out[n, o, y, x_] = acc
    return out


def replicate_pad_2d(img, p):
    return np.pad(img, p, mode="edge")


def local_mean_pairs_reference(img, window):
    """Per-pixel (gray, rounded window mean) with explicit loops."""
    img = np.asarray(img, dtype=np.int64)
    p = window // 2
    padded = replicate_pad_2d(img, p)
    h, w = img.shape
    n = window * window
    means = np.zeros((h, w), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            s = 0
            for dy in range(window):
                for dx in range(window):
                    s += int(padded[y + dy, x + dx])
            means[y, x] = (2 * s + n) // (2 * n)
    return img.copy(), means


def window_pair_entropy_reference(gray, means, window):
    """Dict-counted pair entropy per window, evaluated canonically."""
    h, w = gray.shape
    p = window // 2
    gp = replicate_pad_2d(gray, p)
    mp = replicate_pad_2d(means, p)
    n = window * window
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            counts = {}
            for dy in range(window):
                for dx in range(window):
                    key = (int(gp[y + dy, x + dx]), int(mp[y + dy, x + dx]))
                    counts[key] = counts.get(key, 0) + 1
            out[y, x] = entropy_from_counts(counts.values(), n)
    return out


def morphological_open_reference(m, se=3):
    """Min sweep then max sweep with explicit loops."""
    m = np.asarray(m, dtype=np.float64)
    p = se // 2
    h, w = m.shape

    def sweep(arr, fn):
        padded = replicate_pad_2d(arr, p)
        out = np.zeros_like(arr)
        for y in range(h):
            for x in range(w):
                out[y, x] = fn(padded[y:y + se, x:x + se])
        return out

    return sweep(sweep(m, np.min), np.max)


def ie_map_reference(img, window=3, opening=True):
    gray, means = local_mean_pairs_reference(img, window)
    m = window_pair_entropy_reference(gray, means, window)
    if opening:
        m = morphological_open_reference(m)
    return m


def nms_reference(boxes, scores, thresh):
    """O(n^2) suppression: repeatedly take the best unsuppressed box."""
    boxes = np.asarray(boxes, dtype=np.float64)
    scores = list(scores)
    alive = list(range(len(scores)))
    keep = []
    while alive:
        best = max(alive, key=lambda i: (scores[i], -i))
        keep.append(best)
        rest = []
        for i in alive:
            if i == best:
                continue
            if iou_reference(boxes[best], boxes[i]) <= thresh:
                rest.append(i)
        alive = rest
    return keep


def iou_reference(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / ua if ua > 0 else 0.0
