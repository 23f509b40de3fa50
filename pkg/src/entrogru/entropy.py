"""Sliding-window image entropy maps and entropy-gated feature attention.

The 2-D entropy map is built in two window passes over a grayscale image:
the first pass pairs every pixel's gray value with the rounded mean gray of
its neighbourhood, the second computes the Shannon entropy of those pairs
inside each window. A morphological opening cleans isolated peaks. The map
then gates feature tensors: pooled to the feature's spatial size, squashed
by a sigmoid and broadcast-multiplied over all channels.

Borders are replicate-padded everywhere so every map keeps the image's
dimensions. All entropies are base-2 (bits).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, as_tensor, mul

MAX_GRAY = 255


def _check_gray(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"grayscale image must be non-empty 2-D, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > MAX_GRAY:
        raise ValueError("gray values must lie in [0, 255]")
    return arr.astype(np.int64)


def _check_window(window: int) -> int:
    w = int(window)
    if w < 3 or w % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 3, got {window}")
    return w


def _window_stack(arr: np.ndarray, window: int) -> np.ndarray:
    """(window^2, H, W) stack of replicate-padded neighbourhood views."""
    pad = window // 2
    padded = np.pad(arr, pad, mode="edge")
    h, w = arr.shape
    return np.stack([padded[dy:dy + h, dx:dx + w]
                     for dy in range(window) for dx in range(window)])


def to_grayscale(rgb) -> np.ndarray:
    """8-bit luma: floor(0.299 R + 0.587 G + 0.114 B + 0.5), clamped."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) RGB input, got shape {arr.shape}")
    r = arr[:, :, 0].astype(np.float64)
    g = arr[:, :, 1].astype(np.float64)
    b = arr[:, :, 2].astype(np.float64)
    luma = np.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5)
    return np.clip(luma, 0, MAX_GRAY).astype(np.uint8)


def histogram(img) -> np.ndarray:
    """256-bin gray-level proportions, summing to 1."""
    arr = _check_gray(img)
    counts = np.bincount(arr.reshape(-1), minlength=MAX_GRAY + 1)
    return counts / arr.size


def unary_entropy(hist) -> float:
    """Shannon entropy of a gray-level histogram, in bits (0 log 0 := 0)."""
    p = np.asarray(hist, dtype=np.float64)
    if p.shape != (MAX_GRAY + 1,):
        raise ValueError(f"histogram must have 256 bins, got shape {p.shape}")
    if p.min() < 0 or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("histogram proportions must be non-negative and sum to 1")
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum()) + 0.0


@dataclass
class PairField:
    """Per-pixel (gray value, rounded window-mean gray) duals."""

    gray: np.ndarray
    mean: np.ndarray
    window: int

    @property
    def shape(self):
        return self.gray.shape


def local_mean_pairs(img, window: int = 3) -> PairField:
    """First sliding pass: pair each pixel with its neighbourhood mean.

    The mean is rounded half-up via integer arithmetic, so results are
    exact and shifting all pixels by a constant shifts every pair by the
    same constant.
    """
    arr = _check_gray(img)
    w = _check_window(window)
    sums = _window_stack(arr, w).sum(axis=0)
    n = w * w
    means = (2 * sums + n) // (2 * n)
    return PairField(gray=arr.astype(np.int64), mean=means.astype(np.int64), window=w)


def entropy_from_counts(counts, total: int) -> float:
    """Canonical entropy of a frequency multiset, in bits.

    Both the production map and any brute-force counting oracle evaluate
    their counts through this one function, so equal counts give
    bit-identical floats.
    """
    h = 0.0
    for c in sorted(counts, reverse=True):
        p = c / total
        h -= p * math.log2(p)
    return h + 0.0


def _code_window_entropy(codes: np.ndarray, window: int) -> np.ndarray:
    """Per-pixel entropy of the code values inside each window (exact)."""
    n = window * window
    stack = _window_stack(codes, window)
    # multiplicity of each window member among its n neighbours
    mult = np.zeros(stack.shape, dtype=np.int16)
    for m in range(n):
        mult += stack == stack[m][None]
    sig = np.sort(mult.reshape(n, -1), axis=0).T
    uniq, inverse = np.unique(sig, axis=0, return_inverse=True)
    values = np.empty(len(uniq))
    for i, row in enumerate(uniq):
        # a multiplicity L appearing a times means a/L runs of length L
        counts = []
        for length, appearances in zip(*np.unique(row, return_counts=True)):
            counts.extend([int(length)] * (int(appearances) // int(length)))
        values[i] = entropy_from_counts(counts, n)
    return values[inverse].reshape(codes.shape)


def window_2d_entropy(pairs: PairField, window: int = 3) -> np.ndarray:
    """Second sliding pass: entropy of the (gray, mean) duals per window.

    Each dual's probability is its frequency divided by the window's pixel
    count, so probabilities sum to 1 within each window.
    """
    w = _check_window(window)
    codes = pairs.gray * (MAX_GRAY + 1) + pairs.mean
    return _code_window_entropy(codes, w)


def local_unary_entropy(img, window: int = 3) -> np.ndarray:
    """Single-pass variant: windowed entropy of raw gray values."""
    arr = _check_gray(img)
    w = _check_window(window)
    return _code_window_entropy(arr, w)


def morphological_open(entropy_map, se_size: int = 3) -> np.ndarray:
    """Grayscale opening: window minimum then window maximum.

    Uses a square structuring element and replicate borders; removes peaks
    narrower than the element without shifting the rest of the map.
    """
    arr = np.asarray(entropy_map, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"entropy map must be 2-D, got shape {arr.shape}")
    se = _check_window(se_size)
    eroded = _window_stack(arr, se).min(axis=0)
    return _window_stack(eroded, se).max(axis=0)


def ie_map(img, window: int = 3, opening: bool = True) -> np.ndarray:
    """Full entropy-map pipeline: pairs, windowed entropy, optional opening."""
    arr = _check_gray(img)
    w = _check_window(window)
    if arr.shape[0] < w or arr.shape[1] < w:
        raise ValueError(
            f"image {arr.shape} is smaller than the minimum {w}x{w} window")
    pairs = local_mean_pairs(arr, w)
    m = window_2d_entropy(pairs, w)
    if opening:
        m = morphological_open(m)
    return m


def max_entropy_bits(window: int = 3) -> float:
    """Upper bound of any map value: log2 of the window pixel count."""
    return math.log2(window * window)


def pooled_attention(entropy_map, out_h: int, out_w: int) -> np.ndarray:
    """Average-pool a map to (out_h, out_w) and squash with a sigmoid."""
    m = np.asarray(entropy_map, dtype=np.float64)
    mh, mw = m.shape
    if out_h <= 0 or out_w <= 0 or mh % out_h or mw % out_w:
        raise ValueError(
            f"map {m.shape} must be an integer multiple of target ({out_h}, {out_w})")
    fh, fw = mh // out_h, mw // out_w
    if fh != fw:
        raise ValueError(
            f"map {m.shape} and target ({out_h}, {out_w}) imply anisotropic pooling")
    pooled = m.reshape(out_h, fh, out_w, fw).mean(axis=(1, 3))
    return 1.0 / (1.0 + np.exp(-pooled))


def feature_enhance(f: Tensor, entropy_map) -> Tensor:
    """Gate a (b, c, h, w) feature map by the pooled, squashed entropy map.

    The attention field is a constant w.r.t. the network parameters; only
    the feature map carries gradient.
    """
    f = as_tensor(f)
    if f.ndim != 4:
        raise ValueError(f"feature map must be 4-D (b, c, h, w), got {f.shape}")
    att = pooled_attention(entropy_map, f.shape[2], f.shape[3])
    gate = Tensor(att[None, None].astype(f.dtype))
    return mul(f, gate)
