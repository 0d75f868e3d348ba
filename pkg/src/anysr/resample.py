"""Separable bicubic resampling (Catmull-Rom, a = -0.5) with replicate borders.

Used both for the zero-parameter upscaling branch and for generating LR
training patches from HR crops. Downscaling widens the kernel by the
scale ratio (antialiasing), the usual imresize behavior.
"""
from __future__ import annotations

import numpy as np


CUBIC_A = -0.5


def cubic_kernel(x: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    """Keys cubic kernel with support [-2, 2]."""
    x = np.abs(x)
    x2, x3 = x * x, x * x * x
    out = np.where(x <= 1.0,
                   (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0,
                   np.where(x < 2.0,
                            a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a,
                            0.0))
    return out


def resize_weights(n_in: int, n_out: int) -> np.ndarray:
    """Dense (n_out, n_in) row-stochastic resampling matrix for one axis."""
    ratio = n_in / n_out
    width = max(1.0, ratio)  # kernel dilation when downscaling
    support = 2.0 * width
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for o in range(n_out):
        center = (o + 0.5) * ratio - 0.5
        lo = int(np.floor(center - support)) + 1
        hi = int(np.floor(center + support)) + 1
        idx = np.arange(lo, hi)
        w = cubic_kernel((center - idx) / width)
        s = w.sum()
        if s <= 0:
            raise ValueError("degenerate resampling weights")
        w /= s
        np.add.at(mat[o], np.clip(idx, 0, n_in - 1), w)  # replicate borders
    return mat


def resize_bicubic(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize the last two axes of ``img`` to (out_h, out_w)."""
    h, w = img.shape[-2], img.shape[-1]
    mh = resize_weights(h, out_h)
    mw = resize_weights(w, out_w)
    out = np.tensordot(img.astype(np.float64), mw, axes=([-1], [1]))
    out = np.tensordot(mh, out, axes=([1], [-2]))
    # tensordot moved the row axis to the front; restore (..., out_h, out_w)
    out = np.moveaxis(out, 0, -2)
    dtype = img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64
    return np.ascontiguousarray(out, dtype=dtype)


def bicubic_flops(lr_size: tuple[int, int], scale: int, channels: int = 3) -> int:
    """2 x MAC count of separable 4-tap bicubic upscaling."""
    h, w = lr_size
    horizontal = h * (w * scale)           # samples after the first pass
    vertical = (h * scale) * (w * scale)   # samples after the second pass
    return 2 * 4 * channels * (horizontal + vertical)
