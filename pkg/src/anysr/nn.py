"""Minimal dense float32 kernel: conv2d, transposed conv2d, PReLU, l1 loss, Adam.

All operations are pure functions over numpy float32 arrays shaped
(channels, h, w) or (batch, channels, h, w). Plain loops over the kernel
taps keep the scatter/gather steps vectorized over the batch and spatial
axes without any framework dependency.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float32


class ShapeError(ValueError):
    """Operand shapes are inconsistent with the layer configuration."""


def _pad_pair(padding) -> tuple[int, int]:
    if isinstance(padding, int):
        return (padding, padding)
    lo, hi = padding
    return (int(lo), int(hi))


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a (possibly transposed) 2-D convolution.

    ``padding`` may be a single int (symmetric) or a (leading, trailing)
    pair applied to both spatial axes. For the transposed case the pair
    crops the full scatter output, so
    out = (in - 1) * stride + k - pad_lo - pad_hi.
    """

    in_channels: int
    out_channels: int
    kernel: tuple[int, int]
    stride: int = 1
    padding: int | tuple[int, int] = 0
    transposed: bool = False

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        lo, hi = _pad_pair(self.padding)
        if self.transposed:
            return ((h - 1) * self.stride + kh - lo - hi,
                    (w - 1) * self.stride + kw - lo - hi)
        return ((h + lo + hi - kh) // self.stride + 1,
                (w + lo + hi - kw) // self.stride + 1)


@dataclass
class LayerWeights:
    """Kernel (out, in, kh, kw), bias (out,), optional per-channel PReLU slope."""

    kernel: np.ndarray
    bias: np.ndarray
    prelu_slope: np.ndarray | None = None


def _promote(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected 3-D or 4-D tensor, got shape {x.shape}")


def _check_conv_args(x: np.ndarray, w: LayerWeights, spec: ConvSpec) -> None:
    kh, kw = spec.kernel
    if w.kernel.shape != (spec.out_channels, spec.in_channels, kh, kw):
        raise ShapeError(
            f"kernel shape {w.kernel.shape} does not match spec "
            f"{(spec.out_channels, spec.in_channels, kh, kw)}")
    if w.bias.shape != (spec.out_channels,):
        raise ShapeError(f"bias shape {w.bias.shape} != ({spec.out_channels},)")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels, spec expects {spec.in_channels}")


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_forward(x: np.ndarray, w: LayerWeights, spec: ConvSpec) -> np.ndarray:
    """Cross-correlation with zero padding (the usual CNN convention)."""
    if spec.transposed:
        return deconv_forward(x, w, spec)
    x4, squeeze = _promote(x)
    _check_conv_args(x4, w, spec)
    kh, kw = spec.kernel
    lo, hi = _pad_pair(spec.padding)
    xp = np.pad(x4, ((0, 0), (0, 0), (lo, hi), (lo, hi)))
    win = _windows(xp, kh, kw, spec.stride)
    out = np.einsum("biyxuv,oiuv->boyx", win, w.kernel, optimize=True)
    out += w.bias[None, :, None, None]
    out = np.ascontiguousarray(out)
    return out[0] if squeeze else out


def conv2d_backward(x: np.ndarray, w: LayerWeights, spec: ConvSpec,
                    grad_out: np.ndarray):
    """Exact gradients of conv2d_forward.

    Returns (grad_input, LayerWeights(grad_kernel, grad_bias)).
    """
    if spec.transposed:
        return deconv_backward(x, w, spec, grad_out)
    x4, squeeze = _promote(x)
    g4, _ = _promote(grad_out)
    _check_conv_args(x4, w, spec)
    kh, kw = spec.kernel
    s = spec.stride
    lo, hi = _pad_pair(spec.padding)
    oh, ow = spec.out_size(x4.shape[2], x4.shape[3])
    if g4.shape != (x4.shape[0], spec.out_channels, oh, ow):
        raise ShapeError(f"grad_out shape {g4.shape} does not match forward "
                         f"output {(x4.shape[0], spec.out_channels, oh, ow)}")
    xp = np.pad(x4, ((0, 0), (0, 0), (lo, hi), (lo, hi)))
    win = _windows(xp, kh, kw, s)
    grad_k = np.einsum("boyx,biyxuv->oiuv", g4, win, optimize=True)
    grad_b = g4.sum(axis=(0, 2, 3))
    grad_xp = np.zeros_like(xp)
    # one contraction for all taps, then cheap strided scatter-adds
    taps = np.tensordot(g4, w.kernel, axes=([1], [0]))  # (b, oh, ow, i, kh, kw)
    taps = np.moveaxis(taps, 3, 1)                      # (b, i, oh, ow, kh, kw)
    for u in range(kh):
        for v in range(kw):
            grad_xp[:, :, u:u + s * oh:s, v:v + s * ow:s] += taps[..., u, v]
    h, wdt = x4.shape[2], x4.shape[3]
    grad_x = np.ascontiguousarray(grad_xp[:, :, lo:lo + h, lo:lo + wdt])
    grads = LayerWeights(grad_k, grad_b)
    return (grad_x[0] if squeeze else grad_x), grads


def deconv_forward(x: np.ndarray, w: LayerWeights, spec: ConvSpec) -> np.ndarray:
    """Transposed convolution: scatter each input pixel through the kernel."""
    x4, squeeze = _promote(x)
    _check_conv_args(x4, w, spec)
    kh, kw = spec.kernel
    s = spec.stride
    lo, hi = _pad_pair(spec.padding)
    b, _, h, wdt = x4.shape
    lh, lw = (h - 1) * s + kh, (wdt - 1) * s + kw
    full = np.zeros((b, spec.out_channels, lh, lw),
                    dtype=np.result_type(x4, w.kernel))
    taps = np.tensordot(x4, w.kernel, axes=([1], [1]))  # (b, h, w, o, kh, kw)
    taps = np.moveaxis(taps, 3, 1)                      # (b, o, h, w, kh, kw)
    for u in range(kh):
        for v in range(kw):
            full[:, :, u:u + s * h:s, v:v + s * wdt:s] += taps[..., u, v]
    out = full[:, :, lo:lh - hi, lo:lw - hi] + w.bias[None, :, None, None]
    out = np.ascontiguousarray(out)
    return out[0] if squeeze else out


def deconv_backward(x: np.ndarray, w: LayerWeights, spec: ConvSpec,
                    grad_out: np.ndarray):
    """Exact gradients of deconv_forward."""
    x4, squeeze = _promote(x)
    g4, _ = _promote(grad_out)
    _check_conv_args(x4, w, spec)
    kh, kw = spec.kernel
    s = spec.stride
    lo, hi = _pad_pair(spec.padding)
    b, _, h, wdt = x4.shape
    oh, ow = spec.out_size(h, wdt)
    if g4.shape != (b, spec.out_channels, oh, ow):
        raise ShapeError(f"grad_out shape {g4.shape} does not match forward "
                         f"output {(b, spec.out_channels, oh, ow)}")
    lh, lw = (h - 1) * s + kh, (wdt - 1) * s + kw
    gfull = np.zeros((b, spec.out_channels, lh, lw),
                     dtype=np.result_type(g4, w.kernel))
    gfull[:, :, lo:lh - hi, lo:lw - hi] = g4
    # stride-s windows of the re-embedded grad pair each input pixel with
    # the kernel taps it scattered through in the forward pass
    win = _windows(gfull, kh, kw, s)                    # (b, o, h, w, kh, kw)
    grad_x = np.tensordot(win, w.kernel, axes=([1, 4, 5], [0, 2, 3]))
    grad_x = np.moveaxis(grad_x, 3, 1)                  # (b, i, h, w)
    grad_k = np.tensordot(win, x4, axes=([0, 2, 3], [0, 2, 3]))
    grad_k = grad_k.transpose(0, 3, 1, 2)               # (o, i, kh, kw)
    grad_x = np.ascontiguousarray(grad_x)
    grad_b = g4.sum(axis=(0, 2, 3))
    grads = LayerWeights(grad_k, grad_b)
    return (grad_x[0] if squeeze else grad_x), grads


def prelu(x: np.ndarray, slope: np.ndarray) -> np.ndarray:
    """out = x where x >= 0 else slope[c] * x, per channel."""
    x4, squeeze = _promote(x)
    if slope.shape != (x4.shape[1],):
        raise ShapeError(f"slope shape {slope.shape} != ({x4.shape[1]},)")
    out = np.where(x4 >= 0, x4, slope[None, :, None, None] * x4)
    return out[0] if squeeze else out


def prelu_backward(x: np.ndarray, slope: np.ndarray, grad_out: np.ndarray):
    """Returns (grad_input, grad_slope)."""
    x4, squeeze = _promote(x)
    g4, _ = _promote(grad_out)
    neg = x4 < 0
    grad_x = np.where(neg, slope[None, :, None, None] * g4, g4)
    grad_slope = np.where(neg, g4 * x4, 0.0).sum(axis=(0, 2, 3))
    return (grad_x[0] if squeeze else grad_x), grad_slope


def l1_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute error over all elements."""
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred.astype(np.float64) -
                                target.astype(np.float64))))


def l1_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(mean |pred - target|)/d(pred); sign(0) taken as 0."""
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {target.shape}")
    return (np.sign(pred - target) / pred.size).astype(pred.dtype)


@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              slices: dict | None = None) -> AdamState:
    """In-place Adam update with bias correction.

    Only parameters named in ``grads`` are touched. When ``slices`` maps a
    name to an index tuple, the gradient covers params[name][slices[name]]
    and only that region of the parameter and its moments is updated;
    everything outside the slice stays bit-identical.
    """
    state.t += 1
    t = state.t
    bc1 = DTYPE(1.0 - beta1 ** t)
    bc2 = DTYPE(1.0 - beta2 ** t)
    b1, b2 = DTYPE(beta1), DTYPE(beta2)
    for name, g in grads.items():
        if g is None:
            continue
        p_full = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p_full)
            state.v[name] = np.zeros_like(p_full)
        if state.m[name].shape != p_full.shape:
            raise ShapeError(f"Adam moment for {name!r} has shape "
                             f"{state.m[name].shape}, parameter {p_full.shape}")
        sl = slices.get(name, ()) if slices else ()
        p = p_full[sl] if sl else p_full
        m = state.m[name][sl] if sl else state.m[name]
        v = state.v[name][sl] if sl else state.v[name]
        if g.shape != p.shape:
            raise ShapeError(f"grad for {name!r} has shape {g.shape}, "
                             f"expected {p.shape}")
        m *= b1
        m += (DTYPE(1) - b1) * g
        v *= b2
        v += (DTYPE(1) - b2) * np.square(g)
        p -= DTYPE(lr) * (m / bc1) / (np.sqrt(v / bc2) + DTYPE(eps))
    return state
