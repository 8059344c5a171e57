"""Differentiable operations on NCHW tensors.

`conv2d_forward` / `conv2d_backward` are the raw array kernels; the
Tensor-level `conv2d` wires them into the autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import wavelet
from .tensor import Tensor, make_result


# ---------------------------------------------------------------------------
# convolution kernels
# ---------------------------------------------------------------------------

@dataclass
class ConvCache:
    cols: np.ndarray          # im2col matrix, or the padded flat frame for the shifted path
    weight: np.ndarray
    input_shape: tuple
    stride: int
    padding: int
    shifted: bool = False


def _im2col(x: np.ndarray, k: int, stride: int, padding: int) -> tuple[np.ndarray, int, int]:
    b, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, b * ho * wo)
    return cols, ho, wo


def _frame_offsets(k: int, wp: int) -> list[int]:
    return [i * wp + j for i in range(k) for j in range(k)]


def _shifted_forward(x, weight, bias):
    # Same-size stride-1 convolution. The zero-padded input is laid out as one
    # (C, B*Hp*Wp) frame; tap (i, j) is then a contiguous column shift of
    # i*Wp + j, so the whole conv is one GEMM plus k*k shifted slice sums.
    # Frame positions whose window crosses a row or image edge are garbage
    # and get cropped.
    b, c, h, w = x.shape
    out_c, _, k, _ = weight.shape
    p = k // 2
    hp, wp = h + 2 * p, w + 2 * p
    frame = np.zeros((c, b, hp, wp), dtype=x.dtype)
    frame[:, :, p:p + h, p:p + w] = x.transpose(1, 0, 2, 3)
    total = b * hp * wp
    frame = frame.reshape(c, total)
    offs = _frame_offsets(k, wp)
    span = total - offs[-1]
    taps = weight.transpose(2, 3, 0, 1).reshape(k * k * out_c, c) @ frame
    acc = np.zeros((out_c, total), dtype=x.dtype)
    head = acc[:, :span]
    for t, off in enumerate(offs):
        head += taps[t * out_c:(t + 1) * out_c, off:off + span]
    if bias is not None:
        head += bias[:, None]
    out = acc.reshape(out_c, b, hp, wp)[:, :, :h, :w].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(out), frame


def _shifted_backward(grad_out, cache):
    weight, frame = cache.weight, cache.cols
    b, c, h, w = cache.input_shape
    out_c, _, k, _ = weight.shape
    p = k // 2
    hp, wp = h + 2 * p, w + 2 * p
    total = b * hp * wp
    offs = _frame_offsets(k, wp)
    span = total - offs[-1]
    gframe = np.zeros((out_c, b, hp, wp), dtype=grad_out.dtype)
    gframe[:, :, :h, :w] = grad_out.transpose(1, 0, 2, 3)
    g = gframe.reshape(out_c, total)[:, :span]
    grad_w = np.empty((k * k, out_c, c), dtype=grad_out.dtype)
    for t, off in enumerate(offs):
        np.matmul(g, frame[:, off:off + span].T, out=grad_w[t])
    grad_w = np.ascontiguousarray(grad_w.reshape(k, k, out_c, c).transpose(2, 3, 0, 1))
    grad_b = grad_out.sum(axis=(0, 2, 3))
    back = weight.transpose(2, 3, 1, 0).reshape(k * k * c, out_c) @ g
    gx = np.zeros((c, total), dtype=grad_out.dtype)
    for t, off in enumerate(offs):
        gx[:, off:off + span] += back[t * c:(t + 1) * c]
    gx = gx.reshape(c, b, hp, wp)[:, :, p:p + h, p:p + w].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(gx), grad_w, grad_b


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None,
                   stride: int = 1, padding: int = 1) -> tuple[np.ndarray, ConvCache]:
    """Cross-correlation of (B, C, H, W) with (O, C, k, k) weights."""
    if x.ndim != 4:
        raise ValueError(f"conv2d input must be (B, C, H, W), got shape {x.shape}")
    out_c, in_c, k, k2 = weight.shape
    if k != k2:
        raise ValueError("only square kernels are supported")
    if x.shape[1] != in_c:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, weight expects {in_c}")
    if stride == 1 and k % 2 == 1 and padding == k // 2:
        out, frame = _shifted_forward(x, weight, bias)
        return out, ConvCache(frame, weight, x.shape, stride, padding, shifted=True)
    b = x.shape[0]
    cols, ho, wo = _im2col(x, k, stride, padding)
    out = weight.reshape(out_c, -1) @ cols
    if bias is not None:
        out += bias.reshape(out_c, 1)
    out = np.ascontiguousarray(out.reshape(out_c, b, ho, wo).transpose(1, 0, 2, 3))
    return out, ConvCache(cols, weight, x.shape, stride, padding)


def conv2d_backward(grad_out: np.ndarray, cache: ConvCache | None):
    """Gradients (input, weight, bias) of `conv2d_forward`."""
    if cache is None:
        raise RuntimeError("conv2d_backward called without a recorded forward pass")
    if cache.shifted:
        return _shifted_backward(grad_out, cache)
    weight = cache.weight
    out_c, in_c, k, _ = weight.shape
    b, _, h, w = cache.input_shape
    s, p = cache.stride, cache.padding
    ho, wo = grad_out.shape[2], grad_out.shape[3]
    gm = grad_out.transpose(1, 0, 2, 3).reshape(out_c, -1)
    grad_w = (gm @ cache.cols.T).reshape(weight.shape)
    grad_b = gm.sum(axis=1)
    gcols = (weight.reshape(out_c, -1).T @ gm).reshape(in_c, k, k, b, ho, wo)
    gx = np.zeros((b, in_c, h + 2 * p, w + 2 * p), dtype=grad_out.dtype)
    for i in range(k):
        for j in range(k):
            gx[:, :, i:i + s * ho:s, j:j + s * wo:s] += gcols[:, i, j].transpose(1, 0, 2, 3)
    if p:
        gx = gx[:, :, p:p + h, p:p + w]
    return np.ascontiguousarray(gx), grad_w, grad_b


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 1) -> Tensor:
    out, cache = conv2d_forward(x.data, weight.data, None if bias is None else bias.data,
                                stride, padding)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gx, gw, gb = conv2d_backward(g, cache)
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make_result(out, parents, backward)


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, x.data * slope)

    def backward(g):
        return (np.where(mask, g, g * slope),)

    return make_result(out, (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g))


def scale(x: Tensor, factor: float) -> Tensor:
    return make_result(x.data * factor, (x,), lambda g: (g * factor,))


def scaled_add(base: Tensor, branch: Tensor, factor: float) -> Tensor:
    """base + factor * branch."""
    if base.shape != branch.shape:
        raise ValueError(f"shape mismatch {base.shape} vs {branch.shape}")
    return make_result(base.data + factor * branch.data, (base, branch), lambda g: (g, g * factor))


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        index = [slice(None)] * g.ndim
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            index[axis] = slice(lo, hi)
            parts.append(g[tuple(index)])
        return parts

    return make_result(data, tensors, backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, C)."""
    b, c, h, w = x.shape
    n = h * w

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / n, x.shape).copy(),)

    return make_result(x.data.mean(axis=(2, 3)), (x,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """(B, I) @ (O, I)^T + (O,)."""
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gx = g @ weight.data
        gw = g.T @ x.data
        return (gx, gw) if bias is None else (gx, gw, g.sum(axis=0))

    return make_result(out, parents, backward)


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return make_result(np.asarray(x.data.mean()), (x,),
                       lambda g: (np.full(x.shape, g / n, dtype=x.dtype),))


def sum_squares(x: Tensor) -> Tensor:
    return make_result(np.asarray(np.sum(x.data * x.data)), (x,), lambda g: (2.0 * g * x.data,))


def squared_error_sum(pred: Tensor, target: np.ndarray, factor: float = 1.0) -> Tensor:
    """factor * sum((pred - target)^2)."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target
    value = factor * np.sum(diff * diff)

    def backward(g):
        return ((2.0 * factor * g) * diff,)

    return make_result(np.asarray(value, dtype=pred.dtype), (pred,), backward)


def idwt2d(bands: Tensor) -> Tensor:
    """(B, 4, h, w) subbands -> (B, 1, 2h, 2w) image; the adjoint is the forward DWT."""
    if bands.data.ndim != 4 or bands.shape[1] != 4:
        raise ValueError(f"idwt2d expects (B, 4, h, w), got {bands.shape}")
    img = wavelet.idwt2d_stacked(bands.data)[:, None]

    def backward(g):
        return (wavelet.dwt2d(g[:, 0]).stack(axis=1).astype(g.dtype, copy=False),)

    return make_result(img.astype(bands.dtype, copy=False), (bands,), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))
