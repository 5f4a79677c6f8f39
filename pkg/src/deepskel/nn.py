"""Dense-array layer primitives with exact backward passes.

All activations are NCHW numpy arrays; float64 is used for gradient
checking and float32 for training. Convolutions are "same"-padded
cross-correlations implemented via im2col so the heavy lifting is a
single matmul.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass
class LayerParams:
    """Kernel + bias container with optimizer metadata.

    `kernels` has shape (out_ch, in_ch, kh, kw) with odd spatial dims;
    `lr_mult` scales the base learning rate for this layer and `decay`
    controls whether weight decay applies to the kernels (never to biases).
    """

    kernels: np.ndarray
    biases: np.ndarray | None = None
    lr_mult: float = 1.0
    decay: bool = True

    def __post_init__(self):
        if self.kernels.ndim == 4:
            kh, kw = self.kernels.shape[2:]
            if kh % 2 == 0 or kw % 2 == 0:
                raise ValueError("kernel spatial dims must be odd")
        if self.lr_mult <= 0:
            raise ValueError("lr_mult must be positive")


def _pad_same(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    ph, pw = kh // 2, kw // 2
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(N,C,H,W) -> (N*Ho*Wo, C*kh*kw) patch matrix of the padded input."""
    xp = _pad_same(x, kh, kw)
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # N,C,Ho,Wo,kh,kw
    n, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols), (ho, wo)


def conv2d_forward(x: np.ndarray, params: LayerParams, stride: int = 1) -> np.ndarray:
    """Same-padded cross-correlation plus bias."""
    w = params.kernels
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeMismatch("conv2d expects NCHW input and OIHW kernels")
    if x.shape[1] != w.shape[1]:
        raise ShapeMismatch(
            f"input has {x.shape[1]} channels, kernels expect {w.shape[1]}")
    out_ch, in_ch, kh, kw = w.shape
    cols, (ho, wo) = _im2col(x, kh, kw, stride)
    y = cols @ w.reshape(out_ch, -1).T
    if params.biases is not None:
        y += params.biases
    return y.reshape(x.shape[0], ho, wo, out_ch).transpose(0, 3, 1, 2)


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, params: LayerParams,
                    stride: int = 1):
    """Gradients of conv2d_forward w.r.t. input, kernels and biases."""
    w = params.kernels
    out_ch, in_ch, kh, kw = w.shape
    if grad_out.shape[1] != out_ch or x.shape[1] != in_ch:
        raise ShapeMismatch("grad/input channels do not match the kernels")
    n, _, ho, wo = grad_out.shape
    g = grad_out.transpose(0, 2, 3, 1).reshape(n * ho * wo, out_ch)

    cols, _ = _im2col(x, kh, kw, stride)
    grad_w = (g.T @ cols).reshape(w.shape)
    grad_b = g.sum(axis=0) if params.biases is not None else None

    # Scatter patch gradients back onto the padded input.
    grad_cols = (g @ w.reshape(out_ch, -1)).reshape(n, ho, wo, in_ch, kh, kw)
    ph, pw = kh // 2, kw // 2
    h, wdt = x.shape[2], x.shape[3]
    gxp = np.zeros((n, in_ch, h + 2 * ph, wdt + 2 * pw), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                grad_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    grad_x = gxp[:, :, ph:ph + h, pw:pw + wdt]
    return grad_x, grad_w, grad_b


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, grad_out, 0)


def maxpool2_forward(x: np.ndarray):
    """2x2 stride-2 max pooling; odd dims are padded by edge replication.

    Returns (output, argmax) where argmax records, per output cell, the
    flat index 0..3 of the winning element (first occurrence on ties).
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        x = np.pad(x, ((0, 0), (0, 0), (0, h % 2), (0, w % 2)), mode="edge")
        h, w = x.shape[2:]
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(n, c, h // 2, w // 2, 4)
    argmax = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def maxpool2_backward(grad_out: np.ndarray, argmax: np.ndarray,
                      input_shape: tuple) -> np.ndarray:
    """Route the gradient of each pooled cell to its recorded argmax."""
    n, c, h, w = input_shape
    hp, wp = h + h % 2, w + w % 2
    flat = np.zeros((n, c, hp // 2, wp // 2, 4), dtype=grad_out.dtype)
    np.put_along_axis(flat, argmax[..., None], grad_out[..., None], axis=-1)
    win = flat.reshape(n, c, hp // 2, wp // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    gx = win.reshape(n, c, hp, wp)
    if hp != h or wp != w:
        # Replicated rows/cols fold their gradient back onto the edge.
        if hp != h:
            gx[:, :, h - 1, :] += gx[:, :, h, :]
        if wp != w:
            gx[:, :, :, w - 1] += gx[:, :, :, w]
        gx = gx[:, :, :h, :w]
    return gx


def _interp_matrix(target: int, source: int, dtype) -> np.ndarray:
    """Row-stochastic 1-D bilinear interpolation matrix (center-aligned).

    Source sample j is treated as centered at k*j + (k-1)/2 in the target
    grid (k = target/source), matching the receptive-field centers of
    features downsampled by stride-k pooling: each 2x2 pool shifts centers
    by half a pixel, and align-corners interpolation would leave side
    outputs systematically offset by (k-1)/2 pixels after upsampling.
    """
    m = np.zeros((target, source), dtype=dtype)
    if source == 1:
        m[:, 0] = 1
        return m
    k = target / source
    pos = np.clip((np.arange(target) + 0.5) / k - 0.5, 0, source - 1)
    lo = np.minimum(pos.astype(int), source - 2)
    frac = pos - lo
    m[np.arange(target), lo] = 1 - frac
    m[np.arange(target), lo + 1] += frac
    return m


def upsample_bilinear_forward(x: np.ndarray, target_size: tuple[int, int]) -> np.ndarray:
    """Fixed (non-learned) bilinear upsampling to `target_size` = (H, W)."""
    th, tw = target_size
    h, w = x.shape[2:]
    if th < h or tw < w:
        raise ShapeMismatch("target size must be >= input size")
    rh = _interp_matrix(th, h, x.dtype)
    rw = _interp_matrix(tw, w, x.dtype)
    return np.einsum("ij,ncjk,lk->ncil", rh, x, rw, optimize=True)


def upsample_bilinear_backward(grad_out: np.ndarray,
                               input_size: tuple[int, int]) -> np.ndarray:
    """Exact adjoint of upsample_bilinear_forward."""
    h, w = input_size
    th, tw = grad_out.shape[2:]
    rh = _interp_matrix(th, h, grad_out.dtype)
    rw = _interp_matrix(tw, w, grad_out.dtype)
    return np.einsum("ji,ncjk,kl->ncil", rh, grad_out, rw, optimize=True)


def slice_channels(x: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Channel sub-range [start, stop) of an NCHW tensor."""
    if not 0 <= start <= stop <= x.shape[1]:
        raise ShapeMismatch(f"channel range [{start}, {stop}) out of bounds")
    return x[:, start:stop]


def concat_channels(parts: list[np.ndarray]) -> np.ndarray:
    """Concatenate NCHW tensors along the channel axis."""
    if not parts:
        raise ShapeMismatch("nothing to concatenate")
    spatial = {p.shape[2:] for p in parts}
    batch = {p.shape[0] for p in parts}
    if len(spatial) > 1 or len(batch) > 1:
        raise ShapeMismatch("concat requires equal batch and spatial shapes")
    return np.concatenate(parts, axis=1)
