"""
Convolution kernels for the classifier.

Batched NCHW convolution via im2col with exact backward passes. Everything is
float64 inside; callers own the float32 weight store.
"""

from typing import Tuple

import numpy as np


def output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def im2col(x: np.ndarray, kernel: int, stride: int, pad: int) -> Tuple[np.ndarray, Tuple[int, int]]:
    """
    Unfold patches of a batch.

    Args:
        x: (N, C, H, W) input
        kernel: Square kernel side
        stride: Stride
        pad: Zero padding on every side

    Returns:
        Tuple[np.ndarray, Tuple[int, int]]: (N, C*k*k, Ho*Wo) columns and (Ho, Wo)
    """
    n, c, h, w = x.shape
    ho, wo = output_size(h, kernel, stride, pad), output_size(w, kernel, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, kernel, kernel, ho, wo), dtype=x.dtype)
    for i in range(kernel):
        for j in range(kernel):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(n, c * kernel * kernel, ho * wo), (ho, wo)


def col2im(
    cols: np.ndarray,
    input_shape: Tuple[int, int, int, int],
    kernel: int,
    stride: int,
    pad: int,
) -> np.ndarray:
    """Adjoint of im2col: fold column gradients back onto the input."""
    n, c, h, w = input_shape
    ho, wo = output_size(h, kernel, stride, pad), output_size(w, kernel, stride, pad)
    cols = cols.reshape(n, c, kernel, kernel, ho, wo)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kernel):
        for j in range(kernel):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return xp[:, :, pad:pad + h, pad:pad + w]


def conv_forward(
    x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int, pad: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Convolution forward.

    Args:
        x: (N, C, H, W)
        weight: (O, C, k, k)
        bias: (O,)
        stride: Stride
        pad: Padding

    Returns:
        Tuple[np.ndarray, np.ndarray]: (N, O, Ho, Wo) output and the columns for backward
    """
    out_channels, _, kernel, _ = weight.shape
    cols, (ho, wo) = im2col(x, kernel, stride, pad)
    out = np.matmul(weight.reshape(out_channels, -1), cols) + bias[None, :, None]
    return out.reshape(x.shape[0], out_channels, ho, wo), cols


def conv_backward(
    grad_out: np.ndarray,
    cols: np.ndarray,
    x_shape: Tuple[int, int, int, int],
    weight: np.ndarray,
    stride: int,
    pad: int,
    need_input: bool = True,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Convolution backward.

    Returns:
        Tuple: (dx or None, dweight, dbias)
    """
    n = grad_out.shape[0]
    out_channels, _, kernel, _ = weight.shape
    g = grad_out.reshape(n, out_channels, -1)
    d_weight = np.einsum("nop,nkp->ok", g, cols).reshape(weight.shape)
    d_bias = g.sum(axis=(0, 2))
    d_x = None
    if need_input:
        d_cols = np.matmul(weight.reshape(out_channels, -1).T, g)
        d_x = col2im(d_cols, x_shape, kernel, stride, pad)
    return d_x, d_weight, d_bias
