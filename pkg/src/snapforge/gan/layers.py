"""Dense-tensor neural net ops with explicit forward/backward passes.

Everything works on (N, C, H, W) arrays. Convolutions are im2col/col2im
reshaped into single large GEMMs so numpy's BLAS does the heavy lifting;
transposed convolution reuses the same machinery (its forward is the
data-gradient of a convolution and vice versa). No ML runtime is involved,
so the 64-bit path used by gradient checks controls precision end to end.
"""

from __future__ import annotations

import numpy as np


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, int, int]:
    """(N,C,H,W) -> (C*k*k, N*OH*OW) patch matrix."""
    n, c, h, w = x.shape
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(w, k, stride, pad)
    xp = _pad(x, pad)
    sn, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, k, k, oh, ow),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    # (C, k, k, N, OH, OW) -> (C*k*k, N*OH*OW)
    cols = windows.transpose(1, 2, 3, 0, 4, 5).reshape(c * k * k, n * oh * ow)
    return np.ascontiguousarray(cols), oh, ow


def col2im(
    cols: np.ndarray, x_shape: tuple[int, int, int, int], k: int, stride: int, pad: int
) -> np.ndarray:
    """Scatter-add inverse of im2col; cols is (C*k*k, N*OH*OW)."""
    n, c, h, w = x_shape
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(w, k, stride, pad)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    patches = cols.reshape(c, k, k, n, oh, ow).transpose(3, 0, 1, 2, 4, 5)
    for i in range(k):
        hi = i + stride * oh
        for j in range(k):
            wj = j + stride * ow
            xp[:, :, i:hi:stride, j:wj:stride] += patches[:, :, i, j]
    if pad == 0:
        return xp
    return xp[:, :, pad:-pad, pad:-pad]


# -- convolution ------------------------------------------------------------


def conv2d_forward(x, w, b, stride: int, pad: int):
    """w is (CO, CI, k, k); returns (y, cache)."""
    co, ci, k, _ = w.shape
    n = x.shape[0]
    cols, oh, ow = im2col(x, k, stride, pad)
    y = (w.reshape(co, ci * k * k) @ cols).reshape(co, n, oh, ow).transpose(1, 0, 2, 3)
    y = y + b.reshape(1, co, 1, 1)
    return y, (x.shape, cols, w, stride, pad)


def conv2d_backward(dy, cache):
    x_shape, cols, w, stride, pad = cache
    co, ci, k, _ = w.shape
    n = dy.shape[0]
    dy_mat = dy.transpose(1, 0, 2, 3).reshape(co, -1)
    dw = (dy_mat @ cols.T).reshape(w.shape)
    db = dy.sum(axis=(0, 2, 3))
    dcols = w.reshape(co, ci * k * k).T @ dy_mat
    dx = col2im(dcols, x_shape, k, stride, pad)
    return dx, dw, db


# -- transposed convolution ----------------------------------------------------


def conv_transpose2d_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size - 1) * stride - 2 * pad + k


def conv_transpose2d_forward(x, w, b, stride: int, pad: int):
    """w is (CI, CO, k, k); output spatial size (H-1)*stride - 2*pad + k."""
    ci, co, k, _ = w.shape
    n, _, h, wth = x.shape
    oh = conv_transpose2d_out_size(h, k, stride, pad)
    ow = conv_transpose2d_out_size(wth, k, stride, pad)
    x_mat = x.transpose(1, 0, 2, 3).reshape(ci, -1)
    cols = w.reshape(ci, co * k * k).T @ x_mat  # (CO*k*k, N*H*W)
    y = col2im(cols, (n, co, oh, ow), k, stride, pad)
    y = y + b.reshape(1, co, 1, 1)
    return y, (x, w, stride, pad, (n, co, oh, ow))


def conv_transpose2d_backward(dy, cache):
    x, w, stride, pad, _y_shape = cache
    ci, co, k, _ = w.shape
    n = x.shape[0]
    dy_cols, _, _ = im2col(dy, k, stride, pad)  # (CO*k*k, N*H*W)
    x_mat = x.transpose(1, 0, 2, 3).reshape(ci, -1)
    dw = (x_mat @ dy_cols.T).reshape(w.shape)
    db = dy.sum(axis=(0, 2, 3))
    dx_mat = w.reshape(ci, co * k * k) @ dy_cols
    dx = dx_mat.reshape(ci, n, x.shape[2], x.shape[3]).transpose(1, 0, 2, 3)
    return dx, dw, db


# -- batch normalization ----------------------------------------------------------

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train: bool):
    """Per-channel normalization over (N, H, W).

    Training mode normalizes by batch statistics and folds them into the
    running estimates in place (momentum 0.1, biased variance); inference
    mode uses the running estimates only.
    """
    c = x.shape[1]
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= 1.0 - BN_MOMENTUM
        running_mean += BN_MOMENTUM * mean
        running_var *= 1.0 - BN_MOMENTUM
        running_var += BN_MOMENTUM * var
    else:
        mean = running_mean
        var = running_var
    ivstd = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean.reshape(1, c, 1, 1)) * ivstd.reshape(1, c, 1, 1)
    y = gamma.reshape(1, c, 1, 1) * xhat + beta.reshape(1, c, 1, 1)
    return y, (xhat, ivstd, gamma, train, x.shape)


def batchnorm_backward(dy, cache):
    xhat, ivstd, gamma, train, x_shape = cache
    c = x_shape[1]
    m = x_shape[0] * x_shape[2] * x_shape[3]
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    dxhat = dy * gamma.reshape(1, c, 1, 1)
    if not train:
        return dxhat * ivstd.reshape(1, c, 1, 1), dgamma, dbeta
    # training mode: batch mean/var depend on x
    sum_dxhat = dxhat.sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
    dx = (ivstd.reshape(1, c, 1, 1) / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return dx, dgamma, dbeta


# -- activations -----------------------------------------------------------------


def leaky_relu_forward(x, slope: float = 0.2):
    y = np.where(x >= 0, x, slope * x)
    return y, (x >= 0, slope)


def leaky_relu_backward(dy, cache):
    positive, slope = cache
    return np.where(positive, dy, slope * dy)


def relu_forward(x):
    y = np.maximum(x, 0)
    return y, x >= 0


def relu_backward(dy, cache):
    return np.where(cache, dy, 0)


def tanh_forward(x):
    y = np.tanh(x)
    return y, y


def tanh_backward(dy, cache):
    return dy * (1.0 - cache * cache)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    """log(1 + exp(x)), overflow-safe."""
    return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))
