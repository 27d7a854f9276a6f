"""Forward/backward primitives for the convolutional encoder stack.

All functions take and return float64 arrays without a batch axis; each
forward returns (output, cache) and the matching backward consumes the cache.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _same_pad(kernel: int) -> tuple[int, int]:
    left = (kernel - 1) // 2
    return left, kernel - 1 - left


def conv_time(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Temporal convolution applied identically to every input channel.

    x (C, T), w (F, K), b (F,) -> y (F, C, T), 'same' padding.
    """
    kernel = w.shape[1]
    left, right = _same_pad(kernel)
    xp = np.pad(x, ((0, 0), (left, right)))
    windows = sliding_window_view(xp, kernel, axis=1)  # (C, T, K), a view
    y = np.einsum("fk,ctk->fct", w, windows, optimize=True) + b[:, None, None]
    return y, (xp, windows, w, x.shape, left)


def conv_time_backward(dy: np.ndarray, cache):
    xp, windows, w, x_shape, left = cache
    _, time = x_shape
    dw = np.einsum("fct,ctk->fk", dy, windows, optimize=True)
    db = dy.sum(axis=(1, 2))
    dxp = np.zeros_like(xp)
    for k in range(w.shape[1]):
        dxp[:, k : k + time] += np.tensordot(w[:, k], dy, axes=([0], [0]))
    dx = dxp[:, left : left + time]
    return dx, dw, db


def depthwise_channels(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Per-filter spatial collapse: x (F, C, T), w (F, M, C), b (F, M) -> (F*M, T)."""
    y = np.einsum("fmc,fct->fmt", w, x, optimize=True) + b[:, :, None]
    f, m, t = y.shape
    return y.reshape(f * m, t), (x, w, (f, m, t))


def depthwise_channels_backward(dy: np.ndarray, cache):
    x, w, (f, m, t) = cache
    dy3 = dy.reshape(f, m, t)
    dx = np.einsum("fmc,fmt->fct", w, dy3, optimize=True)
    dw = np.einsum("fmt,fct->fmc", dy3, x, optimize=True)
    db = dy3.sum(axis=2)
    return dx, dw, db


def batchnorm_infer(x: np.ndarray, gamma, beta, mean, var, eps: float = 1e-5):
    """Inference-mode normalization per leading channel with running stats."""
    extra = (1,) * (x.ndim - 1)
    sigma = np.sqrt(var + eps).reshape(-1, *extra)
    xhat = (x - mean.reshape(-1, *extra)) / sigma
    y = gamma.reshape(-1, *extra) * xhat + beta.reshape(-1, *extra)
    return y, (xhat, sigma, gamma)


def batchnorm_infer_backward(dy: np.ndarray, cache):
    xhat, sigma, gamma = cache
    axes = tuple(range(1, dy.ndim))
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dx = dy * gamma.reshape(-1, *((1,) * (dy.ndim - 1))) / sigma
    return dx, dgamma, dbeta


def relu(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, mask: np.ndarray):
    return dy * mask


def avgpool_time(x: np.ndarray, pool: int):
    """Non-overlapping temporal mean pooling; a trailing partial window is dropped."""
    channels, time = x.shape
    kept = (time // pool) * pool
    y = x[:, :kept].reshape(channels, time // pool, pool).mean(axis=2)
    return y, (x.shape, pool, kept)


def avgpool_time_backward(dy: np.ndarray, cache):
    x_shape, pool, kept = cache
    dx = np.zeros(x_shape)
    dx[:, :kept] = np.repeat(dy, pool, axis=1) / pool
    return dx


def depthwise_time(x: np.ndarray, w: np.ndarray):
    """Per-channel temporal convolution, 'same' padding: x (G, T), w (G, K)."""
    kernel = w.shape[1]
    left, right = _same_pad(kernel)
    xp = np.pad(x, ((0, 0), (left, right)))
    windows = sliding_window_view(xp, kernel, axis=1)  # (G, T, K)
    y = np.einsum("gk,gtk->gt", w, windows, optimize=True)
    return y, (xp, windows, w, x.shape, left)


def depthwise_time_backward(dy: np.ndarray, cache):
    xp, windows, w, x_shape, left = cache
    _, time = x_shape
    dw = np.einsum("gt,gtk->gk", dy, windows, optimize=True)
    dxp = np.zeros_like(xp)
    for k in range(w.shape[1]):
        dxp[:, k : k + time] += w[:, k : k + 1] * dy
    dx = dxp[:, left : left + time]
    return dx, dw


def pointwise(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """1x1 channel mixing: x (G, T), w (O, G), b (O,) -> (O, T)."""
    return w @ x + b[:, None], (x, w)


def pointwise_backward(dy: np.ndarray, cache):
    x, w = cache
    dx = w.T @ dy
    dw = dy @ x.T
    db = dy.sum(axis=1)
    return dx, dw, db


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Affine map on a flat vector: x (n,), w (D, n), b (D,) -> (D,)."""
    return w @ x + b, (x, w)


def dense_backward(dy: np.ndarray, cache):
    x, w = cache
    dx = w.T @ dy
    dw = np.outer(dy, x)
    db = dy.copy()
    return dx, dw, db


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
