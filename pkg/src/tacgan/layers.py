"""Array layer primitives with explicit forward/backward pairs.

Everything operates on NHWC float arrays and is a pure function of its
inputs, which keeps training runs reproducible to the bit. Convolutions use
"same" padding (TensorFlow convention: ``out = ceil(in / stride)``, surplus
padding on the bottom/right). Transposed convolutions are implemented as the
exact adjoint of the matching strided convolution, so a kernel stored in
down-convolution orientation ``(k, k, C_big, C_small)`` serves both
directions and the two stay numerically consistent.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
LEAKY_SLOPE = 0.2


def same_pad_amount(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Return (out_size, pad_before, pad_after) for a same-padded convolution."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    before = total // 2
    return out, before, total - before


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, stride: int):
    """Strided same-padded convolution; ``w`` is (k, k, C_in, C_out)."""
    bsz, h, wd, cin = x.shape
    k = w.shape[0]
    if w.shape[2] != cin:
        raise ShapeError(f"conv: input has {cin} channels, kernel expects {w.shape[2]}")
    h_out, pt, pb = same_pad_amount(h, k, stride)
    w_out, pl, pr = same_pad_amount(wd, k, stride)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    cols = win.reshape(bsz * h_out * w_out, cin * k * k)
    wr = w.transpose(2, 0, 1, 3).reshape(cin * k * k, w.shape[3])
    y = cols @ wr
    y = y.reshape(bsz, h_out, w_out, w.shape[3])
    if b is not None:
        y = y + b
    return y


def conv2d_backward_input(dy: np.ndarray, w: np.ndarray, x_shape, stride: int):
    """Adjoint of conv2d_forward with respect to its input."""
    bsz, h, wd, cin = x_shape
    k = w.shape[0]
    h_out, pt, pb = same_pad_amount(h, k, stride)
    w_out, pl, pr = same_pad_amount(wd, k, stride)
    dxp = np.zeros((bsz, h + pt + pb, wd + pl + pr, cin), dtype=dy.dtype)
    dy_flat = dy.reshape(-1, w.shape[3])
    for u in range(k):
        for v in range(k):
            contrib = (dy_flat @ w[u, v].T).reshape(bsz, h_out, w_out, cin)
            dxp[:, u : u + stride * h_out : stride, v : v + stride * w_out : stride] += contrib
    return dxp[:, pt : pt + h, pl : pl + wd]


def conv2d_backward_params(dy: np.ndarray, x: np.ndarray, kernel: int, stride: int):
    """Adjoint of conv2d_forward with respect to kernel and bias."""
    bsz, h, wd, cin = x.shape
    cout = dy.shape[3]
    h_out, pt, pb = same_pad_amount(h, kernel, stride)
    w_out, pl, pr = same_pad_amount(wd, kernel, stride)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    dw = np.empty((kernel, kernel, cin, cout), dtype=dy.dtype)
    dy_flat = dy.reshape(-1, cout)
    for u in range(kernel):
        for v in range(kernel):
            xs = xp[:, u : u + stride * h_out : stride, v : v + stride * w_out : stride]
            dw[u, v] = xs.reshape(-1, cin).T @ dy_flat
    db = dy.sum(axis=(0, 1, 2))
    return dw, db


def deconv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, stride: int):
    """Transposed convolution doubling spatial size for stride 2.

    ``w`` is stored in down-convolution orientation (k, k, C_out, C_in):
    the forward pass is the adjoint of the strided convolution that would
    map the *output* back onto the input.
    """
    bsz, h, wd, cin = x.shape
    if w.shape[3] != cin:
        raise ShapeError(
            f"deconv: input has {cin} channels, kernel expects {w.shape[3]}"
        )
    cout = w.shape[2]
    y = conv2d_backward_input(x, w, (bsz, h * stride, wd * stride, cout), stride)
    if b is not None:
        y = y + b
    return y


def deconv_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int):
    """Gradients of deconv_forward: returns (dx, dw, db)."""
    dx = conv2d_forward(dy, w, None, stride)
    dw, _ = conv2d_backward_params(x, dy, w.shape[0], stride)
    db = dy.sum(axis=(0, 1, 2))
    return dx, dw, db


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense: input width {x.shape[1]} != weight rows {w.shape[0]}")
    return x @ w + b


def dense_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    eps: float = BN_EPS,
):
    """Per-channel batch normalization over all leading axes.

    Training mode normalizes with (biased) batch statistics and reports them
    in the cache so the owner of the step can fold them into the running
    averages; eval mode normalizes with the running statistics.
    """
    axes = tuple(range(x.ndim - 1))
    if train:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    y = gamma * xhat + beta
    cache = (xhat, inv_std, gamma, axes, mean, var, train)
    return y, cache


def batchnorm_backward(dy: np.ndarray, cache):
    xhat, inv_std, gamma, axes, _, _, train = cache
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    if train:
        m_dy = dy.mean(axis=axes)
        m_dyx = (dy * xhat).mean(axis=axes)
        dx = gamma * inv_std * (dy - m_dy - xhat * m_dyx)
    else:
        dx = dy * gamma * inv_std
    return dx, dgamma, dbeta


def merge_running_stat(running: np.ndarray, batch: np.ndarray, momentum: float = BN_MOMENTUM):
    return momentum * running + (1.0 - momentum) * batch


def relu(x):
    return np.maximum(x, 0)


def relu_backward(dy, x):
    return dy * (x > 0)


def leaky_relu(x, slope: float = LEAKY_SLOPE):
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(dy, x, slope: float = LEAKY_SLOPE):
    return dy * np.where(x > 0, 1.0, slope).astype(dy.dtype)


def tanh(x):
    return np.tanh(x)


def tanh_backward(dy, y):
    return dy * (1.0 - y * y)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dy, y):
    return dy * y * (1.0 - y)


def replicate_spatial(v: np.ndarray, m: int) -> np.ndarray:
    """Tile vectors across an m x m grid: out[..., i, j, k] = v[..., k]."""
    if m < 1:
        raise ShapeError(f"replication grid must be >= 1, got {m}")
    v = np.asarray(v)
    if v.ndim == 1:
        return np.broadcast_to(v, (m, m, v.shape[0])).copy()
    if v.ndim == 2:
        return np.broadcast_to(v[:, None, None, :], (v.shape[0], m, m, v.shape[1])).copy()
    raise ShapeError(f"replicate_spatial expects a vector or batch, got shape {v.shape}")


def replicate_spatial_backward(dy: np.ndarray) -> np.ndarray:
    return dy.sum(axis=(1, 2)) if dy.ndim == 4 else dy.sum(axis=(0, 1))


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
