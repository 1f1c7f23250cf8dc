"""Forward/backward kernels for every layer type.

Feature maps use the (channels, length, batch) layout; dense layers and the
classifier head use (batch, features). Each ``*_forward`` returns the output
plus a cache consumed by the matching ``*_backward``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    pass


# -- convolution ---------------------------------------------------------------

def _im2col(x, k):
    C, L, N = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (0, 0)))
    cols = np.empty((C, k, L, N), dtype=x.dtype)
    for j in range(k):
        cols[:, j] = xp[:, j:j + L]
    return cols.reshape(C * k, L * N)


def conv1d_forward(x, W, b):
    """Stride-1 cross-correlation with zero 'same' padding.

    x: (C_in, L, N), W: (C_out, C_in, k) with k odd, b: (C_out,).
    """
    if x.ndim != 3 or W.ndim != 3:
        raise ShapeError(f"conv1d expects x (C_in, L, N) and W (C_out, C_in, k); got {x.shape}, {W.shape}")
    C_out, C_in, k = W.shape
    if x.shape[0] != C_in:
        raise ShapeError(f"conv1d input channels: expected {C_in}, got {x.shape[0]} (x shape {x.shape})")
    if k % 2 == 0:
        raise ShapeError(f"conv1d kernel size must be odd, got {k}")
    if b.shape != (C_out,):
        raise ShapeError(f"conv1d bias: expected ({C_out},), got {b.shape}")
    _, L, N = x.shape
    cols = _im2col(x, k)
    y = (W.reshape(C_out, C_in * k) @ cols).reshape(C_out, L, N)
    y += b[:, None, None]
    return y, (cols, W, x.shape)


def conv1d_backward(dy, cache):
    if cache is None:
        raise RuntimeError("conv1d_backward called before conv1d_forward")
    cols, W, (C_in, L, N) = cache
    C_out, _, k = W.shape
    dy2 = dy.reshape(C_out, L * N)
    dW = (dy2 @ cols.T).reshape(W.shape)
    db = dy.sum(axis=(1, 2))
    dcols = (W.reshape(C_out, C_in * k).T @ dy2).reshape(C_in, k, L, N)
    p = k // 2
    dxp = np.zeros((C_in, L + 2 * p, N), dtype=dy.dtype)
    for j in range(k):
        dxp[:, j:j + L] += dcols[:, j]
    return dxp[:, p:p + L], dW, db


# -- batch normalization ------------------------------------------------------------

def batchnorm_forward(x, gamma, beta, running_mean, running_var, *, train: bool,
                      momentum: float = 0.1, eps: float = 1e-5):
    """Per-channel normalization over (length, batch).

    In train mode ``running_mean``/``running_var`` are updated in place with
    ``r <- (1 - momentum) r + momentum * batch_stat`` (unbiased variance).
    """
    C = x.shape[0]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"batchnorm params must be ({C},), got {gamma.shape}, {beta.shape}")
    if train:
        if x.shape[-1] < 2:
            raise ValueError("batchnorm in train mode needs a batch of at least 2")
        axes = tuple(range(1, x.ndim))
        m = x.size // C
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * m / (m - 1)
    else:
        mean, var = running_mean, running_var
    shape = (C,) + (1,) * (x.ndim - 1)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    y = gamma.reshape(shape) * xhat + beta.reshape(shape)
    return y, (xhat, inv_std, gamma, train)


def batchnorm_backward(dy, cache):
    xhat, inv_std, gamma, train = cache
    C = dy.shape[0]
    axes = tuple(range(1, dy.ndim))
    shape = (C,) + (1,) * (dy.ndim - 1)
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma.reshape(shape)
    if not train:
        return dxhat * inv_std.reshape(shape), dgamma, dbeta
    m = dy.size // C
    dx = (inv_std.reshape(shape) / m) * (
        m * dxhat
        - dxhat.sum(axis=axes).reshape(shape)
        - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape)
    )
    return dx, dgamma, dbeta


# -- pointwise / pooling / joins ------------------------------------------------------

def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


def maxpool1d_forward(x):
    """Window 2, stride 2 along the length axis; odd tails are dropped."""
    C, L, N = x.shape
    L2 = L // 2
    if L2 == 0:
        raise ShapeError(f"maxpool needs length >= 2, got {L}")
    xr = x[:, :2 * L2].reshape(C, L2, 2, N)
    # argmax keeps the first index on ties.
    arg = xr.argmax(axis=2)
    y = np.take_along_axis(xr, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return y, (arg, x.shape)


def maxpool1d_backward(dy, cache):
    arg, (C, L, N) = cache
    L2 = dy.shape[1]
    dx = np.zeros((C, L, N), dtype=dy.dtype)
    view = dx[:, :2 * L2].reshape(C, L2, 2, N)
    np.put_along_axis(view, arg[:, :, None, :], dy[:, :, None, :], axis=2)
    return dx


def depthcat_forward(xs):
    """Concatenate (C_i, L, N) maps along channels."""
    if not xs:
        raise ShapeError("depthcat needs at least one input")
    L, N = xs[0].shape[1:]
    for i, x in enumerate(xs):
        if x.shape[1:] != (L, N):
            raise ShapeError(f"depthcat branch {i} has (L, N) = {x.shape[1:]}, expected {(L, N)}")
    offsets = np.cumsum([0] + [x.shape[0] for x in xs])
    return np.concatenate(xs, axis=0), offsets


def depthcat_backward(dy, offsets):
    return [dy[a:b] for a, b in zip(offsets[:-1], offsets[1:])]


# -- dense / softmax / loss ----------------------------------------------------------------

def dense_forward(x, W, b):
    if x.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeError(f"dense expects x (N, {W.shape[0]}), got {x.shape}")
    return x @ W + b, x


def dense_backward(dy, x, W):
    return dy @ W.T, x.T @ dy, dy.sum(axis=0)


def softmax_forward(z):
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("softmax received non-finite logits")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    return p, p


def softmax_backward(dp, p):
    return p * (dp - (dp * p).sum(axis=1, keepdims=True))


class ClampCounter:
    """Counts probabilities clamped in the log of the cross-entropy."""

    floor = 1e-30

    def __init__(self):
        self.count = 0


clamp_counter = ClampCounter()


def weighted_cross_entropy(p, targets, weights=None):
    """``-(1/B) sum_b w[y_b] log p_b[y_b]``; returns (loss, cache)."""
    p = np.asarray(p)
    targets = np.asarray(targets, dtype=np.int64)
    B, C = p.shape
    w = np.ones(C, dtype=p.dtype) if weights is None else np.asarray(weights, dtype=p.dtype)
    if np.any(w <= 0):
        raise ValueError("class weights must be positive")
    py = p[np.arange(B), targets]
    small = py < ClampCounter.floor
    if small.any():
        clamp_counter.count += int(small.sum())
        py = np.maximum(py, ClampCounter.floor)
    loss = -(w[targets] * np.log(py)).sum() / B
    return float(loss), (py, targets, w, p.shape)


def weighted_cross_entropy_backward(cache):
    py, targets, w, (B, C) = cache
    dp = np.zeros((B, C), dtype=py.dtype)
    dp[np.arange(B), targets] = -w[targets] / (B * py)
    return dp


def softmax_cross_entropy_grad(p, targets, weights=None):
    """Gradient of the weighted loss w.r.t. the logits: ``w_y (p - onehot) / B``."""
    B, C = p.shape
    targets = np.asarray(targets, dtype=np.int64)
    w = np.ones(C, dtype=p.dtype) if weights is None else np.asarray(weights, dtype=p.dtype)
    g = p.copy()
    g[np.arange(B), targets] -= 1
    return g * (w[targets] / B)[:, None]


# -- dropout -------------------------------------------------------------------

def dropout_forward(x, rate: float, *, train: bool, rng=None):
    """Inverted dropout; identity in infer mode or when ``rate == 0``."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / (1 - rate)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


# -- LSTM -------------------------------------------------------------------

def sigmoid(x):
    return expit(x)


def lstm_step(x_t, h, c, Wx, Wh, b):
    """One LSTM step. Gate column blocks are ordered (input, forget, cell, output).

    x_t: (N, D), h, c: (N, H), Wx: (D, 4H), Wh: (H, 4H), b: (4H,).
    """
    H = h.shape[1]
    if x_t.shape[1] != Wx.shape[0] or Wx.shape[1] != 4 * H or Wh.shape != (H, 4 * H):
        raise ShapeError(
            f"lstm dims: x {x_t.shape}, h {h.shape}, Wx {Wx.shape}, Wh {Wh.shape}; expected Wx (D, {4 * H}), Wh ({H}, {4 * H})"
        )
    a = x_t @ Wx + h @ Wh + b
    return _lstm_gates(a, c)


def _lstm_gates(a, c):
    H = c.shape[1]
    i = sigmoid(a[:, :H])
    f = sigmoid(a[:, H:2 * H])
    g = np.tanh(a[:, 2 * H:3 * H])
    o = sigmoid(a[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (i, f, g, o, tc)


def lstm_forward(x, Wx, Wh, b, h0=None, c0=None):
    """Run over a (T, N, D) sequence; returns all hidden states (T, N, H)."""
    T, N, D = x.shape
    H = Wh.shape[0]
    if Wx.shape != (D, 4 * H):
        raise ShapeError(f"lstm input dim: Wx {Wx.shape} does not match x feature dim {D}")
    h = np.zeros((N, H), dtype=x.dtype) if h0 is None else h0
    c = np.zeros((N, H), dtype=x.dtype) if c0 is None else c0
    xa = (x.reshape(T * N, D) @ Wx).reshape(T, N, 4 * H) + b
    hs = np.empty((T, N, H), dtype=x.dtype)
    cs = np.empty((T + 1, N, H), dtype=x.dtype)
    gates = np.empty((T, 5, N, H), dtype=x.dtype)
    cs[0] = c
    h_prev = h
    hprevs = np.empty((T, N, H), dtype=x.dtype)
    for t in range(T):
        hprevs[t] = h_prev
        h_prev, c, gt = _lstm_gates(xa[t] + h_prev @ Wh, c)
        hs[t] = h_prev
        cs[t + 1] = c
        gates[t] = gt
    return hs, (x, Wx, Wh, hprevs, cs, gates)


def lstm_backward(dhs, cache):
    """Backprop through time. ``dhs`` is the gradient on every hidden output."""
    x, Wx, Wh, hprevs, cs, gates = cache
    T, N, D = x.shape
    H = Wh.shape[0]
    da = np.empty((T, N, 4 * H), dtype=dhs.dtype)
    dh_next = np.zeros((N, H), dtype=dhs.dtype)
    dc_next = np.zeros((N, H), dtype=dhs.dtype)
    for t in range(T - 1, -1, -1):
        i, f, g, o, tc = gates[t]
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1 - tc * tc)
        da[t, :, :H] = dc * g * i * (1 - i)
        da[t, :, H:2 * H] = dc * cs[t] * f * (1 - f)
        da[t, :, 2 * H:3 * H] = dc * i * (1 - g * g)
        da[t, :, 3 * H:] = dh * tc * o * (1 - o)
        dc_next = dc * f
        dh_next = da[t] @ Wh.T
    da2 = da.reshape(T * N, 4 * H)
    dWx = x.reshape(T * N, D).T @ da2
    dWh = hprevs.reshape(T * N, H).T @ da2
    db = da2.sum(axis=0)
    dx = (da2 @ Wx.T).reshape(T, N, D)
    return dx, dWx, dWh, db
