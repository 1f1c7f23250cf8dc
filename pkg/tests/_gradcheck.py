"""Finite-difference gradient checks, one randomized trial per call.

Each ``check_*`` draws shapes and values from ``rng``, contracts the layer
output with a random upstream tensor ``R`` to get a scalar, and compares
the analytic gradients against central differences (step 1e-5, float64).
It returns the worst relative error over every input and parameter.
"""

from __future__ import annotations

import numpy as np

from heartnet.nn import functional as F

STEP = 1e-5


def numeric_grad(f, x):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + STEP
        fp = f()
        x[i] = old - STEP
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * STEP)
    return g


def rel_error(a, n, floor=1e-8):
    scale = max(np.abs(a).max(initial=0), np.abs(n).max(initial=0), floor)
    return float(np.abs(a - n).max(initial=0) / scale)


def _worst(pairs):
    return max(rel_error(a, n) for a, n in pairs)


def check_conv1d(rng):
    C_in, C_out, L, N = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 9), rng.integers(1, 4)
    k = int(rng.choice([1, 3, 5]))
    x = rng.standard_normal((C_in, L, N))
    W = rng.standard_normal((C_out, C_in, k))
    b = rng.standard_normal(C_out)
    R = rng.standard_normal((C_out, L, N))
    f = lambda: float(np.sum(R * F.conv1d_forward(x, W, b)[0]))
    _, cache = F.conv1d_forward(x, W, b)
    dx, dW, db = F.conv1d_backward(R, cache)
    return _worst([(dx, numeric_grad(f, x)), (dW, numeric_grad(f, W)), (db, numeric_grad(f, b))])


def check_batchnorm(rng):
    # With only two values per channel xhat is +-1 whatever x is, so the true
    # input gradient is O(eps) and the check would only measure round-off.
    C, L, N = rng.integers(1, 4), rng.integers(2, 6), rng.integers(2, 5)
    train = bool(rng.integers(0, 2))
    x = rng.standard_normal((C, L, N)) * rng.uniform(0.5, 3) + rng.uniform(-2, 2)
    gamma = rng.uniform(0.5, 2, C)
    beta = rng.standard_normal(C)
    rm0, rv0 = rng.standard_normal(C), rng.uniform(0.5, 2, C)
    R = rng.standard_normal((C, L, N))

    def run():
        return F.batchnorm_forward(x, gamma, beta, rm0.copy(), rv0.copy(), train=train)

    f = lambda: float(np.sum(R * run()[0]))
    _, cache = run()
    dx, dg, dbeta = F.batchnorm_backward(R, cache)
    return _worst([(dx, numeric_grad(f, x)), (dg, numeric_grad(f, gamma)), (dbeta, numeric_grad(f, beta))])


def check_relu(rng):
    shape = tuple(rng.integers(1, 5, size=3))
    # Keep every entry at least 0.1 from the kink.
    x = rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.1, 2.0, size=shape)
    R = rng.standard_normal(shape)
    f = lambda: float(np.sum(R * F.relu_forward(x)[0]))
    _, mask = F.relu_forward(x)
    return rel_error(F.relu_backward(R, mask), numeric_grad(f, x))


def check_maxpool(rng):
    C, L, N = rng.integers(1, 4), rng.integers(2, 10), rng.integers(1, 4)
    # Distinct values spaced 0.1 apart: no ties within a finite-difference step.
    x = rng.permutation(C * L * N).reshape(C, L, N) * 0.1
    y, cache = F.maxpool1d_forward(x)
    R = rng.standard_normal(y.shape)
    f = lambda: float(np.sum(R * F.maxpool1d_forward(x)[0]))
    return rel_error(F.maxpool1d_backward(R, cache), numeric_grad(f, x))


def check_depthcat(rng):
    L, N = rng.integers(1, 6), rng.integers(1, 4)
    xs = [rng.standard_normal((int(c), L, N)) for c in rng.integers(1, 4, size=rng.integers(1, 5))]
    y, offsets = F.depthcat_forward(xs)
    R = rng.standard_normal(y.shape)
    f = lambda: float(np.sum(R * F.depthcat_forward(xs)[0]))
    grads = F.depthcat_backward(R, offsets)
    return _worst([(g, numeric_grad(f, x)) for g, x in zip(grads, xs)])


def check_lstm(rng):
    T, N, D, H = rng.integers(1, 5), rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 4)
    x = rng.standard_normal((T, N, D))
    Wx = rng.standard_normal((D, 4 * H)) * 0.5
    Wh = rng.standard_normal((H, 4 * H)) * 0.5
    b = rng.standard_normal(4 * H) * 0.5
    R = rng.standard_normal((T, N, H))
    f = lambda: float(np.sum(R * F.lstm_forward(x, Wx, Wh, b)[0]))
    _, cache = F.lstm_forward(x, Wx, Wh, b)
    dx, dWx, dWh, db = F.lstm_backward(R, cache)
    return _worst([(dx, numeric_grad(f, x)), (dWx, numeric_grad(f, Wx)),
                   (dWh, numeric_grad(f, Wh)), (db, numeric_grad(f, b))])


def check_dense(rng):
    N, D, K = rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 6)
    x = rng.standard_normal((N, D))
    W = rng.standard_normal((D, K))
    b = rng.standard_normal(K)
    R = rng.standard_normal((N, K))
    f = lambda: float(np.sum(R * F.dense_forward(x, W, b)[0]))
    dx, dW, db = F.dense_backward(R, x, W)
    return _worst([(dx, numeric_grad(f, x)), (dW, numeric_grad(f, W)), (db, numeric_grad(f, b))])


def check_softmax_ce(rng):
    """Fused softmax + weighted cross-entropy, and the unfused chain."""
    B, C = rng.integers(1, 6), rng.integers(2, 7)
    z = rng.standard_normal((B, C)) * 2
    y = rng.integers(0, C, size=B)
    w = rng.uniform(0.2, 5.0, size=C)

    def loss():
        return F.weighted_cross_entropy(F.softmax_forward(z)[0], y, w)[0]

    num = numeric_grad(loss, z)
    p, p_cache = F.softmax_forward(z)
    fused = F.softmax_cross_entropy_grad(p, y, w)
    _, ce_cache = F.weighted_cross_entropy(p, y, w)
    chained = F.softmax_backward(F.weighted_cross_entropy_backward(ce_cache), p_cache)
    return max(rel_error(fused, num), rel_error(chained, num))


def check_dropout_off(rng):
    """Dropout in infer mode is the identity; its gradient passes through."""
    shape = tuple(rng.integers(1, 5, size=2))
    x = rng.standard_normal(shape)
    R = rng.standard_normal(shape)
    rate = float(rng.uniform(0, 0.9))
    f = lambda: float(np.sum(R * F.dropout_forward(x, rate, train=False)[0]))
    _, mask = F.dropout_forward(x, rate, train=False)
    return rel_error(F.dropout_backward(R, mask), numeric_grad(f, x))


CHECKS = {
    "conv1d": check_conv1d,
    "batchnorm": check_batchnorm,
    "relu": check_relu,
    "maxpool": check_maxpool,
    "depthcat": check_depthcat,
    "lstm": check_lstm,
    "dense": check_dense,
    "softmax_ce": check_softmax_ce,
    "dropout_off": check_dropout_off,
}
