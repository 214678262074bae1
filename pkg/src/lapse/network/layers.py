"""Shared differentiable primitives, each as a forward/backward pair.

Every forward returns (output, cache); the matching backward consumes the
upstream gradient and the cache.  All math is float64 so finite-difference
checks resolve cleanly.
"""
from __future__ import annotations

import numpy as np

LN_EPS = 1e-5
PROB_EPS = 1e-7


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x (..., d_in) @ w (d_in, d_out) + b."""
    return x @ w + b, (x, w)


def dense_backward(dout: np.ndarray, cache):
    x, w = cache
    dx = dout @ w.T
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    dw = x2.T @ d2
    db = d2.sum(axis=0)
    return dx, dw, db


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), (x > 0.0)


def relu_backward(dout: np.ndarray, cache):
    return dout * cache


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=axis, keepdims=True)


def softmax_backward(dout: np.ndarray, probs: np.ndarray, axis: int = -1):
    inner = (dout * probs).sum(axis=axis, keepdims=True)
    return probs * (dout - inner)


def layer_norm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    """Normalize over the last axis, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, gamma)


def layer_norm_backward(dout: np.ndarray, cache):
    xhat, inv, gamma = cache
    n = xhat.shape[-1]
    dgamma = (dout * xhat).reshape(-1, n).sum(axis=0)
    dbeta = dout.reshape(-1, n).sum(axis=0)
    dxhat = dout * gamma
    dx = (
        inv
        / n
        * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
    )
    return dx, dgamma, dbeta


def dropout_forward(x: np.ndarray, rate: float, rng: np.random.Generator | None):
    """Inverted dropout; rng None means inference (identity)."""
    if rng is None or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout: np.ndarray, mask):
    if mask is None:
        return dout
    return dout * mask


def max_pool_time_forward(x: np.ndarray):
    """Max over axis 1 of (batch, time, features); ties go to the first step."""
    arg = x.argmax(axis=1)
    out = np.take_along_axis(x, arg[:, np.newaxis, :], axis=1)[:, 0, :]
    return out, (arg, x.shape)


def max_pool_time_backward(dout: np.ndarray, cache):
    arg, shape = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    np.put_along_axis(dx, arg[:, np.newaxis, :], dout[:, np.newaxis, :], axis=1)
    return dx


def mean_pool_time_forward(x: np.ndarray):
    return x.mean(axis=1), x.shape


def mean_pool_time_backward(dout: np.ndarray, shape):
    return np.broadcast_to(dout[:, np.newaxis, :] / shape[1], shape).copy()


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch.

    labels are integer class ids.  Probabilities are clamped away from 0 and
    1 before the log purely as a numerical guard; the returned gradient is
    the exact unclamped (p - y) / batch, which matches whenever no
    probability sits at the clamp bound.
    """
    probs = softmax(logits, axis=-1)
    batch = logits.shape[0]
    clamped = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    loss = -np.log(clamped[np.arange(batch), labels]).mean()
    dlogits = probs.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits /= batch
    return loss, probs, dlogits
