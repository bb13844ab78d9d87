"""Forward/backward primitives on float64 arrays."""
import numpy as np

LN_EPS = 1e-12
_GELU_C = np.sqrt(2.0 / np.pi)


def layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def layer_norm_backward(dy, cache, g):
    xhat, inv = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def gelu(x):
    # tanh approximation
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3)))


def gelu_grad(x):
    u = _GELU_C * (x + 0.044715 * x ** 3)
    th = np.tanh(u)
    du = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du


def softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    ex = np.exp(x - m)
    return ex / ex.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def linear_backward(dy, x, w, grads, wname, bname=None):
    """Accumulate ``dW``/``db`` for ``y = x @ w + b`` and return ``dx``."""
    d_in, d_out = w.shape
    grads[wname] += x.reshape(-1, d_in).T @ dy.reshape(-1, d_out)
    if bname is not None:
        grads[bname] += dy.reshape(-1, d_out).sum(axis=0)
    return dy @ w.T


def attention(q, k, v, key_mask):
    """Scaled dot-product attention over the last two axes.

    ``key_mask`` broadcasts against the score matrix; masked keys receive
    ``-inf`` and hence exactly zero weight. Returns ``(mixed, weights)``.
    """
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(q.shape[-1])
    mask = np.asarray(key_mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("every query needs at least one unmasked key")
    scores = np.where(mask, scores, -np.inf)
    w = softmax(scores, axis=-1)
    return w @ v, w


def attention_backward(dout, q, k, v, w, w_used):
    """Gradients of ``attention`` given the (possibly dropped-out) weights."""
    dw_used = dout @ np.swapaxes(v, -1, -2)
    dv = np.swapaxes(w_used, -1, -2) @ dout
    return dw_used, dv


def softmax_scores_backward(dw, w, scale):
    ds = w * (dw - (dw * w).sum(axis=-1, keepdims=True))
    return ds * scale
