"""Pure numpy CRF dynamic programs, used when the compiled kernels are absent."""
import numpy as np


def _lse(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def forward_backward(e, trans, start, end):
    n, k = e.shape
    alpha = np.empty((n, k))
    beta = np.empty((n, k))
    alpha[0] = start + e[0]
    for t in range(1, n):
        alpha[t] = _lse(alpha[t - 1][:, None] + trans, axis=0) + e[t]
    beta[n - 1] = end
    for t in range(n - 2, -1, -1):
        beta[t] = _lse(trans + e[t + 1][None, :] + beta[t + 1][None, :], axis=1)
    log_z = float(_lse(alpha[n - 1] + end, axis=0))
    return alpha, beta, log_z


def transition_expectations(e, trans, alpha, beta, log_z):
    n, k = e.shape
    out = np.zeros((k, k))
    for t in range(1, n):
        out += np.exp(alpha[t - 1][:, None] + trans + e[t][None, :] + beta[t][None, :] - log_z)
    return out


def viterbi(e, trans, start, end):
    n, k = e.shape
    delta = start + e[0]
    back = np.zeros((n, k), dtype=np.int64)
    for t in range(1, n):
        cand = delta[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(k)] + e[t]
    final = delta + end
    path = np.empty(n, dtype=np.int64)
    path[-1] = int(np.argmax(final))
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(final[path[-1]])
