"""Pure numpy training kernels.

Same signatures and semantics as the compiled ``_kernels`` module. Used when
the extension is not built, or when ``UNSEEN_PRUNE_BACKEND=python``.
"""

import numpy as np


def _softmax_forward(Z, y):
    zmax = Z.max(axis=1, keepdims=True)
    lse = zmax + np.log(np.exp(Z - zmax).sum(axis=1, keepdims=True))
    P = np.exp(Z - lse)
    rows = np.arange(len(y))
    loss = float((lse[:, 0] - Z[rows, y]).sum())
    correct = int((Z.argmax(axis=1) == y).sum())
    P[rows, y] -= 1.0
    return loss, correct, P


def _softmax_sums(W, b, X, y):
    loss, correct, dZ = _softmax_forward(X @ W + b, y)
    return loss, correct, [X.T @ dZ, dZ.sum(axis=0)]


def _mlp_sums(W1, b1, W2, b2, X, y):
    Hid = np.tanh(X @ W1 + b1)
    loss, correct, dZ = _softmax_forward(Hid @ W2 + b2, y)
    dH = (dZ @ W2.T) * (1.0 - Hid * Hid)
    return loss, correct, [X.T @ dH, dH.sum(axis=0), Hid.T @ dZ, dZ.sum(axis=0)]


def softmax_grad(W, b, X, y):
    n = X.shape[0]
    loss, correct, grads = _softmax_sums(W, b, X, y)
    return loss / n, correct, [g / n for g in grads]


def mlp_grad(W1, b1, W2, b2, X, y):
    n = X.shape[0]
    loss, correct, grads = _mlp_sums(W1, b1, W2, b2, X, y)
    return loss / n, correct, [g / n for g in grads]


def _epoch(sums, params, velocity, X, y, order, batch_size, lr, momentum):
    total, correct = 0.0, 0
    n = len(order)
    for step, start in enumerate(range(0, n, batch_size)):
        rows = order[start:start + batch_size]
        bl, hit, grads = sums(*params, X[rows], y[rows])
        correct += hit
        if not np.isfinite(bl):
            return total, correct, step
        total += bl
        scale = 1.0 / len(rows)
        for p, v, g in zip(params, velocity, grads):
            v *= momentum
            v += g * scale
            p -= lr * v
    return total, correct, -1


def softmax_epoch(W, b, vW, vb, X, y, order, batch_size, lr, momentum):
    return _epoch(_softmax_sums, [W, b], [vW, vb], X, y, order, batch_size, lr, momentum)


def mlp_epoch(W1, b1, W2, b2, vW1, vb1, vW2, vb2, X, y, order, batch_size, lr, momentum):
    return _epoch(_mlp_sums, [W1, b1, W2, b2], [vW1, vb1, vW2, vb2],
                  X, y, order, batch_size, lr, momentum)
