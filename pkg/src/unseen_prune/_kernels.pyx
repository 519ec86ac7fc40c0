# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled mini-batch SGD kernels.

Mirrors ``_pykernels`` function for function. Parameters and momentum
buffers are updated in place; the sample order for an epoch is supplied by
the caller so both backends consume identical randomness.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, tanh, isfinite

cnp.import_array()

ctypedef cnp.int64_t idx_t


cdef double _softmax_row(const double[::1] z, double[::1] p, Py_ssize_t c,
                         idx_t label, int* hit) noexcept nogil:
    # fills p with softmax(z) and returns -log p[label]
    cdef Py_ssize_t j, best = 0
    cdef double zmax = z[0], s = 0.0, lse
    for j in range(1, c):
        if z[j] > zmax:
            zmax = z[j]
            best = j
    for j in range(c):
        s += exp(z[j] - zmax)
    lse = zmax + log(s)
    for j in range(c):
        p[j] = exp(z[j] - lse)
    hit[0] = 1 if best == label else 0
    return lse - z[label]


cdef double _softmax_accum(const double[:, ::1] W, const double[::1] b,
                           const double[:, ::1] X, const idx_t[::1] y,
                           const idx_t[::1] rows, Py_ssize_t start, Py_ssize_t stop,
                           double[:, ::1] gW, double[::1] gb,
                           double[::1] z, double[::1] p, long* correct) noexcept nogil:
    cdef Py_ssize_t d = W.shape[0], c = W.shape[1]
    cdef Py_ssize_t r, i, k, j
    cdef double loss = 0.0, xk, dz
    cdef int hit
    for k in range(d):
        for j in range(c):
            gW[k, j] = 0.0
    for j in range(c):
        gb[j] = 0.0
    for r in range(start, stop):
        i = rows[r]
        for j in range(c):
            z[j] = b[j]
        for k in range(d):
            xk = X[i, k]
            for j in range(c):
                z[j] += xk * W[k, j]
        loss += _softmax_row(z, p, c, y[i], &hit)
        correct[0] += hit
        p[y[i]] -= 1.0
        for j in range(c):
            gb[j] += p[j]
        for k in range(d):
            xk = X[i, k]
            for j in range(c):
                gW[k, j] += xk * p[j]
    return loss


cdef double _mlp_accum(const double[:, ::1] W1, const double[::1] b1,
                       const double[:, ::1] W2, const double[::1] b2,
                       const double[:, ::1] X, const idx_t[::1] y,
                       const idx_t[::1] rows, Py_ssize_t start, Py_ssize_t stop,
                       double[:, ::1] gW1, double[::1] gb1,
                       double[:, ::1] gW2, double[::1] gb2,
                       double[::1] h, double[::1] dh, double[::1] z, double[::1] p,
                       long* correct) noexcept nogil:
    cdef Py_ssize_t d = W1.shape[0], H = W1.shape[1], c = W2.shape[1]
    cdef Py_ssize_t r, i, k, j, u
    cdef double loss = 0.0, xk, hu, acc
    cdef int hit
    for k in range(d):
        for u in range(H):
            gW1[k, u] = 0.0
    for u in range(H):
        gb1[u] = 0.0
        for j in range(c):
            gW2[u, j] = 0.0
    for j in range(c):
        gb2[j] = 0.0
    for r in range(start, stop):
        i = rows[r]
        for u in range(H):
            h[u] = b1[u]
        for k in range(d):
            xk = X[i, k]
            for u in range(H):
                h[u] += xk * W1[k, u]
        for u in range(H):
            h[u] = tanh(h[u])
        for j in range(c):
            z[j] = b2[j]
        for u in range(H):
            hu = h[u]
            for j in range(c):
                z[j] += hu * W2[u, j]
        loss += _softmax_row(z, p, c, y[i], &hit)
        correct[0] += hit
        p[y[i]] -= 1.0
        for j in range(c):
            gb2[j] += p[j]
        for u in range(H):
            hu = h[u]
            acc = 0.0
            for j in range(c):
                gW2[u, j] += hu * p[j]
                acc += W2[u, j] * p[j]
            dh[u] = acc * (1.0 - hu * hu)
            gb1[u] += dh[u]
        for k in range(d):
            xk = X[i, k]
            for u in range(H):
                gW1[k, u] += xk * dh[u]
    return loss


cdef void _step2(double[:, ::1] P, double[:, ::1] V, double[:, ::1] G,
                 double scale, double lr, double mom) noexcept nogil:
    cdef Py_ssize_t a, b
    for a in range(P.shape[0]):
        for b in range(P.shape[1]):
            V[a, b] = mom * V[a, b] + G[a, b] * scale
            P[a, b] -= lr * V[a, b]


cdef void _step1(double[::1] P, double[::1] V, double[::1] G,
                 double scale, double lr, double mom) noexcept nogil:
    cdef Py_ssize_t a
    for a in range(P.shape[0]):
        V[a] = mom * V[a] + G[a] * scale
        P[a] -= lr * V[a]


cdef _check_shapes(Py_ssize_t xd, Py_ssize_t wd, Py_ssize_t ny, Py_ssize_t nx):
    if xd != wd:
        raise ValueError(f"feature width {xd} does not match weights ({wd})")
    if ny != nx:
        raise ValueError(f"{ny} labels for {nx} rows")


def softmax_grad(const double[:, ::1] W, const double[::1] b,
                 const double[:, ::1] X, const idx_t[::1] y):
    """Mean loss, correct count and mean gradients (gW, gb) over a batch."""
    cdef Py_ssize_t n = X.shape[0], d = W.shape[0], c = W.shape[1]
    _check_shapes(X.shape[1], d, y.shape[0], n)
    gW_arr = np.zeros((d, c))
    gb_arr = np.zeros(c)
    cdef double[:, ::1] gW = gW_arr
    cdef double[::1] gb = gb_arr
    cdef double[::1] z = np.empty(c)
    cdef double[::1] p = np.empty(c)
    cdef idx_t[::1] rows = np.arange(n, dtype=np.int64)
    cdef long correct = 0
    cdef double loss
    with nogil:
        loss = _softmax_accum(W, b, X, y, rows, 0, n, gW, gb, z, p, &correct)
    gW_arr /= n
    gb_arr /= n
    return loss / n, correct, [gW_arr, gb_arr]


def mlp_grad(const double[:, ::1] W1, const double[::1] b1,
             const double[:, ::1] W2, const double[::1] b2,
             const double[:, ::1] X, const idx_t[::1] y):
    """Mean loss, correct count and mean gradients (gW1, gb1, gW2, gb2)."""
    cdef Py_ssize_t n = X.shape[0], d = W1.shape[0], H = W1.shape[1], c = W2.shape[1]
    _check_shapes(X.shape[1], d, y.shape[0], n)
    grads = [np.zeros((d, H)), np.zeros(H), np.zeros((H, c)), np.zeros(c)]
    cdef double[:, ::1] gW1 = grads[0]
    cdef double[::1] gb1 = grads[1]
    cdef double[:, ::1] gW2 = grads[2]
    cdef double[::1] gb2 = grads[3]
    cdef double[::1] h = np.empty(H)
    cdef double[::1] dh = np.empty(H)
    cdef double[::1] z = np.empty(c)
    cdef double[::1] p = np.empty(c)
    cdef idx_t[::1] rows = np.arange(n, dtype=np.int64)
    cdef long correct = 0
    cdef double loss
    with nogil:
        loss = _mlp_accum(W1, b1, W2, b2, X, y, rows, 0, n,
                          gW1, gb1, gW2, gb2, h, dh, z, p, &correct)
    for g in grads:
        g /= n
    return loss / n, correct, grads


def softmax_epoch(double[:, ::1] W, double[::1] b,
                  double[:, ::1] vW, double[::1] vb,
                  const double[:, ::1] X, const idx_t[::1] y,
                  const idx_t[::1] order, Py_ssize_t batch_size,
                  double lr, double momentum):
    """One pass over ``order`` in mini-batches.

    Returns (loss_sum, correct, bad_step); bad_step is -1 unless a batch
    produced a non-finite loss, in which case the epoch stops there.
    """
    cdef Py_ssize_t n = order.shape[0], d = W.shape[0], c = W.shape[1]
    cdef Py_ssize_t start = 0, stop, step = 0
    cdef double total = 0.0, bl
    cdef long correct = 0
    cdef Py_ssize_t bad = -1
    cdef double[:, ::1] gW = np.zeros((d, c))
    cdef double[::1] gb = np.zeros(c)
    cdef double[::1] z = np.empty(c)
    cdef double[::1] p = np.empty(c)
    with nogil:
        while start < n:
            stop = start + batch_size
            if stop > n:
                stop = n
            bl = _softmax_accum(W, b, X, y, order, start, stop, gW, gb, z, p, &correct)
            if not isfinite(bl):
                bad = step
                break
            total += bl
            _step2(W, vW, gW, 1.0 / (stop - start), lr, momentum)
            _step1(b, vb, gb, 1.0 / (stop - start), lr, momentum)
            start = stop
            step += 1
    return total, correct, bad


def mlp_epoch(double[:, ::1] W1, double[::1] b1, double[:, ::1] W2, double[::1] b2,
              double[:, ::1] vW1, double[::1] vb1, double[:, ::1] vW2, double[::1] vb2,
              const double[:, ::1] X, const idx_t[::1] y,
              const idx_t[::1] order, Py_ssize_t batch_size,
              double lr, double momentum):
    """MLP counterpart of :func:`softmax_epoch`."""
    cdef Py_ssize_t n = order.shape[0], d = W1.shape[0], H = W1.shape[1], c = W2.shape[1]
    cdef Py_ssize_t start = 0, stop, step = 0
    cdef double total = 0.0, bl, scale
    cdef long correct = 0
    cdef Py_ssize_t bad = -1
    cdef double[:, ::1] gW1 = np.zeros((d, H))
    cdef double[::1] gb1 = np.zeros(H)
    cdef double[:, ::1] gW2 = np.zeros((H, c))
    cdef double[::1] gb2 = np.zeros(c)
    cdef double[::1] h = np.empty(H)
    cdef double[::1] dh = np.empty(H)
    cdef double[::1] z = np.empty(c)
    cdef double[::1] p = np.empty(c)
    with nogil:
        while start < n:
            stop = start + batch_size
            if stop > n:
                stop = n
            bl = _mlp_accum(W1, b1, W2, b2, X, y, order, start, stop,
                            gW1, gb1, gW2, gb2, h, dh, z, p, &correct)
            if not isfinite(bl):
                bad = step
                break
            total += bl
            scale = 1.0 / (stop - start)
            _step2(W1, vW1, gW1, scale, lr, momentum)
            _step1(b1, vb1, gb1, scale, lr, momentum)
            _step2(W2, vW2, gW2, scale, lr, momentum)
            _step1(b2, vb2, gb2, scale, lr, momentum)
            start = stop
            step += 1
    return total, correct, bad
