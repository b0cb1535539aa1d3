"""Independent reference computations shared by the unit and acceptance tests."""
import math

import numpy as np

from dkae.autoencoder import batch_loss, gradients, init_glorot

FD_STEP = 1e-6
REL_FLOOR = 1e-12
FD_NOISE = 1e-9


def finite_difference_grads(net, x, p, lam, h=FD_STEP):
    """Central differences of batch_loss for every parameter array of ``net``."""
    params = net.params()
    out = []
    for i, a in enumerate(params):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus = [b.copy() for b in params]
            minus = [b.copy() for b in params]
            plus[i][idx] += h
            minus[i][idx] -= h
            g[idx] = (batch_loss(net.with_params(plus), x, p, lam)[0]
                      - batch_loss(net.with_params(minus), x, p, lam)[0]) / (2 * h)
        out.append(g)
    return out


def gradient_check(net, x, p, lam):
    """Compare analytic and central-difference gradients.

    Returns ``(relative, entry_violations)``: the relative error of the whole
    gradient vector, ||g - g_fd|| / max(||g||, ||g_fd||), and the number of
    entries violating |g - g_fd| <= 1e-5 * max(|g|, |g_fd|) + FD_NOISE.
    FD_NOISE covers the round-off of central differences (about eps * |L| / h).
    """
    analytic = np.concatenate([a.ravel() for lp in gradients(net, x, p, lam) for a in lp.arrays()])
    numeric = np.concatenate([g.ravel() for g in finite_difference_grads(net, x, p, lam)])
    diff = np.abs(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), REL_FLOOR)
    bad = int(np.sum(diff > 1e-5 * np.maximum(np.abs(analytic), np.abs(numeric)) + FD_NOISE))
    return float(np.linalg.norm(analytic - numeric) / scale), bad


def random_grad_case(rng):
    """Random small net (up to 3 layers, sizes up to 12), batch k <= 6, PSD prior."""
    depth = int(rng.integers(1, 4))
    dims = [int(v) for v in rng.integers(1, 13, size=depth + 1)]
    k = int(rng.integers(2, 7))
    net = init_glorot(dims, rng)
    # non-zero biases so every gradient path is exercised
    net = net.with_params([a if a.ndim == 2 else rng.normal(0, 0.5, a.shape) for a in net.params()])
    x = rng.random((k, dims[0]))
    f = rng.random((k, 3))
    return net, x, f @ f.T


def sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def scalar_eq8(layers, x, p, lam):
    """Plain-Python evaluation of the joint batch objective (lists of lists only)."""
    k, d = len(x), len(x[0])

    def dense(vec, w, b, transpose):
        rows = len(w[0]) if transpose else len(w)
        cols = len(w) if transpose else len(w[0])
        return [sigmoid(sum((w[c][r] if transpose else w[r][c]) * vec[c] for c in range(cols)) + b[r])
                for r in range(rows)]

    codes, recon = [], 0.0
    for xi in x:
        h = xi
        for w, be, _ in layers:
            h = dense(h, w, be, False)
        codes.append(h)
        y = h
        for w, _, bd in reversed(layers):
            y = dense(y, w, bd, True)
        recon += sum((a - b) ** 2 for a, b in zip(xi, y))
    c = [[sum(a * b for a, b in zip(codes[i], codes[j])) for j in range(k)] for i in range(k)]
    nc = math.sqrt(sum(v * v for row in c for v in row))
    npn = math.sqrt(sum(v * v for row in p for v in row))
    code = math.sqrt(sum((c[i][j] / nc - p[i][j] / npn) ** 2 for i in range(k) for j in range(k)))
    return (1 - lam) * recon / (k * d) + lam * code
