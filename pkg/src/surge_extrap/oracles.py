"""Slow reference implementations used by the test suite.

Everything here is written with plain loops over Python floats and shares
no code with the vectorized paths it checks.
"""

import math
import random

from .nn.gradcheck import numerical_grad


def oracle_matmul(a, b):
    n, k = len(a), len(a[0])
    m = len(b[0])
    return [[sum(a[i][p] * b[p][j] for p in range(k)) for j in range(m)] for i in range(n)]


def oracle_mse(y, yhat):
    return sum((a - b) ** 2 for a, b in zip(y, yhat)) / len(y)


def oracle_rmse(y, yhat):
    return math.sqrt(oracle_mse(y, yhat))


def oracle_mae(y, yhat):
    return sum(abs(a - b) for a, b in zip(y, yhat)) / len(y)


def oracle_bce(y, yhat, eps=1e-7):
    total = 0.0
    for a, b in zip(y, yhat):
        b = min(max(b, eps), 1.0 - eps)
        total += a * math.log(b) + (1.0 - a) * math.log(1.0 - b)
    return -total / len(y)


def _sig(a):
    return 1.0 / (1.0 + math.exp(-a))


def oracle_gru(x_seq, p):
    """Scalar-loop GRU over one sequence. ``p`` maps Wz..bh to nested lists."""
    n_in = len(p["Wz"])
    H = len(p["bz"])
    h = [0.0] * H
    out = []
    for x in x_seq:
        z = [_sig(sum(x[i] * p["Wz"][i][j] for i in range(n_in)) +
                  sum(h[k] * p["Uz"][k][j] for k in range(H)) + p["bz"][j]) for j in range(H)]
        r = [_sig(sum(x[i] * p["Wr"][i][j] for i in range(n_in)) +
                  sum(h[k] * p["Ur"][k][j] for k in range(H)) + p["br"][j]) for j in range(H)]
        rh = [r[k] * h[k] for k in range(H)]
        c = [math.tanh(sum(x[i] * p["Wh"][i][j] for i in range(n_in)) +
                       sum(rh[k] * p["Uh"][k][j] for k in range(H)) + p["bh"][j]) for j in range(H)]
        h = [(1.0 - z[j]) * h[j] + z[j] * c[j] for j in range(H)]
        out.append(list(h))
    return out


def oracle_moment_loss(real, gen):
    """``real``/``gen`` are lists of samples, each a flat list of features."""
    n = len(real)
    nf = len(real[0])
    total = 0.0
    for f in range(nf):
        r = [s[f] for s in real]
        g = [s[f] for s in gen]
        mr, mg = sum(r) / n, sum(g) / n
        sr = math.sqrt(sum((a - mr) ** 2 for a in r) / n)
        sg = math.sqrt(sum((a - mg) ** 2 for a in g) / n)
        total += abs(mr - mg) + abs(sr - sg)
    return total / nf


def oracle_adam_trace(w0, grad_fn, steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    w, m, v = w0, 0.0, 0.0
    trace = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        trace.append(w)
    return trace


def oracle_quantile(values, q):
    """Linear-interpolation quantile on a sorted copy."""
    s = sorted(values)
    pos = q * (len(s) - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def oracle_outlier_removal(series, iqr_factor=3.0, floor=0.1):
    """Iterated quantile screening; ``series`` maps id -> list of offsets."""
    kept = dict(series)
    removed = set()
    while True:
        pool = [abs(v) for vals in kept.values() for v in vals]
        q1, q3 = oracle_quantile(pool, 0.25), oracle_quantile(pool, 0.75)
        thr = max(q3 + iqr_factor * (q3 - q1), floor)
        drop = {k for k, vals in kept.items() if max(abs(v) for v in vals) > thr}
        if not drop:
            return set(kept), removed
        removed |= drop
        kept = {k: v for k, v in kept.items() if k not in drop}


def _inertia(points, centers):
    return sum(min((p[0] - c[0]) ** 2 + (p[1] - c[1]) ** 2 for c in centers) for p in points)


def oracle_kmeans_restarts(points, k, restarts=100, seed=0, iters=100):
    """Inertia of plain Lloyd runs from random data-point initializations."""
    rnd = random.Random(seed)
    results = []
    for _ in range(restarts):
        centers = [list(points[i]) for i in rnd.sample(range(len(points)), k)]
        for _ in range(iters):
            groups = [[] for _ in range(k)]
            for p in points:
                j = min(range(k), key=lambda c: (p[0] - centers[c][0]) ** 2 + (p[1] - centers[c][1]) ** 2)
                groups[j].append(p)
            for j, g in enumerate(groups):
                if g:
                    centers[j] = [sum(q[0] for q in g) / len(g), sum(q[1] for q in g) / len(g)]
        results.append(_inertia(points, centers))
    return results


def oracle_gradients(loss_fn, params, step=1e-5):
    """Central-difference gradients for every array in ``params``."""
    return {k: numerical_grad(loss_fn, arr, step) for k, arr in params.items()}
