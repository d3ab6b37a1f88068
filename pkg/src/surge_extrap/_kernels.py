"""GRU time-loop kernels.

Arrays are time-major: ``x`` is (T, B, I), hidden sequences are (T, B, H).
Input projections are computed outside the loop, so the kernels only walk
the recurrence.

Two implementations share one signature: a numba ``@njit`` version with
explicit loops and a numpy version built on BLAS matmuls. The loop kernels
win at small hidden widths, BLAS wins above them (see
benchmarks/bench_kernels.py), so by default the choice is made per call
from the hidden width.

``SURGE_EXTRAP_JIT``: ``0`` always numpy, ``1`` (default) choose by width,
``2`` always numba. Without numba installed, numpy is used regardless.
"""

import os

import numpy as np

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False


def _sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def gru_forward_numpy(xz, xr, xh, Uz, Ur, Uh):
    """Run the recurrence given precomputed input projections.

    ``xz``, ``xr``, ``xh`` are x_t @ W + b for each gate, shape (T, B, H).
    Returns (hs, zs, rs, hhs), each (T, B, H).
    """
    T, B, H = xz.shape
    hs = np.empty((T, B, H))
    zs = np.empty((T, B, H))
    rs = np.empty((T, B, H))
    hhs = np.empty((T, B, H))
    h = np.zeros((B, H))
    for t in range(T):
        z = _sigmoid(xz[t] + h @ Uz)
        r = _sigmoid(xr[t] + h @ Ur)
        hh = np.tanh(xh[t] + (r * h) @ Uh)
        h = (1.0 - z) * h + z * hh
        hs[t] = h
        zs[t] = z
        rs[t] = r
        hhs[t] = hh
    return hs, zs, rs, hhs


def gru_backward_numpy(dhs, hs, zs, rs, hhs, Uz, Ur, Uh):
    """Backpropagate through time.

    Returns the gate pre-activation gradients (daz, dar, dah), each (T, B, H),
    and the recurrent weight gradients (dUz, dUr, dUh).
    """
    T, B, H = hs.shape
    daz = np.empty((T, B, H))
    dar = np.empty((T, B, H))
    dah = np.empty((T, B, H))
    dUz = np.zeros((H, H))
    dUr = np.zeros((H, H))
    dUh = np.zeros((H, H))
    dh_next = np.zeros((B, H))
    zero = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        h_prev = hs[t - 1] if t > 0 else zero
        z, r, hh = zs[t], rs[t], hhs[t]
        dh = dhs[t] + dh_next
        a_h = dh * z * (1.0 - hh * hh)
        a_z = dh * (hh - h_prev) * z * (1.0 - z)
        rh_grad = a_h @ Uh.T
        a_r = rh_grad * h_prev * r * (1.0 - r)
        dUh += (r * h_prev).T @ a_h
        dUz += h_prev.T @ a_z
        dUr += h_prev.T @ a_r
        dh_next = dh * (1.0 - z) + rh_grad * r + a_z @ Uz.T + a_r @ Ur.T
        daz[t] = a_z
        dar[t] = a_r
        dah[t] = a_h
    return daz, dar, dah, dUz, dUr, dUh


if HAS_NUMBA:

    @numba.njit(cache=True, fastmath=True)
    def gru_forward_numba(xz, xr, xh, Uz, Ur, Uh):
        T, B, H = xz.shape
        hs = np.empty((T, B, H))
        zs = np.empty((T, B, H))
        rs = np.empty((T, B, H))
        hhs = np.empty((T, B, H))
        h = np.zeros(H)
        rh = np.empty(H)
        az = np.empty(H)
        ar = np.empty(H)
        ah = np.empty(H)
        for b in range(B):
            h[:] = 0.0
            for t in range(T):
                az[:] = xz[t, b]
                ar[:] = xr[t, b]
                ah[:] = xh[t, b]
                for k in range(H):
                    hk = h[k]
                    for j in range(H):
                        az[j] += hk * Uz[k, j]
                        ar[j] += hk * Ur[k, j]
                for k in range(H):
                    r = 1.0 / (1.0 + np.exp(-ar[k]))
                    rs[t, b, k] = r
                    rh[k] = r * h[k]
                for k in range(H):
                    rhk = rh[k]
                    for j in range(H):
                        ah[j] += rhk * Uh[k, j]
                for j in range(H):
                    z = 1.0 / (1.0 + np.exp(-az[j]))
                    hh = np.tanh(ah[j])
                    zs[t, b, j] = z
                    hhs[t, b, j] = hh
                    h[j] = (1.0 - z) * h[j] + z * hh
                    hs[t, b, j] = h[j]
        return hs, zs, rs, hhs

    @numba.njit(cache=True, fastmath=True)
    def gru_backward_numba(dhs, hs, zs, rs, hhs, Uz, Ur, Uh):
        T, B, H = hs.shape
        daz = np.empty((T, B, H))
        dar = np.empty((T, B, H))
        dah = np.empty((T, B, H))
        dUz = np.zeros((H, H))
        dUr = np.zeros((H, H))
        dUh = np.zeros((H, H))
        dh_next = np.zeros(H)
        h_prev = np.empty(H)
        rh_grad = np.empty(H)
        dh = np.empty(H)
        for b in range(B):
            dh_next[:] = 0.0
            for t in range(T - 1, -1, -1):
                for k in range(H):
                    h_prev[k] = hs[t - 1, b, k] if t > 0 else 0.0
                    dh[k] = dhs[t, b, k] + dh_next[k]
                for j in range(H):
                    z = zs[t, b, j]
                    hh = hhs[t, b, j]
                    dah[t, b, j] = dh[j] * z * (1.0 - hh * hh)
                    daz[t, b, j] = dh[j] * (hh - h_prev[j]) * z * (1.0 - z)
                for k in range(H):
                    acc = 0.0
                    for j in range(H):
                        acc += dah[t, b, j] * Uh[k, j]
                    rh_grad[k] = acc
                for k in range(H):
                    r = rs[t, b, k]
                    dar[t, b, k] = rh_grad[k] * h_prev[k] * r * (1.0 - r)
                for k in range(H):
                    rhk = rs[t, b, k] * h_prev[k]
                    hk = h_prev[k]
                    for j in range(H):
                        dUh[k, j] += rhk * dah[t, b, j]
                        dUz[k, j] += hk * daz[t, b, j]
                        dUr[k, j] += hk * dar[t, b, j]
                for k in range(H):
                    acc = dh[k] * (1.0 - zs[t, b, k]) + rh_grad[k] * rs[t, b, k]
                    for j in range(H):
                        acc += daz[t, b, j] * Uz[k, j] + dar[t, b, j] * Ur[k, j]
                    dh_next[k] = acc
        return daz, dar, dah, dUz, dUr, dUh


# widest hidden size for which the loop kernel beats BLAS on one core
FORWARD_JIT_MAX_HIDDEN = 48
BACKWARD_JIT_MAX_HIDDEN = 96


def jit_mode():
    if not HAS_NUMBA:
        return 0
    try:
        return int(os.environ.get("SURGE_EXTRAP_JIT", "1"))
    except ValueError:
        return 1


def _use_jit(hidden, limit):
    mode = jit_mode()
    return mode >= 2 or (mode == 1 and hidden <= limit)


def gru_forward(xz, xr, xh, Uz, Ur, Uh):
    if _use_jit(Uz.shape[0], FORWARD_JIT_MAX_HIDDEN):
        c = np.ascontiguousarray
        return gru_forward_numba(c(xz), c(xr), c(xh), c(Uz), c(Ur), c(Uh))
    return gru_forward_numpy(xz, xr, xh, Uz, Ur, Uh)


def gru_backward(dhs, hs, zs, rs, hhs, Uz, Ur, Uh):
    if _use_jit(Uz.shape[0], BACKWARD_JIT_MAX_HIDDEN):
        c = np.ascontiguousarray
        return gru_backward_numba(c(dhs), c(hs), c(zs), c(rs), c(hhs), c(Uz), c(Ur), c(Uh))
    return gru_backward_numpy(dhs, hs, zs, rs, hhs, Uz, Ur, Uh)
