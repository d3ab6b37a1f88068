"""Dense, GRU and bidirectional GRU layers with analytic backward passes.

Every layer exposes ``params`` (name -> array, updated in place by the
optimizer), ``forward(x) -> (out, cache)`` and
``backward(dout, cache) -> (dx, grads)``. Caches are returned instead of
stored so one layer can be applied several times within a single loss.

Batched inputs are (B, T, F). A 2-D input is treated as one sample.
"""

import numpy as np

from .. import _kernels
from ..errors import ShapeError, StateError


def sigmoid(a):
    # split by sign so exp never overflows
    out = np.empty_like(a, dtype=float)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _rng(rng):
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    return rng


def _require_cache(cache):
    if cache is None:
        raise StateError("backward called without a cached forward pass")


class Dense:
    """Affine map over the last axis, optionally followed by a sigmoid."""

    def __init__(self, n_in, n_out, activation="none", rng=None):
        if activation not in ("none", "sigmoid"):
            raise ValueError(f"unknown activation {activation!r}")
        rng = _rng(rng)
        self.n_in = n_in
        self.n_out = n_out
        self.activation = activation
        self.params = {
            "W": glorot_uniform(rng, n_in, n_out),
            "b": np.zeros(n_out),
        }

    @property
    def output_width(self):
        return self.n_out

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"Dense expects last dim {self.n_in}, got {x.shape}")
        a = x @ self.params["W"] + self.params["b"]
        y = sigmoid(a) if self.activation == "sigmoid" else a
        return y, (x, y)

    def backward(self, dout, cache):
        _require_cache(cache)
        x, y = cache
        da = dout * y * (1.0 - y) if self.activation == "sigmoid" else dout
        x2 = x.reshape(-1, self.n_in)
        da2 = da.reshape(-1, self.n_out)
        grads = {"W": x2.T @ da2, "b": da2.sum(axis=0)}
        dx = da @ self.params["W"].T
        return dx, grads


class GRU:
    """Single-direction GRU, zero initial state.

    Gates: z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    candidate = tanh(x Wh + (r * h) Uh + bh), h' = (1 - z) h + z candidate.
    """

    def __init__(self, n_in, hidden, return_mode="sequence", rng=None):
        if return_mode not in ("sequence", "last"):
            raise ValueError(f"unknown return_mode {return_mode!r}")
        rng = _rng(rng)
        self.n_in = n_in
        self.hidden = hidden
        self.return_mode = return_mode
        self.params = {}
        for g in "zrh":
            self.params["W" + g] = glorot_uniform(rng, n_in, hidden)
        for g in "zrh":
            self.params["U" + g] = glorot_uniform(rng, hidden, hidden)
        for g in "zrh":
            self.params["b" + g] = np.zeros(hidden)

    @property
    def output_width(self):
        return self.hidden

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.ndim != 3 or x.shape[-1] != self.n_in:
            raise ShapeError(f"GRU expects (B, T, {self.n_in}), got {x.shape}")
        p = self.params
        xt = np.ascontiguousarray(x.transpose(1, 0, 2))
        xz = xt @ p["Wz"] + p["bz"]
        xr = xt @ p["Wr"] + p["br"]
        xh = xt @ p["Wh"] + p["bh"]
        hs, zs, rs, hhs = _kernels.gru_forward(xz, xr, xh, p["Uz"], p["Ur"], p["Uh"])
        seq = hs.transpose(1, 0, 2)
        out = seq if self.return_mode == "sequence" else seq[:, -1:, :]
        cache = (xt, hs, zs, rs, hhs, single)
        return (out[0] if single else out), cache

    def backward(self, dout, cache):
        _require_cache(cache)
        xt, hs, zs, rs, hhs, single = cache
        T, B, H = hs.shape
        if single:
            dout = dout[None]
        dhs = np.zeros((T, B, H))
        if self.return_mode == "sequence":
            dhs[:] = dout.transpose(1, 0, 2)
        else:
            dhs[-1] = dout[:, 0, :]
        p = self.params
        daz, dar, dah, dUz, dUr, dUh = _kernels.gru_backward(
            dhs, hs, zs, rs, hhs, p["Uz"], p["Ur"], p["Uh"]
        )
        x2 = xt.reshape(-1, self.n_in)
        grads = {"Uz": dUz, "Ur": dUr, "Uh": dUh}
        for g, da in (("z", daz), ("r", dar), ("h", dah)):
            da2 = da.reshape(-1, H)
            grads["W" + g] = x2.T @ da2
            grads["b" + g] = da2.sum(axis=0)
        dxt = daz @ p["Wz"].T + dar @ p["Wr"].T + dah @ p["Wh"].T
        dx = dxt.transpose(1, 0, 2)
        return (dx[0] if single else dx), grads


class BiGRU:
    """Forward and time-reversed GRU pair, outputs concatenated (width 2H).

    ``return_mode="last"`` concatenates the forward state after the final
    step with the backward state after its final step (i.e. at t = 0).
    """

    def __init__(self, n_in, hidden, return_mode="sequence", rng=None):
        if return_mode not in ("sequence", "last"):
            raise ValueError(f"unknown return_mode {return_mode!r}")
        rng = _rng(rng)
        self.n_in = n_in
        self.hidden = hidden
        self.return_mode = return_mode
        self.fwd = GRU(n_in, hidden, "sequence", rng)
        self.bwd = GRU(n_in, hidden, "sequence", rng)
        self.params = {}
        for name, arr in self.fwd.params.items():
            self.params["fwd." + name] = arr
        for name, arr in self.bwd.params.items():
            self.params["bwd." + name] = arr

    @property
    def output_width(self):
        return 2 * self.hidden

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.ndim != 3 or x.shape[-1] != self.n_in:
            raise ShapeError(f"BiGRU expects (B, T, {self.n_in}), got {x.shape}")
        hf, cf = self.fwd.forward(x)
        hb_rev, cb = self.bwd.forward(x[:, ::-1, :])
        if self.return_mode == "sequence":
            out = np.concatenate([hf, hb_rev[:, ::-1, :]], axis=-1)
        else:
            out = np.concatenate([hf[:, -1:, :], hb_rev[:, -1:, :]], axis=-1)
        cache = (cf, cb, x.shape, single)
        return (out[0] if single else out), cache

    def backward(self, dout, cache):
        _require_cache(cache)
        cf, cb, shape, single = cache
        if single:
            dout = dout[None]
        B, T, _ = shape
        H = self.hidden
        if self.return_mode == "sequence":
            dhf = dout[..., :H]
            dhb_rev = dout[:, ::-1, H:]
        else:
            dhf = np.zeros((B, T, H))
            dhb_rev = np.zeros((B, T, H))
            dhf[:, -1] = dout[:, 0, :H]
            dhb_rev[:, -1] = dout[:, 0, H:]
        dxf, gf = self.fwd.backward(np.ascontiguousarray(dhf), cf)
        dxb_rev, gb = self.bwd.backward(np.ascontiguousarray(dhb_rev), cb)
        dx = dxf + dxb_rev[:, ::-1, :]
        grads = {"fwd." + k: v for k, v in gf.items()}
        grads.update({"bwd." + k: v for k, v in gb.items()})
        return (dx[0] if single else dx), grads
