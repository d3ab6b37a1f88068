"""The five adversarial time-series components and their wiring.

Each component is an optional static dense net on the coordinate side,
a GRU stack on the temporal side, and a dense head. The static output is
repeated for every row and appended to the temporal input columns before
the GRU stack.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .nn import BiGRU, Dense, GRU

COMPONENTS = ("embedder", "recovery", "generator", "supervisor", "discriminator")
STATIC_OUT = {"embedder": 4, "generator": 4, "recovery": 2}
COORD_DIM = 2
CLAMP_TOL = 1e-9


@dataclass(frozen=True)
class NetSpec:
    component: str
    n_gru_layers: int
    hidden: int
    out_cols: int
    has_static_net: bool
    static_out: int = 0
    has_lift: bool = False

    def __post_init__(self):
        if self.component not in COMPONENTS:
            raise ValueError(f"unknown component {self.component!r}")
        if self.n_gru_layers < 1 or self.hidden < 1 or self.out_cols < 1:
            raise ValueError(f"{self.component}: layer counts and widths must be positive")
        if self.component == "discriminator" and (self.n_gru_layers != 2 or self.has_static_net):
            raise ValueError("discriminator has exactly two Bi-GRU layers and no static net")
        if self.has_static_net and self.static_out != STATIC_OUT.get(self.component):
            raise ValueError(f"{self.component}: static net width must be {STATIC_OUT.get(self.component)}")


def component_specs(n_layers, hidden, cols, supervisor_space="latent"):
    """NetSpecs for all five components of one configuration."""
    if n_layers < 2:
        raise ValueError("need at least 2 layers (the supervisor has one fewer)")
    if supervisor_space not in ("latent", "data"):
        raise ValueError(f"unknown supervisor_space {supervisor_space!r}")
    return {
        "embedder": NetSpec("embedder", n_layers, hidden, cols, True, 4),
        "recovery": NetSpec("recovery", n_layers, hidden, cols, True, 2),
        "generator": NetSpec("generator", n_layers, hidden, cols, True, 4),
        "supervisor": NetSpec("supervisor", n_layers - 1, hidden, cols, False, 0,
                              has_lift=supervisor_space == "latent"),
        "discriminator": NetSpec("discriminator", 2, hidden, 1, False, 0),
    }


class Component:
    """Static net + GRU stack + head (+ optional linear lift) for one role.

    ``forward`` returns a dict with ``static`` (static net output or None),
    ``latent`` (last GRU output), ``head`` and, when present, ``lift``.
    """

    def __init__(self, spec, temporal_in, static_in=0, rng=None):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.spec = spec
        self.temporal_in = temporal_in
        self.static_in = static_in
        self.static = None
        width = temporal_in
        if spec.has_static_net:
            self.static = Dense(static_in, spec.static_out, "sigmoid", rng)
            width += spec.static_out
        self.temporal = []
        if spec.component == "discriminator":
            self.temporal.append(BiGRU(width, spec.hidden, "sequence", rng))
            self.temporal.append(BiGRU(2 * spec.hidden, spec.hidden, "last", rng))
        else:
            for i in range(spec.n_gru_layers):
                self.temporal.append(GRU(width if i == 0 else spec.hidden, spec.hidden, "sequence", rng))
        self.head = Dense(self.temporal[-1].output_width, spec.out_cols, "sigmoid", rng)
        self.lift = Dense(spec.out_cols, spec.hidden, "none", rng) if spec.has_lift else None

    def layers(self):
        out = []
        if self.static is not None:
            out.append(("static", self.static))
        out += [(f"gru{i}", layer) for i, layer in enumerate(self.temporal)]
        out.append(("head", self.head))
        if self.lift is not None:
            out.append(("lift", self.lift))
        return out

    @property
    def params(self):
        return {f"{name}.{k}": v for name, layer in self.layers() for k, v in layer.params.items()}

    def forward(self, temporal, static=None):
        temporal = np.asarray(temporal, dtype=float)
        if temporal.ndim != 3 or temporal.shape[-1] != self.temporal_in:
            raise ShapeError(f"{self.spec.component}: temporal input must be (B, T, {self.temporal_in}), got {temporal.shape}")
        cache = {}
        out = {"static": None}
        x = temporal
        if self.static is not None:
            static = np.asarray(static, dtype=float)
            if static.shape != (temporal.shape[0], self.static_in):
                raise ShapeError(f"{self.spec.component}: static input must be (B, {self.static_in})")
            s, cache["static"] = self.static.forward(static)
            out["static"] = s
            rep = np.broadcast_to(s[:, None, :], (temporal.shape[0], temporal.shape[1], s.shape[1]))
            x = np.concatenate([temporal, rep], axis=-1)
        caches = []
        for layer in self.temporal:
            x, c = layer.forward(x)
            caches.append(c)
        cache["temporal"] = caches
        out["latent"] = x
        out["head"], cache["head"] = self.head.forward(x)
        if self.lift is not None:
            out["lift"], cache["lift"] = self.lift.forward(out["head"])
        return out, cache

    def backward(self, cache, d_static=None, d_latent=None, d_head=None, d_lift=None):
        """Gradients w.r.t. parameters and both inputs.

        Each ``d_*`` is the upstream gradient for the matching forward
        output (None means that output does not reach the loss).

        Returns (d_temporal_in, d_static_in, grads).
        """
        grads = {}

        def put(prefix, g):
            for k, v in g.items():
                grads[f"{prefix}.{k}"] = v

        if d_lift is not None:
            if self.lift is None:
                raise ShapeError(f"{self.spec.component} has no lift layer")
            dh, g = self.lift.backward(d_lift, cache["lift"])
            put("lift", g)
            d_head = dh if d_head is None else d_head + dh
        elif self.lift is not None:
            put("lift", {k: np.zeros_like(v) for k, v in self.lift.params.items()})
        if d_head is not None:
            dx, g = self.head.backward(d_head, cache["head"])
            put("head", g)
            d_latent = dx if d_latent is None else d_latent + dx
        else:
            put("head", {k: np.zeros_like(v) for k, v in self.head.params.items()})
        if d_latent is None:
            raise ValueError("no upstream gradient reaches the temporal stack")
        dx = d_latent
        for i in range(len(self.temporal) - 1, -1, -1):
            dx, g = self.temporal[i].backward(dx, cache["temporal"][i])
            put(f"gru{i}", g)
        d_static_in = None
        if self.static is not None:
            d_s = dx[..., self.temporal_in:].sum(axis=1)
            if d_static is not None:
                d_s = d_s + d_static
            d_static_in, g = self.static.backward(d_s, cache["static"])
            put("static", g)
            dx = dx[..., : self.temporal_in]
        return dx, d_static_in, grads


def _as_batch(arr, ndim):
    arr = np.asarray(arr, dtype=float)
    single = arr.ndim == ndim - 1
    return (arr[None] if single else arr), single


def _check_coords(coords):
    if (coords < -CLAMP_TOL).any() or (coords > 1.0 + CLAMP_TOL).any():
        raise ShapeError("normalized coordinates must lie in [0, 1]")
    return np.clip(coords, 0.0, 1.0)


class TimeGAN:
    """Embedder, recovery, generator, supervisor and discriminator for one
    (rows, cols) sample shape."""

    def __init__(self, rows, cols, n_layers=5, hidden=256, supervisor_space="latent", seed=0):
        self.rows = rows
        self.cols = cols
        self.n_layers = n_layers
        self.hidden = hidden
        self.supervisor_space = supervisor_space
        self.specs = component_specs(n_layers, hidden, cols, supervisor_space)
        rng = np.random.default_rng(seed)
        H = hidden
        self.embedder = Component(self.specs["embedder"], cols, COORD_DIM, rng)
        self.recovery = Component(self.specs["recovery"], H, STATIC_OUT["embedder"], rng)
        self.generator = Component(self.specs["generator"], cols, COORD_DIM, rng)
        self.supervisor = Component(self.specs["supervisor"], H, 0, rng)
        self.discriminator = Component(self.specs["discriminator"], H, 0, rng)

    @property
    def noise_dim(self):
        return self.cols

    def components(self):
        return {name: getattr(self, name) for name in COMPONENTS}

    def _check_rows(self, x):
        if x.shape[1] != self.rows:
            raise ShapeError(f"expected {self.rows} rows, got {x.shape[1]}")

    def fuse_and_forward(self, name, coords, temporal_in):
        """Head output of one component for a single sample or a batch."""
        comp = getattr(self, name)
        x, single = _as_batch(temporal_in, 3)
        self._check_rows(x)
        static = None
        if comp.static is not None:
            c, _ = _as_batch(coords, 2)
            static = _check_coords(c) if name != "recovery" else c
        out, _ = comp.forward(x, static)
        return out["head"][0] if single else out["head"]

    def embed(self, coords, offsets):
        """(static latent (4,), temporal latent rows x hidden)."""
        c, single = _as_batch(coords, 2)
        x, _ = _as_batch(offsets, 3)
        self._check_rows(x)
        out, _ = self.embedder.forward(x, _check_coords(c))
        s, h = out["static"], out["latent"]
        return (s[0], h[0]) if single else (s, h)

    def recover(self, static_latent, temporal_latent):
        """(coords_hat (2,), offsets_hat rows x cols), both in (0, 1)."""
        s, single = _as_batch(static_latent, 2)
        h, _ = _as_batch(temporal_latent, 3)
        out, _ = self.recovery.forward(h, s)
        c, x = out["static"], out["head"]
        return (c[0], x[0]) if single else (c, x)

    def generate(self, coords, noise):
        """(generator static latent, generated latent rows x hidden)."""
        c, single = _as_batch(coords, 2)
        z, _ = _as_batch(noise, 3)
        self._check_rows(z)
        out, _ = self.generator.forward(z, _check_coords(c))
        s, h = out["static"], out["latent"]
        return (s[0], h[0]) if single else (s, h)

    def supervise(self, latent):
        """Next-step prediction: a latent (latent space) or an offset
        matrix (data space)."""
        h, single = _as_batch(latent, 3)
        out, _ = self.supervisor.forward(h)
        y = out["lift"] if self.supervisor.lift is not None else out["head"]
        return y[0] if single else y

    def discriminate(self, latent):
        """Probability that each latent sequence is real, shape (B,) or scalar."""
        h, single = _as_batch(latent, 3)
        out, _ = self.discriminator.forward(h)
        p = out["head"][:, 0, 0]
        return float(p[0]) if single else p

    def synthesize(self, coords, noise):
        """Generated offset matrices in normalized units."""
        c, single = _as_batch(coords, 2)
        z, _ = _as_batch(noise, 3)
        s_g, e_hat = self.generate(c, z)
        h = self.supervise(e_hat) if self.supervisor_space == "latent" else e_hat
        _, x_hat = self.recover(s_g, h)
        return x_hat[0] if single else x_hat
