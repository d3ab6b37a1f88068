"""Three-phase training: autoencoder, supervisor, then joint adversarial."""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import PhaseOrderError, TrainingDivergedError
from .model import TimeGAN
from .nn import Adam, bce, bce_grad, mse, mse_grad
from .preprocess import CoordScaler, MinMaxScaler, build_samples, default_rows, make_batches

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
EMBEDDER_SUP_WEIGHT = 0.1


@dataclass
class TrainConfig:
    n_layers: int = 4
    hidden: int = 256
    epochs: int = 3000
    ae_epochs: int | None = None
    sup_epochs: int | None = None
    batch_size: int = 10
    lr: float = 1e-3
    lambda_sup: float = 10.0
    lambda_moment: float = 10.0
    disc_threshold: float = 0.15
    gen_steps_per_disc_check: int = 2
    seed: int = 0
    supervisor_space: str = "latent"
    rows: int | None = None
    fit_on_train: bool = False
    truncate: bool = False

    def __post_init__(self):
        for name in ("n_layers", "hidden", "batch_size", "gen_steps_per_disc_check"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.supervisor_space not in ("latent", "data"):
            raise ValueError("supervisor_space must be 'latent' or 'data'")

    @property
    def phase1_epochs(self):
        return self.epochs // 2 if self.ae_epochs is None else self.ae_epochs

    @property
    def phase2_epochs(self):
        return self.epochs // 2 if self.sup_epochs is None else self.sup_epochs

    def to_dict(self):
        return asdict(self)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def _coerce(text, typ):
    text = text.strip()
    if text.lower() in ("none", ""):
        return None
    if "bool" in str(typ):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if "int" in str(typ):
        return int(text)
    if "float" in str(typ):
        return float(text)
    return text


def read_config_file(path):
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = _coerce(value, types[key])
    return out


def moment_loss(real, gen):
    """Mean over features of |mean diff| + |std diff|, statistics over the batch axis."""
    real = np.asarray(real, dtype=float)
    gen = np.asarray(gen, dtype=float)
    if real.shape != gen.shape:
        raise ValueError(f"shape mismatch: {real.shape} vs {gen.shape}")
    dm = real.mean(axis=0) - gen.mean(axis=0)
    ds = real.std(axis=0) - gen.std(axis=0)
    return float(np.mean(np.abs(dm) + np.abs(ds)))


def moment_loss_grad(real, gen):
    """d moment_loss / d gen."""
    real = np.asarray(real, dtype=float)
    gen = np.asarray(gen, dtype=float)
    n = gen.shape[0]
    nfeat = gen[0].size
    mu_g = gen.mean(axis=0)
    sd_g = gen.std(axis=0)
    dm = real.mean(axis=0) - mu_g
    ds = real.std(axis=0) - sd_g
    g_mean = -np.sign(dm) / n
    safe = np.where(sd_g > 0, sd_g, 1.0)
    dsd = np.where(sd_g > 0, (gen - mu_g) / (n * safe), 0.0)
    return (g_mean + (-np.sign(ds)) * dsd) / nfeat


def _prefixed(name, grads):
    return {f"{name}.{k}": v for k, v in grads.items()}


def _params(model, names):
    out = {}
    for name in names:
        out.update(_prefixed(name, getattr(model, name).params))
    return out


def _check(value, what):
    if not math.isfinite(value):
        raise TrainingDivergedError(f"{what} became non-finite")
    if value > DIVERGENCE_LIMIT:
        raise TrainingDivergedError(f"{what} exceeded {DIVERGENCE_LIMIT:g}: {value:g}")
    return value


# Loss/gradient kernels. Each returns (loss_value, grads) with grads keyed
# "<component>.<layer>.<param>".

def reconstruction_loss(model, coords, data):
    """Temporal plus static reconstruction MSE through embedder and recovery."""
    E, R = model.embedder, model.recovery
    eo, ec = E.forward(data, coords)
    ro, rc = R.forward(eo["latent"], eo["static"])
    loss = mse(data, ro["head"]) + mse(coords, ro["static"])
    dH, ds, gR = R.backward(rc, d_static=mse_grad(coords, ro["static"]),
                            d_head=mse_grad(data, ro["head"]))
    _, _, gE = E.backward(ec, d_static=ds, d_latent=dH)
    grads = _prefixed("embedder", gE)
    grads.update(_prefixed("recovery", gR))
    return loss, grads


def supervised_loss(model, latent, data=None):
    """Next-step supervised MSE on a real latent sequence.

    Latent space: supervisor(latent)[t] predicts latent[t+1].
    Data space: supervisor(latent)[t] predicts data[t+1].
    Returns (loss, supervisor grads, d loss / d latent).
    """
    S = model.supervisor
    so, sc = S.forward(latent)
    if S.lift is not None:
        target, pred = latent[:, 1:], so["lift"][:, :-1]
    else:
        target, pred = data[:, 1:], so["head"][:, :-1]
    loss = mse(target, pred)
    d_pred = np.zeros((latent.shape[0], latent.shape[1], pred.shape[-1]))
    d_pred[:, :-1] = mse_grad(target, pred)
    if S.lift is not None:
        d_lat, _, gS = S.backward(sc, d_lift=d_pred)
        d_lat = d_lat.copy()
        d_lat[:, 1:] -= mse_grad(target, pred)
    else:
        d_lat, _, gS = S.backward(sc, d_head=d_pred)
    return loss, _prefixed("supervisor", gS), d_lat


def embedder_joint_loss(model, coords, data):
    """Reconstruction plus a small supervised term on real latents.

    Only embedder and recovery gradients are returned.
    """
    E, R = model.embedder, model.recovery
    eo, ec = E.forward(data, coords)
    ro, rc = R.forward(eo["latent"], eo["static"])
    recon = mse(data, ro["head"]) + mse(coords, ro["static"])
    sup, _, d_lat_sup = supervised_loss(model, eo["latent"], data)
    loss = recon + EMBEDDER_SUP_WEIGHT * sup
    dH, ds, gR = R.backward(rc, d_static=mse_grad(coords, ro["static"]),
                            d_head=mse_grad(data, ro["head"]))
    _, _, gE = E.backward(ec, d_static=ds, d_latent=dH + EMBEDDER_SUP_WEIGHT * d_lat_sup)
    grads = _prefixed("embedder", gE)
    grads.update(_prefixed("recovery", gR))
    return loss, grads


def _generated_path(model, coords, noise):
    """Forward through generator (and supervisor) to data space."""
    G, S, R = model.generator, model.supervisor, model.recovery
    go, gc = G.forward(noise, coords)
    e_hat = go["latent"]
    path = {"go": go, "gc": gc, "e_hat": e_hat}
    so, sc = S.forward(e_hat)
    path["so"], path["sc"] = so, sc
    if S.lift is not None:
        h_hat = so["lift"]
        path["h_hat"] = h_hat
        ro, rc = R.forward(h_hat, go["static"])
    else:
        ro, rc = R.forward(e_hat, go["static"])
    path["ro"], path["rc"] = ro, rc
    path["x_hat"] = ro["head"]
    return path


def generator_loss(model, coords, data, noise, lambda_sup, lambda_moment):
    """Adversarial + supervised + moment loss for the generator.

    Returns (total, parts, grads) with grads for generator and supervisor.
    """
    G, S, R, D = model.generator, model.supervisor, model.recovery, model.discriminator
    p = _generated_path(model, coords, noise)
    e_hat, so, x_hat = p["e_hat"], p["so"], p["x_hat"]
    B = e_hat.shape[0]
    ones = np.ones((B, 1, 1))
    latent_mode = S.lift is not None

    fakes = [("e", e_hat)]
    if latent_mode:
        fakes.insert(0, ("h", p["h_hat"]))
    adv = 0.0
    d_fake = {}
    for key, lat in fakes:
        do, dc = D.forward(lat)
        adv += bce(ones, do["head"])
        d_fake[key], _, _ = D.backward(dc, d_head=bce_grad(ones, do["head"]))

    if latent_mode:
        target, pred = e_hat[:, 1:], p["h_hat"][:, :-1]
    else:
        target, pred = x_hat[:, 1:], so["head"][:, :-1]
    sup = mse(target, pred)
    g_pred = mse_grad(target, pred)
    mom = moment_loss(data, x_hat)
    total = adv + lambda_sup * sup + lambda_moment * mom

    d_x_hat = lambda_moment * moment_loss_grad(data, x_hat)
    if not latent_mode:
        d_x_hat = d_x_hat.copy()
        d_x_hat[:, 1:] -= lambda_sup * g_pred
    d_rec_in, d_s_g, _ = R.backward(p["rc"], d_head=d_x_hat)

    d_e_hat = d_fake["e"].copy()
    if latent_mode:
        d_h_hat = d_rec_in + d_fake["h"]
        d_h_hat[:, :-1] += lambda_sup * g_pred
        d_s_in, _, gS = S.backward(p["sc"], d_lift=d_h_hat)
        d_e_hat[:, 1:] -= lambda_sup * g_pred
    else:
        d_e_hat += d_rec_in
        d_sup_out = np.zeros(so["head"].shape)
        d_sup_out[:, :-1] = lambda_sup * g_pred
        d_s_in, _, gS = S.backward(p["sc"], d_head=d_sup_out)
    d_e_hat += d_s_in
    _, _, gG = G.backward(p["gc"], d_static=d_s_g, d_latent=d_e_hat)
    grads = _prefixed("generator", gG)
    grads.update(_prefixed("supervisor", gS))
    parts = {"g_adv": adv, "g_sup": sup, "g_moment": mom}
    return total, parts, grads


def discriminator_loss(model, coords, data, noise):
    """BCE of real latents (label 1) against generated latents (label 0)."""
    D = model.discriminator
    eo, _ = model.embedder.forward(data, coords)
    p = _generated_path(model, coords, noise)
    B = data.shape[0]
    items = [(eo["latent"], 1.0), (p["e_hat"], 0.0)]
    if "h_hat" in p:
        items.insert(1, (p["h_hat"], 0.0))
    loss = 0.0
    grads = None
    for lat, label in items:
        y = np.full((B, 1, 1), label)
        do, dc = D.forward(lat)
        loss += bce(y, do["head"])
        _, _, g = D.backward(dc, d_head=bce_grad(y, do["head"]))
        grads = g if grads is None else {k: grads[k] + g[k] for k in g}
    return loss, _prefixed("discriminator", grads)


def discriminator_accuracy(model, coords, data, noise):
    """Share of real and generated latents the discriminator labels correctly."""
    eo, _ = model.embedder.forward(data, coords)
    p = _generated_path(model, coords, noise)
    fake = p["h_hat"] if "h_hat" in p else p["e_hat"]
    real_p = model.discriminate(eo["latent"])
    fake_p = model.discriminate(fake)
    return float(np.mean(np.concatenate([real_p > 0.5, fake_p <= 0.5])))


@dataclass
class LossRecord:
    phase: str
    epoch: int
    name: str
    value: float


@dataclass
class JointStats:
    generator_updates: list = field(default_factory=list)
    discriminator_checks: list = field(default_factory=list)
    discriminator_updates: list = field(default_factory=list)


class Trainer:
    """Owns the optimizers and enforces autoencoder -> supervisor -> joint order."""

    def __init__(self, model, samples, config):
        self.model = model
        self.samples = samples
        self.config = config
        self.rng = np.random.default_rng([config.seed, 1])
        lr = config.lr
        self.opt_ae = Adam(_params(model, ["embedder", "recovery"]), lr=lr)
        self.opt_sup = Adam(_params(model, ["supervisor"]), lr=lr)
        self.opt_gen = Adam(_params(model, ["generator", "supervisor"]), lr=lr)
        self.opt_disc = Adam(_params(model, ["discriminator"]), lr=lr)
        self.autoencoder_done = False
        self.supervisor_done = False
        self.history = []
        self.joint_stats = JointStats()

    def _batches(self, phase, epoch):
        seed = [self.config.seed, {"ae": 0, "sup": 1, "joint": 2}[phase], epoch]
        return make_batches(self.samples, self.config.batch_size, seed=np.random.SeedSequence(seed).generate_state(1)[0])

    def _noise(self, n):
        return self.rng.uniform(0.0, 1.0, size=(n, self.model.rows, self.model.noise_dim))

    def _log(self, phase, epoch, name, value):
        self.history.append(LossRecord(phase, epoch, name, float(value)))

    def train_autoencoder(self, epochs):
        trace = []
        for ep in range(epochs):
            losses = []
            for batch in self._batches("ae", ep):
                loss, grads = reconstruction_loss(self.model, batch.coords, batch.data)
                _check(loss, "reconstruction loss")
                self.opt_ae.step(grads)
                losses.append(loss)
            trace.append(float(np.mean(losses)))
            self._log("autoencoder", ep, "reconstruction", trace[-1])
        self.autoencoder_done = True
        return trace

    def train_supervisor(self, epochs):
        if not self.autoencoder_done:
            raise PhaseOrderError("train the autoencoder before the supervisor")
        trace = []
        for ep in range(epochs):
            losses = []
            for batch in self._batches("sup", ep):
                eo, _ = self.model.embedder.forward(batch.data, batch.coords)
                loss, grads, _ = supervised_loss(self.model, eo["latent"], batch.data)
                _check(loss, "supervised loss")
                self.opt_sup.step(grads)
                losses.append(loss)
            trace.append(float(np.mean(losses)))
            self._log("supervisor", ep, "supervised", trace[-1])
        self.supervisor_done = True
        return trace

    def train_joint(self, epochs):
        if not (self.autoencoder_done and self.supervisor_done):
            raise PhaseOrderError("joint training requires completed autoencoder and supervisor phases")
        cfg = self.config
        traces = {"generator": [], "embedder": [], "discriminator": []}
        for ep in range(epochs):
            g_losses, e_losses, d_losses = [], [], []
            n_gen = n_check = n_disc = 0
            for batch in self._batches("joint", ep):
                C, X = batch.coords, batch.data
                for _ in range(cfg.gen_steps_per_disc_check):
                    g, _, grads = generator_loss(self.model, C, X, self._noise(len(batch)),
                                                 cfg.lambda_sup, cfg.lambda_moment)
                    _check(g, "generator loss")
                    self.opt_gen.step(grads)
                    e, grads = embedder_joint_loss(self.model, C, X)
                    _check(e, "embedder loss")
                    self.opt_ae.step(grads)
                    g_losses.append(g)
                    e_losses.append(e)
                    n_gen += 1
                d, grads = discriminator_loss(self.model, C, X, self._noise(len(batch)))
                _check(d, "discriminator loss")
                n_check += 1
                if d > cfg.disc_threshold:
                    self.opt_disc.step(grads)
                    n_disc += 1
                d_losses.append(d)
            for key, vals in (("generator", g_losses), ("embedder", e_losses), ("discriminator", d_losses)):
                traces[key].append(float(np.mean(vals)))
                self._log("joint", ep, key, traces[key][-1])
            self.joint_stats.generator_updates.append(n_gen)
            self.joint_stats.discriminator_checks.append(n_check)
            self.joint_stats.discriminator_updates.append(n_disc)
        return traces


BUNDLE_VERSION = 1


@dataclass
class TrainedBundle:
    model: TimeGAN
    train_scaler: MinMaxScaler
    test_scaler: MinMaxScaler
    coord_scaler: CoordScaler
    config: TrainConfig
    history: list = field(default_factory=list)
    version: int = BUNDLE_VERSION

    @property
    def rows(self):
        return self.model.rows

    @property
    def cols(self):
        return self.model.cols

    @property
    def length(self):
        return self.rows * self.cols

    def round_weights(self):
        """Round every weight to float32 precision so a checkpoint
        round-trip is exact."""
        for comp in self.model.components().values():
            for arr in comp.params.values():
                arr[...] = arr.astype(np.float32).astype(np.float64)
        return self


def fit(train_offsets, test_offsets, config):
    """Preprocess offsets, run all three phases, and return a bundle."""
    if not train_offsets:
        raise ValueError("no training stations")
    T = min(len(o) for o in train_offsets)
    if any(len(o) != T for o in list(train_offsets) + list(test_offsets)):
        raise ValueError("all stations must share one series length")
    rows = config.rows or default_rows(T)
    train_pool = np.concatenate([o.values for o in train_offsets])
    train_scaler = MinMaxScaler().fit(train_pool)
    if config.fit_on_train or not test_offsets:
        test_scaler = MinMaxScaler(train_scaler.data_min, train_scaler.data_max)
    else:
        test_scaler = MinMaxScaler().fit(np.concatenate([o.values for o in test_offsets]))
    coord_scaler = CoordScaler.fit([[o.lon, o.lat] for o in train_offsets])
    samples = build_samples(train_offsets, train_scaler, coord_scaler, rows, config.truncate)
    cols = samples[0].matrix.shape[1]
    log.info("training %d stations as %dx%d samples, config %s, seed %d",
             len(samples), rows, cols, config.hash(), config.seed)
    model = TimeGAN(rows, cols, config.n_layers, config.hidden, config.supervisor_space, config.seed)
    trainer = Trainer(model, samples, config)
    trainer.train_autoencoder(config.phase1_epochs)
    trainer.train_supervisor(config.phase2_epochs)
    trainer.train_joint(config.epochs)
    bundle = TrainedBundle(model, train_scaler, test_scaler, coord_scaler, config, trainer.history)
    return bundle.round_weights()
