"""Coordinate-conditioned offset generation, forecast correction and evaluation."""

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import StateError
from .nn import mae, mse, rmse
from .preprocess import flatten

log = logging.getLogger(__name__)


@dataclass
class ExtrapolationRequest:
    coords: list  # (lon, lat) pairs in degrees
    n_noise_draws: int = 1
    seed: int = 0

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        if not np.isfinite(c).all():
            raise ValueError("coordinates must be finite")
        if self.n_noise_draws < 1:
            raise ValueError("n_noise_draws must be at least 1")
        self.coords = c


def coordinate_seed(global_seed, index):
    """Seed for one coordinate; depends only on (global_seed, index)."""
    return np.random.SeedSequence([int(global_seed), int(index)])


def extrapolate_one(bundle, lon, lat, seed_seq, n_draws=1):
    """Generated offset series (feet) for a single coordinate."""
    model = bundle.model
    c = bundle.coord_scaler.transform([[lon, lat]])
    rng = np.random.default_rng(seed_seq)
    noise = rng.uniform(0.0, 1.0, size=(n_draws, model.rows, model.noise_dim))
    x_hat = model.synthesize(np.repeat(c, n_draws, axis=0), noise)
    series = bundle.train_scaler.inverse_transform(x_hat.reshape(n_draws, -1))
    return series.mean(axis=0) if n_draws > 1 else series[0]


def extrapolate(bundle, request):
    """One generated series per requested coordinate, shape (n, rows*cols)."""
    if bundle is None:
        raise StateError("no trained bundle loaded")
    if len(request.coords) == 0:
        raise ValueError("empty extrapolation request")
    return np.stack([
        extrapolate_one(bundle, lon, lat, coordinate_seed(request.seed, i), request.n_noise_draws)
        for i, (lon, lat) in enumerate(request.coords)
    ])


def correct_forecast(modeled, generated_offset):
    """Subtract the generated offset from the modeled water level."""
    modeled = np.asarray(modeled, dtype=float)
    generated_offset = np.asarray(generated_offset, dtype=float)
    if modeled.shape != generated_offset.shape:
        raise ValueError(f"length mismatch: {modeled.shape} vs {generated_offset.shape}")
    return modeled - generated_offset


@dataclass
class StationMetrics:
    station_id: str
    rmse_without_ai: float
    rmse_with_ai: float
    mse_without_ai: float
    mse_with_ai: float
    mae_without_ai: float
    mae_with_ai: float
    offset_rmse_norm: float


@dataclass
class EvalReport:
    stations: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    improved_fraction: float = 0.0


def evaluate_stations(bundle, test_stations, seed=0, n_draws=1, generated=None):
    """Compare corrected (with AI) and raw (without AI) forecasts against
    observations at each test station.

    ``generated`` optionally supplies the offset series per station id
    instead of sampling the model. Returns (EvalReport, corrected series
    dict keyed by station id).
    """
    if not test_stations:
        raise ValueError("empty test set")
    L = bundle.length
    rows, corrected_out = [], {}
    pooled = {"with": [], "without": []}
    for i, st in enumerate(test_stations):
        modeled = np.asarray(st.modeled, dtype=float)[:L]
        observed = np.asarray(st.observed, dtype=float)[:L]
        if len(modeled) < L:
            raise ValueError(f"{st.station_id}: series shorter than the trained length {L}")
        if generated is not None:
            gen = np.asarray(generated[st.station_id], dtype=float)
        else:
            gen = extrapolate_one(bundle, st.lon, st.lat, coordinate_seed(seed, i), n_draws)
        corrected = correct_forecast(modeled, gen)
        corrected_out[st.station_id] = corrected
        true_off = modeled - observed
        off_norm = rmse(bundle.test_scaler.transform(true_off), bundle.train_scaler.transform(gen))
        rows.append(StationMetrics(
            st.station_id,
            rmse(observed, modeled), rmse(observed, corrected),
            mse(observed, modeled), mse(observed, corrected),
            mae(observed, modeled), mae(observed, corrected),
            off_norm,
        ))
        pooled["with"].append(observed - corrected)
        pooled["without"].append(observed - modeled)
    agg = {}
    for key, res in pooled.items():
        r = np.concatenate(res)
        z = np.zeros_like(r)
        agg[f"mse_{key}_ai"] = mse(z, r)
        agg[f"rmse_{key}_ai"] = rmse(z, r)
        agg[f"mae_{key}_ai"] = mae(z, r)
    improved = sum(m.rmse_with_ai < m.rmse_without_ai for m in rows) / len(rows)
    return EvalReport(rows, agg, improved), corrected_out


EVAL_HEADER = ["station_id", "rmse_without_ai", "rmse_with_ai", "mse_without_ai",
               "mse_with_ai", "mae_without_ai", "mae_with_ai", "offset_rmse_norm"]


def write_eval_csv(path, report):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_HEADER)
        for m in report.stations:
            w.writerow([m.station_id] + [repr(float(getattr(m, k))) for k in EVAL_HEADER[1:]])
        a = report.aggregate
        w.writerow(["ALL", repr(a["rmse_without_ai"]), repr(a["rmse_with_ai"]),
                    repr(a["mse_without_ai"]), repr(a["mse_with_ai"]),
                    repr(a["mae_without_ai"]), repr(a["mae_with_ai"]), ""])
        w.writerow(["IMPROVED_FRACTION", repr(report.improved_fraction), "", "", "", "", "", ""])


def write_corrected_csv(path, test_stations, corrected, length):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "t_index", "modeled_ft", "corrected_ft", "observed_ft"])
        for st in test_stations:
            c = corrected[st.station_id]
            for t in range(length):
                w.writerow([st.station_id, t, repr(float(st.modeled[t])), repr(float(c[t])),
                            repr(float(st.observed[t]))])


def write_generated_csv(path, coords, series):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lon_deg", "lat_deg", "t_index", "offset_ft"])
        for (lon, lat), s in zip(coords, series):
            for t, v in enumerate(flatten(s)):
                w.writerow([repr(float(lon)), repr(float(lat)), t, repr(float(v))])


def bench_inference(bundle, counts, seed=0, clock=time.perf_counter):
    """Wall-clock seconds to extrapolate n series one after another.

    Coordinates are drawn uniformly inside the training bounding box.
    Returns a list of (n, seconds).
    """
    counts = list(counts)
    if counts != sorted(counts):
        raise ValueError("counts must be ascending")
    lon0, lon1, lat0, lat1 = bundle.coord_scaler.bounds()
    rng = np.random.default_rng(seed)
    # one warm-up call so JIT compilation is not timed
    extrapolate_one(bundle, lon0, lat0, coordinate_seed(seed, -1 % (2**32)))
    table = []
    for n in counts:
        lons = rng.uniform(lon0, lon1, n)
        lats = rng.uniform(lat0, lat1, n)
        start = clock()
        for i in range(n):
            extrapolate_one(bundle, lons[i], lats[i], coordinate_seed(seed, i))
        table.append((n, clock() - start))
        log.info("bench n=%d: %.4f s", n, table[-1][1])
    return table


def write_bench_csv(path, table):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "seconds"])
        for n, sec in table:
            w.writerow([n, f"{sec:.6f}"])
