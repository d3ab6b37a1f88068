"""Min-max scaling, offset reshaping and batch assembly."""

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class ReshapeError(ValueError):
    pass


class MinMaxScaler:
    """Pooled min-max scaler. A constant pool maps everything to 0."""

    def __init__(self, data_min=None, data_max=None):
        self.data_min = data_min
        self.data_max = data_max

    @property
    def fitted(self):
        return self.data_min is not None

    def fit(self, values):
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("cannot fit a scaler on empty data")
        if not np.isfinite(v).all():
            raise ValueError("scaler input contains non-finite values")
        self.data_min = float(v.min())
        self.data_max = float(v.max())
        return self

    @property
    def span(self):
        return self.data_max - self.data_min

    def transform(self, values):
        v = np.asarray(values, dtype=float)
        if self.span == 0.0:
            return np.zeros_like(v)
        return (v - self.data_min) / self.span

    def inverse_transform(self, values):
        v = np.asarray(values, dtype=float)
        return v * self.span + self.data_min

    def fit_transform(self, values):
        return self.fit(values).transform(values)


class CoordScaler:
    """Maps (lon, lat) into the unit square of a bounding box, clamping
    points that fall outside."""

    def __init__(self, lon_min, lon_max, lat_min, lat_max):
        self.lon_min, self.lon_max = float(lon_min), float(lon_max)
        self.lat_min, self.lat_max = float(lat_min), float(lat_max)

    @classmethod
    def fit(cls, coords):
        c = np.asarray(coords, dtype=float).reshape(-1, 2)
        if len(c) == 0:
            raise ValueError("cannot fit a coordinate box on no stations")
        return cls(c[:, 0].min(), c[:, 0].max(), c[:, 1].min(), c[:, 1].max())

    def bounds(self):
        return (self.lon_min, self.lon_max, self.lat_min, self.lat_max)

    def transform(self, coords, warn=True):
        c = np.asarray(coords, dtype=float).reshape(-1, 2)
        out = np.zeros_like(c)
        for j, (lo, hi) in enumerate(((self.lon_min, self.lon_max), (self.lat_min, self.lat_max))):
            if hi > lo:
                out[:, j] = (c[:, j] - lo) / (hi - lo)
            else:
                out[:, j] = 0.5
        outside = (out < 0.0) | (out > 1.0)
        if warn and outside.any():
            log.warning("%d coordinate(s) outside the training box clamped", int(outside.any(axis=1).sum()))
        return np.clip(out, 0.0, 1.0)


def default_rows(T):
    """Row count used to fold a length-T series into a matrix."""
    if T < 3:
        raise ReshapeError("series must have at least 3 steps")
    if T % 5 == 0:
        return 5
    if T % 3 == 0:
        return 3
    for r in range(4, math.isqrt(T) + 1):
        if T % r == 0:
            return r
    raise ReshapeError(f"T={T} has no divisor in [3, sqrt(T)]; enable truncation")


def reshape_series(values, rows, truncate=False):
    """Row-major fold of a series into ``rows`` rows.

    With ``truncate`` the trailing ``T mod rows`` values are dropped.
    """
    v = np.asarray(values, dtype=float)
    T = len(v)
    if rows < 1 or rows > T:
        raise ReshapeError(f"cannot fold length {T} into {rows} rows")
    rem = T % rows
    if rem:
        if not truncate:
            raise ReshapeError(
                f"{rows} rows do not divide length {T}; pass truncate=True to drop {rem} trailing values"
            )
        log.warning("dropping %d trailing values to fold length %d into %d rows", rem, T, rows)
        v = v[: T - rem]
    return v.reshape(rows, -1)


def flatten(matrix):
    return np.asarray(matrix).reshape(-1)


@dataclass
class OffsetSample:
    station_id: str
    coord_norm: np.ndarray  # (2,)
    matrix: np.ndarray  # (rows, cols)


@dataclass
class Batch:
    samples: list

    def __len__(self):
        return len(self.samples)

    @property
    def coords(self):
        return np.stack([s.coord_norm for s in self.samples])

    @property
    def data(self):
        return np.stack([s.matrix for s in self.samples])


def build_samples(offsets, scaler, coord_scaler, rows, truncate=False):
    return [
        OffsetSample(
            o.station_id,
            coord_scaler.transform([[o.lon, o.lat]], warn=False)[0],
            reshape_series(scaler.transform(o.values), rows, truncate),
        )
        for o in offsets
    ]


def make_batches(samples, batch_size=10, seed=0):
    """Seeded shuffle, then consecutive chunks; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    shapes = {s.matrix.shape for s in samples}
    if len(shapes) > 1:
        raise ReshapeError(f"mixed sample shapes {sorted(shapes)}")
    order = np.random.default_rng(seed).permutation(len(samples))
    shuffled = [samples[i] for i in order]
    return [Batch(shuffled[i:i + batch_size]) for i in range(0, len(shuffled), batch_size)]
