"""Synthetic hurricanes with an analytic offset field.

offset(u, v, t) = a * sin(w t + phase(u, v)) * envelope(u, v) + baseline(u, v) + noise

where (u, v) are station coordinates scaled to the unit square of the
bounding box. Modeled levels are observed levels plus the offset, so
subtracting observed from modeled recovers the field exactly.
"""

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .ingest import OFFSET_HEADER, OffsetSeries, StationSeries, write_station_csv

AGENCY_CYCLE = ("NOAA", "USGS", "USACE", "TCOON", "NOAA", "USGS")


@dataclass
class FieldSpec:
    n_stations: int = 60
    T: int = 40
    lon_min: float = -95.0
    lon_max: float = -88.0
    lat_min: float = 28.0
    lat_max: float = 31.0
    amplitude: float = 1.0
    omega: float = 2.0 * math.pi / 48.0
    phase_scale: float = 0.8
    envelope_base: float = 0.7
    envelope_slope: float = 0.6
    baseline_base: float = 0.3
    baseline_slope: float = 0.4
    noise_sigma: float = 0.05
    outlier_rate: float = 0.0
    outlier_spike_ft: float = 15.0
    missing_rate: float = 0.0
    seed: int = 0
    start: str = "2022-09-27T00:00:00"

    def __post_init__(self):
        if self.T < 3:
            raise ValueError("T must be at least 3")
        if self.n_stations < 12:
            raise ValueError("need at least 12 stations")
        if not (self.lon_max > self.lon_min and self.lat_max > self.lat_min):
            raise ValueError("degenerate bounding box")
        vals = [getattr(self, f) for f in self.__dataclass_fields__ if f != "start"]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("field parameters must be finite")

    def unit(self, lon, lat):
        u = (np.asarray(lon) - self.lon_min) / (self.lon_max - self.lon_min)
        v = (np.asarray(lat) - self.lat_min) / (self.lat_max - self.lat_min)
        return u, v

    def phase(self, u, v):
        return self.phase_scale * (u + v)

    def envelope(self, u, v):
        return self.envelope_base + self.envelope_slope * v

    def baseline(self, u, v):
        return self.baseline_base + self.baseline_slope * u

    def field(self, lon, lat, t):
        """Noise-free offset (feet) at degree coordinates and hour indices."""
        u, v = self.unit(lon, lat)
        t = np.asarray(t, dtype=float)
        return (self.amplitude * np.sin(self.omega * t + self.phase(u, v)) * self.envelope(u, v)
                + self.baseline(u, v))

    def lipschitz_bound(self):
        """Upper bound on |d offset / du| + |d offset / dv| over the unit square."""
        a, ps = self.amplitude, abs(self.phase_scale)
        gmax = max(abs(self.envelope_base), abs(self.envelope_base + self.envelope_slope))
        du = a * ps * gmax + abs(self.baseline_slope)
        dv = a * ps * gmax + a * abs(self.envelope_slope)
        return du + dv


@dataclass
class SyntheticHurricane:
    spec: FieldSpec
    stations: list
    truth: list  # OffsetSeries with noise-free field values
    outlier_ids: list
    missing_ids: list


def generate_dataset(spec):
    rng = np.random.default_rng(spec.seed)
    n, T = spec.n_stations, spec.T
    lons = rng.uniform(spec.lon_min, spec.lon_max, n)
    lats = rng.uniform(spec.lat_min, spec.lat_max, n)
    t = np.arange(T)
    start = datetime.fromisoformat(spec.start)
    times = [start + timedelta(hours=int(i)) for i in t]
    n_out = int(round(spec.outlier_rate * n))
    n_miss = int(round(spec.missing_rate * n))
    picks = rng.permutation(n)
    outliers = set(picks[:n_out].tolist())
    missing = set(picks[n_out:n_out + n_miss].tolist())
    stations, truth = [], []
    for i in range(n):
        sid = f"SYN{i:04d}"
        clean = spec.field(lons[i], lats[i], t)
        offset = clean + rng.normal(0.0, spec.noise_sigma, T) if spec.noise_sigma > 0 else clean.copy()
        tide_phase = rng.uniform(0, 2 * math.pi)
        observed = 1.0 + 0.8 * np.sin(2 * math.pi * t / 12.42 + tide_phase)
        if i in outliers:
            offset[rng.integers(T)] += spec.outlier_spike_ft
        modeled = observed + offset
        if i in missing:
            modeled[rng.integers(T)] = np.nan
        stations.append(StationSeries(sid, AGENCY_CYCLE[i % len(AGENCY_CYCLE)], float(lons[i]),
                                      float(lats[i]), list(times), modeled, observed))
        truth.append(OffsetSeries(sid, float(lons[i]), float(lats[i]), clean))
    return SyntheticHurricane(
        spec, stations, truth,
        [f"SYN{i:04d}" for i in sorted(outliers)],
        [f"SYN{i:04d}" for i in sorted(missing)],
    )


def write_dataset(hurricane, station_path, truth_path):
    write_station_csv(station_path, hurricane.stations)
    with open(truth_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OFFSET_HEADER)
        for o in hurricane.truth:
            for k, val in enumerate(o.values):
                w.writerow([o.station_id, repr(o.lon), repr(o.lat), k, repr(float(val))])
