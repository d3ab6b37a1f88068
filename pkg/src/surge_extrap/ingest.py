"""Station file loading, offset extraction and outlier screening."""

import csv
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

log = logging.getLogger(__name__)

AGENCIES = ("NOAA", "USGS", "USACE", "TCOON", "PRSN", "OTHER")
STATION_HEADER = [
    "station_id", "agency", "lon_deg", "lat_deg",
    "timestamp_iso8601", "modeled_ft", "observed_ft",
]
OFFSET_HEADER = ["station_id", "lon_deg", "lat_deg", "t_index", "offset_ft"]


class SchemaError(ValueError):
    """Input file does not follow the expected CSV layout."""


class MissingDataError(ValueError):
    """A station has gaps in its modeled or observed series."""


@dataclass
class StationSeries:
    station_id: str
    agency: str
    lon: float
    lat: float
    timestamps: list
    modeled: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        self.modeled = np.asarray(self.modeled, dtype=float)
        self.observed = np.asarray(self.observed, dtype=float)
        if not (len(self.modeled) == len(self.observed) == len(self.timestamps) >= 1):
            raise ValueError(f"{self.station_id}: series lengths differ or are empty")
        if not (-180.0 <= self.lon <= 180.0 and -90.0 <= self.lat <= 90.0):
            raise ValueError(f"{self.station_id}: coordinates out of range")

    @property
    def has_missing(self):
        return bool(np.isnan(self.modeled).any() or np.isnan(self.observed).any())


@dataclass
class OffsetSeries:
    station_id: str
    lon: float
    lat: float
    values: np.ndarray

    def __len__(self):
        return len(self.values)


@dataclass
class DatasetSummary:
    n_stations: int = 0
    lengths: dict = field(default_factory=dict)
    total_offsets: int = 0
    uniform_length: int | None = None
    warnings: list = field(default_factory=list)


def _parse_float(text, path, lineno, name):
    text = text.strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise SchemaError(f"{path}:{lineno}: column {name} is not a number: {text!r}") from None


def load_station_csv(path):
    """Read a station CSV into one StationSeries per station.

    Rows are grouped by station id and ordered by timestamp. Hours missing
    between the first and last timestamp are inserted as NaN, so a gap in
    either series marks the station as incomplete.
    """
    rows = OrderedDict()
    meta = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != STATION_HEADER:
            raise SchemaError(f"{path}:1: expected header {','.join(STATION_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(STATION_HEADER):
                raise SchemaError(f"{path}:{lineno}: expected {len(STATION_HEADER)} fields, got {len(rec)}")
            sid, agency = rec[0].strip(), rec[1].strip().upper() or "OTHER"
            if not sid:
                raise SchemaError(f"{path}:{lineno}: empty station_id")
            if agency not in AGENCIES:
                agency = "OTHER"
            lon = _parse_float(rec[2], path, lineno, "lon_deg")
            lat = _parse_float(rec[3], path, lineno, "lat_deg")
            if math.isnan(lon) or math.isnan(lat):
                raise SchemaError(f"{path}:{lineno}: missing coordinates")
            try:
                ts = datetime.fromisoformat(rec[4].strip().replace("Z", "+00:00"))
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: bad timestamp {rec[4]!r}") from None
            mod = _parse_float(rec[5], path, lineno, "modeled_ft")
            obs = _parse_float(rec[6], path, lineno, "observed_ft")
            if sid in meta and meta[sid][1:] != (agency, lon, lat)[1:]:
                raise SchemaError(f"{path}:{lineno}: station {sid} changes coordinates")
            meta.setdefault(sid, (agency, lon, lat))
            bucket = rows.setdefault(sid, {})
            if ts in bucket:
                raise SchemaError(f"{path}:{lineno}: duplicate timestamp for {sid}")
            bucket[ts] = (mod, obs)

    stations = []
    for sid, bucket in rows.items():
        agency, lon, lat = meta[sid]
        times = sorted(bucket)
        hour = timedelta(hours=1)
        n = int((times[-1] - times[0]) / hour) + 1
        grid = [times[0] + i * hour for i in range(n)]
        modeled = np.full(n, np.nan)
        observed = np.full(n, np.nan)
        for ts, (m, o) in bucket.items():
            offset = (ts - times[0]) / hour
            if offset != int(offset):
                # off-grid sample: cannot be aligned hourly
                modeled[:] = np.nan
                break
            modeled[int(offset)], observed[int(offset)] = m, o
        stations.append(StationSeries(sid, agency, lon, lat, grid, modeled, observed))
    return stations


def write_station_csv(path, stations):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATION_HEADER)
        for s in stations:
            for ts, m, o in zip(s.timestamps, s.modeled, s.observed):
                w.writerow([
                    s.station_id, s.agency, repr(float(s.lon)), repr(float(s.lat)),
                    ts.isoformat(),
                    "" if np.isnan(m) else repr(float(m)),
                    "" if np.isnan(o) else repr(float(o)),
                ])


def compute_offsets(station):
    """Modeled minus observed water level, hour by hour."""
    if station.has_missing:
        raise MissingDataError(f"{station.station_id}: missing modeled/observed values")
    return OffsetSeries(station.station_id, station.lon, station.lat,
                        station.modeled - station.observed)


def offsets_from_stations(stations):
    """Compute offsets for every complete station.

    Returns (offsets, excluded) where excluded is a list of (station_id, reason).
    """
    offsets, excluded = [], []
    for s in stations:
        try:
            offsets.append(compute_offsets(s))
        except MissingDataError:
            excluded.append((s.station_id, "missing data"))
    return offsets, excluded


def outlier_threshold(abs_values, iqr_factor=3.0, floor=0.1):
    q1, q3 = np.percentile(abs_values, [25.0, 75.0])
    return max(q3 + iqr_factor * (q3 - q1), floor)


def filter_outlier_stations(offsets, iqr_factor=3.0, floor=0.1):
    """Drop stations whose |offset| ever exceeds Q3 + k*IQR of the pool.

    The threshold is recomputed on the survivors until no further station
    is removed, so filtering the kept set again is a no-op.

    Returns (kept, removed) where removed holds (station_id, reason) pairs.
    """
    if not offsets:
        raise ValueError("no stations to filter")
    if len(offsets) < 4:
        raise ValueError("need at least 4 stations for quartile-based filtering")
    kept = list(offsets)
    removed = []
    while kept:
        pool = np.abs(np.concatenate([o.values for o in kept]))
        thr = outlier_threshold(pool, iqr_factor, floor)
        survivors = []
        for o in kept:
            peak = float(np.max(np.abs(o.values)))
            if peak > thr:
                removed.append((o.station_id, f"|offset| {peak:.3f} ft exceeds {thr:.3f} ft"))
            else:
                survivors.append(o)
        if len(survivors) == len(kept):
            break
        kept = survivors
    for sid, reason in removed:
        log.info("outlier station %s removed: %s", sid, reason)
    return kept, removed


def validate_dataset(stations):
    """Count stations and hourly offsets; warn on mixed series lengths."""
    summary = DatasetSummary()
    for s in stations:
        sid = s.station_id
        n = len(s.values) if hasattr(s, "values") else len(s.modeled)
        summary.lengths[sid] = n
    summary.n_stations = len(summary.lengths)
    summary.total_offsets = int(sum(summary.lengths.values()))
    distinct = set(summary.lengths.values())
    if len(distinct) == 1:
        summary.uniform_length = distinct.pop()
    elif len(distinct) > 1:
        msg = f"mixed signal lengths: {sorted(distinct)}"
        summary.warnings.append(msg)
        log.warning(msg)
    return summary


def write_offsets_csv(path, offsets):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OFFSET_HEADER)
        for o in offsets:
            for t, v in enumerate(o.values):
                w.writerow([o.station_id, repr(float(o.lon)), repr(float(o.lat)), t, repr(float(v))])


def read_offsets_csv(path):
    series = OrderedDict()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != OFFSET_HEADER:
            raise SchemaError(f"{path}:1: expected header {','.join(OFFSET_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(OFFSET_HEADER):
                raise SchemaError(f"{path}:{lineno}: expected {len(OFFSET_HEADER)} fields")
            sid = rec[0]
            try:
                lon, lat, t, v = float(rec[1]), float(rec[2]), int(rec[3]), float(rec[4])
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: malformed numeric field") from None
            entry = series.setdefault(sid, (lon, lat, {}))
            entry[2][t] = v
    out = []
    for sid, (lon, lat, vals) in series.items():
        n = len(vals)
        if sorted(vals) != list(range(n)):
            raise SchemaError(f"{path}: station {sid} has non-contiguous t_index values")
        out.append(OffsetSeries(sid, lon, lat, np.array([vals[i] for i in range(n)])))
    return out
