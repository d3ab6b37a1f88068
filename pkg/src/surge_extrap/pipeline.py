"""Glue between ingestion, clustering and training used by the CLI and tests."""

from dataclasses import dataclass

import numpy as np

from .cluster import cluster_stations, make_split
from .ingest import filter_outlier_stations, offsets_from_stations


@dataclass
class PreparedData:
    offsets: list
    excluded: list
    assignment: object
    plan: object

    def partition(self):
        test = set(self.plan.test_ids)
        train = [o for o in self.offsets if o.station_id not in test]
        return train, [o for o in self.offsets if o.station_id in test]


def prepare(stations, seed=0, iqr_factor=3.0):
    """Offsets, exclusions (missing data and outliers), clusters and split."""
    offsets, excluded = offsets_from_stations(stations)
    kept, removed = filter_outlier_stations(offsets, iqr_factor)
    points = np.array([[o.lon, o.lat] for o in kept])
    assignment = cluster_stations(points, seed=seed)
    plan = make_split([o.station_id for o in kept], assignment, seed=seed)
    return PreparedData(kept, excluded + removed, assignment, plan)


def select(items, ids):
    wanted = set(ids)
    return [s for s in items if s.station_id in wanted]
