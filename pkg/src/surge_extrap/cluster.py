"""K-means station clustering and cluster-stratified train/test splits."""

import csv
import math
from dataclasses import dataclass

import numpy as np

MAX_ITER = 300
TOL_DEG = 1e-6


class ClusterError(ValueError):
    pass


@dataclass
class ClusterAssignment:
    centroids: np.ndarray  # (k, 2) lon, lat
    labels: np.ndarray  # (n,) cluster index per point

    @property
    def k(self):
        return len(self.centroids)

    def sizes(self):
        return np.bincount(self.labels, minlength=self.k)

    def inertia(self, points):
        points = np.asarray(points, dtype=float)
        return float(((points - self.centroids[self.labels]) ** 2).sum())


@dataclass
class SplitPlan:
    train_ids: list
    test_ids: list
    seed: int


def choose_k(n_stations):
    """One cluster per ten stations, rounded down, at least one."""
    return max(1, math.floor(0.10 * n_stations))


def _sq_dists(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)


def _farthest_point_seeds(points, k, rng):
    n = len(points)
    chosen = [int(rng.integers(n))]
    d = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d))  # first index on ties
        chosen.append(nxt)
        d = np.minimum(d, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[chosen].copy()


def lloyd(points, centroids, max_iter=MAX_ITER, tol=TOL_DEG):
    """Lloyd iterations from given centroids. Empty clusters are re-seeded
    at the point farthest from its assigned centroid."""
    centroids = np.array(centroids, dtype=float)
    k = len(centroids)
    for _ in range(max_iter):
        labels = np.argmin(_sq_dists(points, centroids), axis=1)
        new = centroids.copy()
        for j in range(k):
            members = points[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        sizes = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(sizes == 0):
            d = ((points - new[labels]) ** 2).sum(axis=1)
            far = int(np.argmax(d))
            new[j] = points[far]
            labels[far] = j
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol:
            break
    labels = np.argmin(_sq_dists(points, centroids), axis=1)
    return ClusterAssignment(centroids, labels)


def kmeans(points, k, seed=0):
    """Cluster (lon, lat) points with farthest-point seeding and Lloyd updates.

    Distances are Euclidean in raw degrees.
    """
    points = np.asarray(points, dtype=float)
    if k < 1:
        raise ClusterError("k must be at least 1")
    if k > len(np.unique(points, axis=0)):
        raise ClusterError(f"k={k} exceeds the number of distinct points")
    rng = np.random.default_rng(seed)
    return lloyd(points, _farthest_point_seeds(points, k, rng))


def repair_singletons(points, assignment):
    """Merge every one-station cluster into the cluster with the nearest centroid.

    Centroids are recomputed after each merge; cluster indices are compacted.
    """
    points = np.asarray(points, dtype=float)
    labels = assignment.labels.copy()
    centroids = assignment.centroids.copy()
    while True:
        sizes = np.bincount(labels, minlength=len(centroids))
        empty = np.flatnonzero(sizes == 0)
        single = np.flatnonzero(sizes == 1)
        if len(empty):
            j = int(empty[0])
        elif len(single) and len(centroids) > 1:
            j = int(single[0])
            d = ((centroids - centroids[j]) ** 2).sum(axis=1)
            d[j] = np.inf
            labels[labels == j] = int(np.argmin(d))
        else:
            break
        keep = [i for i in range(len(centroids)) if i != j]
        remap = {old: new for new, old in enumerate(keep)}
        labels = np.array([remap[l] for l in labels])
        centroids = np.array([points[labels == i].mean(axis=0) for i in range(len(keep))])
    return ClusterAssignment(centroids, labels)


def cluster_stations(points, seed=0, k=None):
    if k is None:
        k = choose_k(len(points))
    return repair_singletons(points, kmeans(points, k, seed))


def make_split(station_ids, assignment, seed=0):
    """Pick one random test station per cluster; everything else trains."""
    station_ids = list(station_ids)
    if len(station_ids) != len(assignment.labels):
        raise ClusterError("labels do not cover every station")
    sizes = assignment.sizes()
    if (sizes < 2).any():
        raise ClusterError("every cluster must hold at least two stations")
    rng = np.random.default_rng(seed)
    test = set()
    for j in range(assignment.k):
        members = np.flatnonzero(assignment.labels == j)
        test.add(station_ids[int(members[rng.integers(len(members))])])
    test_ids = [s for s in station_ids if s in test]
    train_ids = [s for s in station_ids if s not in test]
    return SplitPlan(train_ids, test_ids, seed)


def write_split_csv(path, plan):
    roles = {s: "train" for s in plan.train_ids}
    roles.update({s: "test" for s in plan.test_ids})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "role"])
        for sid in plan.train_ids + plan.test_ids:
            w.writerow([sid, roles[sid]])


def read_split_csv(path, seed=0):
    train, test = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["station_id", "role"]:
            raise ValueError(f"{path}:1: expected header station_id,role")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2 or rec[1] not in ("train", "test"):
                raise ValueError(f"{path}:{lineno}: role must be train or test")
            (train if rec[1] == "train" else test).append(rec[0])
    return SplitPlan(train, test, seed)


def write_cluster_csv(path, station_ids, assignment):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "cluster_index"])
        for sid, lab in zip(station_ids, assignment.labels):
            w.writerow([sid, int(lab)])
