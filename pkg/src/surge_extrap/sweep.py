"""Grid search over layers x neurons x joint epochs."""

import csv
import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .inference import evaluate_stations
from .training import TrainConfig, fit

log = logging.getLogger(__name__)


@dataclass
class SweepGrid:
    layers: tuple = (4, 5)
    neurons: tuple = (128, 256)
    epochs: tuple = (2000, 3000, 4000)
    seed: int = 0

    def __post_init__(self):
        if not (self.layers and self.neurons and self.epochs):
            raise ValueError("every grid axis needs at least one value")

    def configs(self):
        return list(itertools.product(self.layers, self.neurons, self.epochs))

    def __len__(self):
        return len(self.layers) * len(self.neurons) * len(self.epochs)


@dataclass
class SweepRun:
    layers: int
    neurons: int
    epochs: int
    rmse: float | None
    status: str


@dataclass
class SummaryRow:
    label: str
    statistic: float
    run: SweepRun


@dataclass
class SweepResult:
    runs: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    mean: float = float("nan")
    std: float = float("nan")

    @property
    def winner(self):
        ok = [r for r in self.runs if r.status == "ok"]
        return min(ok, key=lambda r: r.rmse) if ok else None


def summarize(runs):
    """Min / Max / Mean - Std / Mean + Std rows over successful runs.

    The mean +/- std rows carry the run whose RMSE is nearest the statistic.
    Standard deviation is the population value (ddof = 0).
    """
    ok = [r for r in runs if r.status == "ok"]
    if len(ok) < 2:
        raise ValueError("need at least two successful configurations")
    vals = np.array([r.rmse for r in ok])
    mean, std = float(vals.mean()), float(vals.std())

    def nearest(x):
        return ok[int(np.argmin(np.abs(vals - x)))]

    rows = [
        SummaryRow("Min", float(vals.min()), ok[int(np.argmin(vals))]),
        SummaryRow("Max", float(vals.max()), ok[int(np.argmax(vals))]),
        SummaryRow("Mean - Std", mean - std, nearest(mean - std)),
        SummaryRow("Mean + Std", mean + std, nearest(mean + std)),
    ]
    return rows, mean, std


def evaluate_config(config, train_offsets, test_offsets, test_stations):
    """Train one configuration; return pooled test RMSE in feet."""
    bundle = fit(train_offsets, test_offsets, config)
    report, _ = evaluate_stations(bundle, test_stations, seed=config.seed)
    return report.aggregate["rmse_with_ai"]


def _run_one(args):
    layers, neurons, epochs, base, train_fn, payload = args
    cfg = replace(base, n_layers=layers, hidden=neurons, epochs=epochs)
    try:
        return SweepRun(layers, neurons, epochs, float(train_fn(cfg, *payload)), "ok")
    except Exception as exc:  # a failed config is recorded, not fatal
        log.warning("config %s/%s/%s failed: %s", layers, neurons, epochs, exc)
        return SweepRun(layers, neurons, epochs, None, f"failed: {type(exc).__name__}")


def workers_from_env():
    try:
        return max(0, int(os.environ.get("SURGE_EXTRAP_THREADS", "0")))
    except ValueError:
        return 0


def run_sweep(train_offsets, test_offsets, test_stations, grid, base=None,
              train_fn=evaluate_config, workers=None):
    """Train and score every grid point on one fixed split.

    ``train_fn(config, train_offsets, test_offsets, test_stations)`` must
    return an RMSE; it is replaceable for dry runs. ``workers`` > 0 uses
    that many processes (default from SURGE_EXTRAP_THREADS, 0 = sequential).
    """
    base = base or TrainConfig()
    base = replace(base, seed=grid.seed)
    payload = (train_offsets, test_offsets, test_stations)
    jobs = [(l, n, e, base, train_fn, payload) for l, n, e in grid.configs()]
    workers = workers_from_env() if workers is None else workers
    if workers > 0:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(job) for job in jobs]
    result = SweepResult(runs=runs)
    if sum(r.status == "ok" for r in runs) >= 2:
        result.summary, result.mean, result.std = summarize(runs)
    return result


def write_sweep_csv(path, result):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layers", "neurons", "epochs", "rmse_ft", "status"])
        for r in result.runs:
            w.writerow([r.layers, r.neurons, r.epochs, "" if r.rmse is None else repr(r.rmse), r.status])


def write_summary_csv(path, result):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["error_metric", "statistic_ft", "rmse_ft", "layers", "neurons", "epochs"])
        for row in result.summary:
            r = row.run
            w.writerow([row.label, repr(row.statistic), repr(r.rmse), r.layers, r.neurons, r.epochs])
