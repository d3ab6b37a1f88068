"""Command-line entry point: synth, ingest, cluster, train, extrapolate,
correct, evaluate, bench, sweep."""

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import checkpoint
from .cluster import (
    cluster_stations, make_split, read_split_csv, write_cluster_csv, write_split_csv,
)
from .ingest import (
    filter_outlier_stations, load_station_csv, offsets_from_stations, read_offsets_csv,
    validate_dataset, write_offsets_csv,
)
from .inference import (
    ExtrapolationRequest, bench_inference, evaluate_stations, extrapolate,
    write_bench_csv, write_corrected_csv, write_eval_csv, write_generated_csv,
)
from .pipeline import select
from .synth import FieldSpec, generate_dataset, write_dataset
from .sweep import SweepGrid, run_sweep, write_summary_csv, write_sweep_csv
from .training import TrainConfig, fit, read_config_file

log = logging.getLogger("surge_extrap")


class CliError(Exception):
    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


def _need(path, what):
    if not path or not os.path.exists(path):
        raise CliError("missing_input", f"{what} not found: {path}")
    return path


def _ints(text):
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _train_config(args):
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(_need(args.config, "config file")))
    flag_map = {
        "layers": "n_layers", "neurons": "hidden", "epochs": "epochs", "ae_epochs": "ae_epochs",
        "sup_epochs": "sup_epochs", "batch_size": "batch_size", "lr": "lr",
        "disc_threshold": "disc_threshold", "gen_steps": "gen_steps_per_disc_check",
        "supervisor_space": "supervisor_space", "rows": "rows", "seed": "seed",
    }
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if getattr(args, "fit_on_train", False):
        values["fit_on_train"] = True
    if getattr(args, "truncate", False):
        values["truncate"] = True
    return TrainConfig.from_dict(values)


def cmd_synth(args):
    spec = FieldSpec(n_stations=args.stations, T=args.length, noise_sigma=args.noise,
                     outlier_rate=args.outlier_rate, missing_rate=args.missing_rate,
                     seed=args.seed or 0)
    h = generate_dataset(spec)
    out = _outdir(args.out_dir)
    write_dataset(h, os.path.join(out, "stations.csv"), os.path.join(out, "truth_offsets.csv"))
    log.info("synth: %d stations x %d h, outliers injected: %d", spec.n_stations, spec.T, len(h.outlier_ids))


def cmd_ingest(args):
    stations = load_station_csv(_need(args.stations, "station file"))
    offsets, excluded = offsets_from_stations(stations)
    kept, removed = filter_outlier_stations(offsets, args.iqr_factor)
    summary = validate_dataset(kept)
    out = _outdir(args.out_dir)
    write_offsets_csv(os.path.join(out, "offsets.csv"), kept)
    with open(os.path.join(out, "excluded.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "reason"])
        w.writerows(excluded + removed)
    log.info("ingest: %d stations kept, %d hourly offsets, %d excluded",
             summary.n_stations, summary.total_offsets, len(excluded) + len(removed))


def cmd_cluster(args):
    offsets = read_offsets_csv(_need(args.offsets, "offsets file"))
    points = np.array([[o.lon, o.lat] for o in offsets])
    seed = args.seed or 0
    assignment = cluster_stations(points, seed=seed)
    ids = [o.station_id for o in offsets]
    plan = make_split(ids, assignment, seed=seed)
    out = _outdir(args.out_dir)
    write_cluster_csv(os.path.join(out, "clusters.csv"), ids, assignment)
    write_split_csv(os.path.join(out, "split.csv"), plan)
    log.info("cluster: k=%d, %d train / %d test", assignment.k, len(plan.train_ids), len(plan.test_ids))


def _load_split(args, offsets):
    plan = read_split_csv(_need(args.split, "split file"))
    known = {o.station_id for o in offsets}
    missing = [s for s in plan.train_ids + plan.test_ids if s not in known]
    if missing:
        raise CliError("schema", f"split references unknown stations, e.g. {missing[0]}")
    return select(offsets, plan.train_ids), select(offsets, plan.test_ids), plan


def cmd_train(args):
    offsets = read_offsets_csv(_need(args.offsets, "offsets file"))
    _need(args.split, "split file (run `cluster` first)")
    train, test, _ = _load_split(args, offsets)
    config = _train_config(args)
    log.info("train: config %s seed %d", config.hash(), config.seed)
    bundle = fit(train, test, config)
    out = _outdir(args.out_dir)
    checkpoint.save_bundle(bundle, os.path.join(out, "model.hgan"))
    with open(os.path.join(out, "losses.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phase", "epoch", "loss_name", "value"])
        for r in bundle.history:
            w.writerow([r.phase, r.epoch, r.name, repr(r.value)])


def _read_coords(path):
    coords = []
    with open(_need(path, "coordinate file"), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["lon_deg", "lat_deg"]:
            raise CliError("schema", f"{path}:1: expected header lon_deg,lat_deg")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                coords.append((float(rec[0]), float(rec[1])))
            except (ValueError, IndexError):
                raise CliError("schema", f"{path}:{lineno}: malformed coordinate row") from None
    return coords


def cmd_extrapolate(args):
    bundle = checkpoint.load_bundle(_need(args.model, "model checkpoint"))
    coords = _read_coords(args.coords)
    req = ExtrapolationRequest(coords, args.samples, args.seed or 0)
    series = extrapolate(bundle, req)
    write_generated_csv(args.out, req.coords, series)


def _test_stations(args):
    stations = load_station_csv(_need(args.stations, "station file"))
    plan = read_split_csv(_need(args.split, "split file"))
    test = select(stations, plan.test_ids)
    if not test:
        raise CliError("schema", "split has no test stations present in the station file")
    return test


def cmd_correct(args):
    bundle = checkpoint.load_bundle(_need(args.model, "model checkpoint"))
    test = _test_stations(args)
    _, corrected = evaluate_stations(bundle, test, seed=args.seed or 0, n_draws=args.samples)
    out = _outdir(args.out_dir)
    write_corrected_csv(os.path.join(out, "corrected.csv"), test, corrected, bundle.length)


def cmd_evaluate(args):
    bundle = checkpoint.load_bundle(_need(args.model, "model checkpoint"))
    test = _test_stations(args)
    report, _ = evaluate_stations(bundle, test, seed=args.seed or 0, n_draws=args.samples)
    out = _outdir(args.out_dir)
    write_eval_csv(os.path.join(out, "eval.csv"), report)
    log.info("evaluate: improved %.0f%% of %d stations", 100 * report.improved_fraction, len(test))


def cmd_bench(args):
    bundle = checkpoint.load_bundle(_need(args.model, "model checkpoint"))
    table = bench_inference(bundle, args.counts, seed=args.seed or 0)
    write_bench_csv(args.out, table)


def cmd_sweep(args):
    offsets = read_offsets_csv(_need(args.offsets, "offsets file"))
    train, test, plan = _load_split(args, offsets)
    stations = select(load_station_csv(_need(args.stations, "station file")), plan.test_ids)
    base = _train_config(argparse.Namespace(**{k: v for k, v in vars(args).items()
                                               if k not in ("layers", "neurons", "epochs")}))
    grid = SweepGrid(args.layers, args.neurons, args.epochs, seed=base.seed)
    result = run_sweep(train, test, stations, grid, base)
    out = _outdir(args.out_dir)
    write_sweep_csv(os.path.join(out, "sweep.csv"), result)
    if result.summary:
        write_summary_csv(os.path.join(out, "sweep_summary.csv"), result)
    best = result.winner
    if best is not None:
        log.info("sweep: best %d layers / %d neurons / %d epochs, RMSE %.4f ft",
                 best.layers, best.neurons, best.epochs, best.rmse)


def _add_train_flags(p, lists=False):
    p.add_argument("--config", help="key=value file with training settings")
    p.add_argument("--fit-on-train", action="store_true",
                   help="normalize test offsets with the training scaler")
    p.add_argument("--truncate", action="store_true", help="drop trailing values that do not fill a row")
    p.add_argument("--rows", type=int, help="rows of the offset matrix (default: from series length)")
    p.add_argument("--batch-size", type=int)
    if lists:
        p.add_argument("--layers", type=_ints, default=(4, 5), help="comma-separated layer counts")
        p.add_argument("--neurons", type=_ints, default=(128, 256), help="comma-separated GRU widths")
        p.add_argument("--epochs", type=_ints, default=(2000, 3000, 4000), help="comma-separated joint epochs")
    else:
        p.add_argument("--layers", type=int, help="GRU layers in embedder/recovery/generator")
        p.add_argument("--neurons", type=int, help="GRU width")
        p.add_argument("--epochs", type=int, help="joint-phase epochs")
    p.add_argument("--ae-epochs", type=int, help="autoencoder epochs (default epochs/2)")
    p.add_argument("--sup-epochs", type=int, help="supervisor epochs (default epochs/2)")
    p.add_argument("--lr", type=float)
    p.add_argument("--disc-threshold", type=float, help="train discriminator only above this loss")
    p.add_argument("--gen-steps", type=int, help="generator updates per discriminator check")
    p.add_argument("--supervisor-space", choices=("latent", "data"))


def build_parser():
    parser = argparse.ArgumentParser(prog="surge-extrap", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int, default=None, help="global random seed")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "write a synthetic hurricane (stations.csv, truth_offsets.csv)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stations", type=int, default=60)
    p.add_argument("--length", type=int, default=40, help="hours per station")
    p.add_argument("--noise", type=float, default=0.05, help="offset noise sigma (ft)")
    p.add_argument("--outlier-rate", type=float, default=0.0)
    p.add_argument("--missing-rate", type=float, default=0.0)

    p = add("ingest", cmd_ingest, "compute offsets, drop incomplete/outlier stations")
    p.add_argument("--stations", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--iqr-factor", type=float, default=3.0)

    p = add("cluster", cmd_cluster, "k-means stations and write the train/test split")
    p.add_argument("--offsets", required=True)
    p.add_argument("--out-dir", required=True)

    p = add("train", cmd_train, "train the model (model.hgan, losses.csv)")
    p.add_argument("--offsets", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out-dir", required=True)
    _add_train_flags(p)

    p = add("extrapolate", cmd_extrapolate, "generate offsets at arbitrary coordinates")
    p.add_argument("--model", required=True)
    p.add_argument("--coords", required=True, help="CSV with lon_deg,lat_deg")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=1, help="noise draws averaged per coordinate")

    for name, func, help_ in (("correct", cmd_correct, "bias-correct test station forecasts"),
                              ("evaluate", cmd_evaluate, "score corrected vs raw forecasts")):
        p = add(name, func, help_)
        p.add_argument("--model", required=True)
        p.add_argument("--stations", required=True)
        p.add_argument("--split", required=True)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--samples", type=int, default=1)

    p = add("bench", cmd_bench, "time sequential extrapolation")
    p.add_argument("--model", required=True)
    p.add_argument("--counts", type=_ints, default=(10, 100, 1000))
    p.add_argument("--out", required=True)

    p = add("sweep", cmd_sweep, "grid search over layers, neurons and epochs")
    p.add_argument("--offsets", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--stations", required=True)
    p.add_argument("--out-dir", required=True)
    _add_train_flags(p, lists=True)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log.info("command=%s seed=%s", args.command, args.seed)
    try:
        args.func(args)
    except CliError as exc:
        print(f"error kind={exc.kind} message={exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        kind = type(exc).__name__
        msg = str(exc).replace("\n", " ")
        print(f"error kind={kind} message={msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
