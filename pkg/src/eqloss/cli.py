"""Command line experiment runner.

    eqloss generate  [--config F] [--seed N] [--out DIR]
    eqloss train     [--config F] [--seed N] [--out DIR] [--lambda auto|X] [--grid] [--plot]
    eqloss stats     [--config F] [--seed N] [--out DIR] [--lambda auto|X] [--gnuplot] [--plot]
    eqloss ensemble  PRIMARY.json [--expert F ...] --table categories.json [--out DIR]

Exit codes: 0 success, 1 validation error, 2 runtime or divergence error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .config import ExperimentConfig
from .ensemble import (
    dump_detections,
    load_detections,
    merge_shared_categories,
    rescore_per_image,
)
from .errors import InvalidInputError, TrainingDivergedError
from .sampling import generate_holdout, generate_synthetic, load_dataset, save_dataset
from .stats import dataset_valid_stats, max_group_ratio, write_gnuplot, write_stats_csv
from .taxonomy import CategoryTable, Group, build_category_table
from .trainer import evaluate, resolve_lambda, train

logger = logging.getLogger("eqloss")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

LOG_COLUMNS = ("epoch", "mean_loss", "acc_overall", "acc_r", "acc_c", "acc_f")
ABLATION_COLUMNS = ("loss", "sampler", "ignore", "acc_overall", "acc_r", "acc_c", "acc_f")


def _parse_lambda(text: str):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a number, got {text!r}") from None
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError("lambda must lie in [0, 1]")
    return value


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1, allow_nan=False) + "\n")


def _fmt(v):
    return "" if v is None else v


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def load_config(args) -> ExperimentConfig:
    """Config file values overlaid with command-line flags (flags win)."""
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if args.out is not None:
        d["out"] = args.out
    overrides = {
        "synthetic": {
            "num_images": getattr(args, "num_images", None),
            "num_categories": getattr(args, "num_categories", None),
            "zipf_exponent": getattr(args, "zipf_exponent", None),
        },
        "train": {
            "lam": getattr(args, "lam", None),
            "loss_kind": getattr(args, "loss", None),
            "sampler_kind": getattr(args, "sampler", None),
            "ignore_enabled": getattr(args, "ignore", None),
            "epochs": getattr(args, "epochs", None),
            "learning_rate": getattr(args, "learning_rate", None),
            "batch_size": getattr(args, "batch_size", None),
        },
        "rescore": {
            "alpha_rare": getattr(args, "alpha_rare", None),
            "alpha_common": getattr(args, "alpha_common", None),
            "top_k": getattr(args, "top_k", None),
            "score_floor": getattr(args, "score_floor", None),
        },
    }
    for section, values in overrides.items():
        d[section].update({k: v for k, v in values.items() if v is not None})
    return ExperimentConfig.from_dict(d)


def _datasets(cfg: ExperimentConfig, data_dir):
    if data_dir:
        root = Path(data_dir)
        train_ds = load_dataset(root / "train")
        holdout = load_dataset(root / "holdout")
    else:
        train_ds = generate_synthetic(cfg.synthetic)
        holdout = generate_holdout(cfg.synthetic, cfg.holdout_per_category)
    table = build_category_table(train_ds.images, train_ds.num_categories, cfg.group_bounds)
    return train_ds, holdout, table


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    cfg = load_config(args)
    train_ds = generate_synthetic(cfg.synthetic)
    holdout = generate_holdout(cfg.synthetic, cfg.holdout_per_category)
    table = build_category_table(train_ds.images, cfg.synthetic.num_categories, cfg.group_bounds)
    out = _out_dir(cfg)
    save_dataset(train_ds, out / "train")
    save_dataset(holdout, out / "holdout")
    table.save(out / "categories.json")
    _write_json(out / "config.json", cfg.to_dict())

    sizes = table.group_sizes()
    print(f"wrote {out}: {len(train_ds.images)} images, {train_ds.num_samples} samples, "
          f"{table.num_categories} categories")
    print("categories per group: " + ", ".join(f"{g}={n}" for g, n in sizes.items()))
    print(f"holdout: {len(holdout.images)} images, {holdout.num_samples} samples")
    return EXIT_OK


def run_cell(train_ds, holdout, table, tcfg):
    """Train one configuration; returns (training log rows, final report, lambda)."""
    log = []

    def on_epoch(epoch, params, mean_loss):
        r = evaluate(params, holdout, table)
        log.append({"epoch": epoch, "mean_loss": mean_loss, "acc_overall": r.overall,
                    "acc_r": r.rare, "acc_c": r.common, "acc_f": r.frequent})

    params = train(train_ds, table, tcfg, on_epoch=on_epoch)
    report = evaluate(params, holdout, table)
    lam = resolve_lambda(tcfg.lam, table) if tcfg.loss_kind == "eql" else None
    return log, report, lam


def _report_payload(name, tcfg, report, lam, log):
    train_cfg = asdict(tcfg)
    return {
        "cell": name,
        "train": train_cfg,
        "lambda": None if lam is None else {"value": float(lam), "exact": str(lam)},
        "final_mean_loss": log[-1]["mean_loss"],
        "eval": report.to_json(),
    }


def cell_name(tcfg) -> str:
    return f"{tcfg.loss_kind}-{tcfg.sampler_kind}-{'ignore' if tcfg.ignore_enabled else 'plain'}"


def grid_configs(base):
    return [
        replace(base, loss_kind=loss, sampler_kind=sampler, ignore_enabled=ignore)
        for loss in ("sigmoid_ce", "eql")
        for sampler in ("uniform", "class_aware")
        for ignore in (False, True)
    ]


def cmd_train(args) -> int:
    cfg = load_config(args)
    train_ds, holdout, table = _datasets(cfg, args.data)
    out = _out_dir(cfg)
    plotting = _plotting() if args.plot else None

    if not args.grid:
        log, report, lam = run_cell(train_ds, holdout, table, cfg.train)
        _write_csv(out / "train_log.csv", LOG_COLUMNS, log)
        _write_json(out / "report.json", _report_payload(cell_name(cfg.train), cfg.train, report, lam, log))
        if plotting:
            plotting.plot_training_log(log, out / "train_log.png")
        print(f"{cell_name(cfg.train)}: overall={report.overall:.4f} rare={_show(report.rare)} "
              f"common={_show(report.common)} frequent={_show(report.frequent)}")
        return EXIT_OK

    cells = grid_configs(cfg.train)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(run_cell, train_ds, holdout, table, t) for t in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(train_ds, holdout, table, t) for t in cells]

    rows = []
    for tcfg, (log, report, lam) in zip(cells, results):
        cell_dir = out / "cells" / cell_name(tcfg)
        cell_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(cell_dir / "train_log.csv", LOG_COLUMNS, log)
        _write_json(cell_dir / "report.json", _report_payload(cell_name(tcfg), tcfg, report, lam, log))
        rows.append({"loss": tcfg.loss_kind, "sampler": tcfg.sampler_kind,
                     "ignore": int(tcfg.ignore_enabled), "acc_overall": report.overall,
                     "acc_r": report.rare, "acc_c": report.common, "acc_f": report.frequent})
        print(f"{cell_name(tcfg):32s} overall={report.overall:.4f} rare={_show(report.rare)} "
              f"common={_show(report.common)} frequent={_show(report.frequent)}")
    _write_csv(out / "ablation.csv", ABLATION_COLUMNS, rows)
    if plotting:
        plotting.plot_ablation(rows, out / "ablation.png")
    return EXIT_OK


def _show(v):
    return "n/a" if v is None else f"{v:.4f}"


def _ratio_json(v: float):
    return "inf" if v == float("inf") else v


def cmd_stats(args) -> int:
    cfg = load_config(args)
    train_ds, _, table = _datasets(cfg, args.data)
    out = _out_dir(cfg)
    lam = resolve_lambda(cfg.train.lam, table)
    plain = dataset_valid_stats(train_ds, table, 0)
    eql = dataset_valid_stats(train_ds, table, lam)

    write_stats_csv(plain, table, out / "stats_lambda0.csv")
    write_stats_csv(eql, table, out / "stats_eql.csv")
    summary = {"lambda": {"value": float(lam), "exact": str(lam)},
               "valid_positive_identical": plain.valid_positive == eql.valid_positive,
               "max_ratio": {}}
    for g in Group:
        if table.members(g):
            summary["max_ratio"][str(g)] = {
                "lambda0": _ratio_json(max_group_ratio(plain, table, g)),
                "eql": _ratio_json(max_group_ratio(eql, table, g)),
            }
    summary["valid_negative_removed"] = sum(plain.valid_negative) - sum(eql.valid_negative)
    _write_json(out / "stats_delta.json", summary)
    if args.gnuplot:
        write_gnuplot(plain, table, out / "stats_lambda0.dat")
        write_gnuplot(eql, table, out / "stats_eql.dat")
    if args.plot:
        _plotting().plot_valid_stats(plain, eql, table, out / "valid_samples.png")

    for g, vals in summary["max_ratio"].items():
        print(f"max neg/pos ratio, {g}: lambda=0 {vals['lambda0']}  eql {vals['eql']}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    cfg = load_config(args)
    table = CategoryTable.load(args.table)
    dets = load_detections(args.primary, source="primary")
    for path in args.expert:
        expert = load_detections(path, source=Path(path).stem)
        shared = set(range(1, table.num_categories + 1)) if args.shared is None else args.shared
        before = len(dets)
        dets = merge_shared_categories(dets, expert, shared)
        dropped = len(expert) - (len(dets) - before)
        if dropped:
            print(f"{path}: dropped {dropped} detections outside the shared categories")
    for d in dets:
        table.group(d.category)  # range check before ordering
    ordered = rescore_per_image(dets, table, cfg.rescore)
    out = _out_dir(cfg)
    dump_detections(ordered, out / "ensemble.json")
    print(f"wrote {len(ordered)} of {len(dets)} detections to {out / 'ensemble.json'}")
    return EXIT_OK


def _plotting():
    try:
        from . import plotting
    except ImportError as exc:
        raise InvalidInputError(f"--plot needs matplotlib ({exc})") from exc
    return plotting


def _parse_ids(text: str) -> set[int]:
    try:
        return {int(t) for t in text.split(",") if t.strip()}
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated category ids, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors: exit 1, keeping 2 for runtime failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eqloss", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--seed", type=int, help="root seed for all randomness")
    common.add_argument("--out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[common], help="write a synthetic long-tail dataset")
    gen.add_argument("--num-images", type=int)
    gen.add_argument("--num-categories", type=int)
    gen.add_argument("--zipf-exponent", type=float)
    gen.set_defaults(func=cmd_generate)

    data = _Parser(add_help=False)
    data.add_argument("--data", help="dataset directory written by 'generate' (default: generate in memory)")
    data.add_argument("--lambda", dest="lam", type=_parse_lambda, help="EQL frequency threshold: auto or a number")
    data.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")

    tr = sub.add_parser("train", parents=[common, data], help="train and evaluate")
    tr.add_argument("--grid", action="store_true", help="run the loss x sampler x ignore ablation grid")
    tr.add_argument("--loss", choices=("sigmoid_ce", "eql"))
    tr.add_argument("--sampler", choices=("uniform", "class_aware"))
    tr.add_argument("--ignore", action=argparse.BooleanOptionalAction, default=None)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--learning-rate", type=float)
    tr.add_argument("--batch-size", type=int)
    tr.add_argument("--jobs", type=int, default=1, help="parallel grid cells")
    tr.set_defaults(func=cmd_train)

    st = sub.add_parser("stats", parents=[common, data], help="valid positive/negative sample counts")
    st.add_argument("--gnuplot", action="store_true", help="also write whitespace-separated .dat files")
    st.set_defaults(func=cmd_stats)

    ens = sub.add_parser("ensemble", parents=[common], help="merge and re-score detection files")
    ens.add_argument("primary", help="primary detection JSON")
    ens.add_argument("--expert", action="append", default=[], help="expert detection JSON (repeatable)")
    ens.add_argument("--shared", type=_parse_ids, help="comma-separated shared category ids (default: all)")
    ens.add_argument("--table", required=True, help="category table JSON written by 'generate'")
    ens.add_argument("--alpha-rare", type=float)
    ens.add_argument("--alpha-common", type=float)
    ens.add_argument("--top-k", type=int)
    ens.add_argument("--score-floor", type=float)
    ens.set_defaults(func=cmd_ensemble)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version, usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
