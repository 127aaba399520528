"""Command-line entry points.

Subcommands: datagen | train | eval | gradcheck | report.  Exit codes:
0 success, 1 failed check or failed run, 2 usage / bad config.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import gradcheck as gc
from .data import (LabeledSet, SyntheticShiftSpec, UnlabeledSet,
                   gen_battery_curves, make_cubic_shift_pair, read_vector_csv,
                   write_battery_csv, write_vector_csv)
from .metrics import (MetricsRow, RunManifest, build_report_table, evaluate,
                      fingerprint_array, fingerprint_file, read_metrics_csv,
                      write_metrics_csv, write_report_csv)
from .models import MlpSpec, load_checkpoint, save_checkpoint
from .train import HISTORY_COLUMNS, TrainConfig, train_uga

__all__ = ["main"]


class UsageError(Exception):
    """Bad invocation or bad config; maps to exit code 2."""


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="uga",
        description="Evidential regression with uncertainty-guided "
                    "domain alignment.")
    sub = p.add_subparsers(dest="command", required=True)

    dg = sub.add_parser("datagen", help="generate synthetic datasets")
    dg.add_argument("--kind", required=True, choices=("cubic", "battery"))
    dg.add_argument("--out", required=True,
                    help="output directory (cubic) or CSV file (battery)")
    dg.add_argument("--seed", type=int, default=0)
    dg.add_argument("--n", type=int, default=2000,
                    help="samples per domain (cubic)")
    dg.add_argument("--shift", type=float, default=2.0,
                    help="target input shift (cubic)")
    dg.add_argument("--scale", type=float, default=1.0,
                    help="target input scale (cubic)")
    dg.add_argument("--noise", type=float, default=0.05,
                    help="label noise standard deviation (cubic)")
    dg.add_argument("--temp", type=float, default=25.0,
                    help="ambient temperature in Celsius (battery)")
    dg.add_argument("--cycles", type=int, default=6,
                    help="number of discharge cycles (battery)")
    dg.add_argument("--capacity-ah", type=float, default=0.5,
                    help="cell capacity in Ah (battery)")
    dg.add_argument("--hz", type=float, default=10.0,
                    help="raw sampling rate (battery)")

    tr = sub.add_parser("train", help="run the training loop")
    tr.add_argument("--config", required=True, help="TrainConfig JSON file")
    tr.add_argument("--source", required=True, help="labeled vector CSV")
    tr.add_argument("--target", default=None,
                    help="vector CSV; labels, if present, are ignored")
    tr.add_argument("--out-dir", required=True)
    tr.add_argument("--hidden", default="32,32",
                    help="comma-separated hidden layer widths")
    tr.add_argument("--dropout", type=float, default=0.1)
    tr.add_argument("--activation", default="tanh")

    ev = sub.add_parser("eval", help="score a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="labeled vector CSV")
    ev.add_argument("--out", required=True, help="metrics CSV to write")
    ev.add_argument("--task", required=True)
    ev.add_argument("--method", required=True)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--reference", default=None,
                    help="vector CSV of source inputs for the posterior gap")

    gr = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    gr.add_argument("--seed", type=int, default=0)

    rp = sub.add_parser("report", help="join metrics files into one table")
    rp.add_argument("metrics", nargs="+", help="metrics CSV files")
    rp.add_argument("--out", required=True)
    rp.add_argument("--metric", default="mae")
    return p


def _load_labeled(path) -> LabeledSet:
    try:
        x, y = read_vector_csv(path)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from None
    except ValueError as e:
        raise UsageError(f"{path}: {e}") from None
    if y is None:
        raise UsageError(f"{path}: missing label column y")
    return LabeledSet(x, y)


def _load_inputs(path) -> np.ndarray:
    try:
        x, _ = read_vector_csv(path)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from None
    except ValueError as e:
        raise UsageError(f"{path}: {e}") from None
    return x


def _cmd_datagen(args) -> int:
    if args.kind == "battery":
        series = gen_battery_curves(args.temp, args.cycles, args.seed,
                                    capacity_ah=args.capacity_ah, hz=args.hz)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_battery_csv(series, out)
        print(f"wrote {sum(len(s) for s in series)} rows to {out}")
        return 0

    src_spec = SyntheticShiftSpec(n=args.n, noise_sd=args.noise,
                                  seed=args.seed)
    tgt_spec = SyntheticShiftSpec(shift=args.shift, scale=args.scale,
                                  n=args.n, noise_sd=args.noise,
                                  seed=args.seed + 1)
    source, target, bounds = make_cubic_shift_pair(src_spec, tgt_spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_vector_csv(out / "source.csv", source.inputs, source.labels)
    write_vector_csv(out / "target.csv", target.inputs, target.labels)
    with open(out / "bounds.json", "w") as f:
        json.dump({"lo": bounds.lo, "hi": bounds.hi}, f)
        f.write("\n")
    print(f"wrote source.csv and target.csv ({args.n} rows each) to {out}")
    return 0


def _write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row.iteration, repr(row.supervised),
                             repr(row.alignment), repr(row.lam)])


def _cmd_train(args) -> int:
    try:
        cfg_text = Path(args.config).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config: {e}") from None
    try:
        cfg = TrainConfig.from_json(cfg_text)
    except (ValueError, TypeError) as e:
        raise UsageError(f"bad config: {e}") from None

    source = _load_labeled(args.source)
    if args.target is not None:
        target = UnlabeledSet(_load_inputs(args.target))
    else:
        target = UnlabeledSet(np.zeros((0, source.inputs.shape[1])))

    try:
        hidden = tuple(int(w) for w in args.hidden.split(","))
        spec = MlpSpec(layer_widths=(source.inputs.shape[1], *hidden),
                       activation=args.activation, dropout_p=args.dropout)
    except ValueError as e:
        raise UsageError(f"bad model flags: {e}") from None

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    try:
        bundle, history = train_uga(source, target, cfg, spec)
    except (ValueError, RuntimeError) as e:
        print(f"training failed: {e}", file=sys.stderr)
        return 1
    elapsed = time.monotonic() - started

    save_checkpoint(bundle, out_dir / "checkpoint.bin")
    _write_history_csv(out_dir / "history.csv", history)
    fingerprints = {"source": fingerprint_array(source.inputs),
                    "source_labels": fingerprint_array(source.labels)}
    if len(target):
        fingerprints["target"] = fingerprint_array(target.inputs)
    manifest = RunManifest.create(config=json.loads(cfg.to_json()),
                                  seed=cfg.seed, fingerprints=fingerprints,
                                  wall_clock_s=elapsed)
    manifest.save(out_dir / "manifest.json")
    print(f"trained {cfg.iterations} iterations "
          f"({cfg.alignment.value}); artifacts in {out_dir}")
    return 0


def _cmd_eval(args) -> int:
    try:
        bundle = load_checkpoint(args.checkpoint)
    except OSError as e:
        raise UsageError(f"cannot read checkpoint: {e}") from None
    except ValueError as e:
        raise UsageError(f"bad checkpoint: {e}") from None
    dataset = _load_labeled(args.data)
    reference = _load_inputs(args.reference) if args.reference else None

    started = time.monotonic()
    report = evaluate(bundle, dataset, reference_inputs=reference)
    elapsed = time.monotonic() - started

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out, [MetricsRow(args.task, args.method, args.seed,
                                       report)])
    fingerprints = {"data": fingerprint_array(dataset.inputs),
                    "labels": fingerprint_array(dataset.labels),
                    "checkpoint": fingerprint_file(args.checkpoint)}
    if reference is not None:
        fingerprints["reference"] = fingerprint_array(reference)
    manifest = RunManifest.create(
        config={"checkpoint": str(args.checkpoint), "data": str(args.data),
                "task": args.task, "method": args.method},
        seed=args.seed, fingerprints=fingerprints, wall_clock_s=elapsed,
        metrics_file=out.name)
    manifest.save(out.with_suffix(".manifest.json"))
    print(f"wrote {out} (task={args.task} method={args.method} "
          f"mae={report.mae:.6g})")
    return 0


def _cmd_gradcheck(args) -> int:
    results = gc.run_all(seed=args.seed)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<14} error={r.error:.3e}  tol={r.tol:.0e}  {status}")
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} suites failed")
        return 1
    print(f"all {len(results)} suites passed")
    return 0


def _cmd_report(args) -> int:
    rows = []
    for path in args.metrics:
        try:
            rows.extend(read_metrics_csv(path))
        except OSError as e:
            raise UsageError(f"cannot read {path}: {e}") from None
        except ValueError as e:
            raise UsageError(f"{path}: {e}") from None
    try:
        header, table = build_report_table(rows, metric=args.metric)
    except ValueError as e:
        raise UsageError(str(e)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(out, header, table)
    print(f"wrote {out}: {len(table)} tasks x {len(header) - 1} methods")
    return 0


_COMMANDS = {
    "datagen": _cmd_datagen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on unknown subcommands or bad flags, 0 on --help
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
