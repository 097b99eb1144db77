"""Command-line entry point: ``mimo-lab sweep`` and ``mimo-lab summarize``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from .harness import RECEIVERS, RunConfig, load_config, read_csv, run_ber_sweep, write_csv
from .report import summarize


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _float_list(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()]


def _int_list(text: str) -> list:
    return [int(s) for s in text.split(",") if s.strip()]


def _receivers(text: str) -> list:
    names = [s.strip().lower() for s in text.split(",") if s.strip()]
    bad = [n for n in names if n not in RECEIVERS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown receivers {bad}; choose from {','.join(RECEIVERS)}")
    return names


# flag dest -> (config attribute path)
_OVERRIDES = {
    "mt": ("M_T",),
    "mr": ("M_R",),
    "modulation": ("modulation",),
    "N": ("N",),
    "K": ("K",),
    "snr_db_list": ("snr_db_list",),
    "perfect_csi": ("perfect_csi",),
    "pilot_len": ("pilot_len",),
    "receivers": ("receivers",),
    "iters": ("iterations",),
    "packets": ("packets_per_point",),
    "realizations": ("channel_realizations",),
    "seed": ("seed",),
    "workers": ("workers",),
    "early_stop": ("early_stop_errors",),
    "epochs": ("dnn", "epochs"),
    "train_snr_db": ("dnn", "train_snr_db"),
    "lr": ("dnn", "lr"),
    "resample_noise": ("dnn", "resample_noise"),
    "channel_features": ("dnn", "channel_features"),
    "hidden_widths": ("dnn", "hidden_widths"),
    "model_out": ("model_out",),
    "model_in": ("model_in",),
    "out": ("output_dir",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimo-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="run a Monte-Carlo BER sweep")
    sweep.add_argument("--config", help="YAML/JSON run configuration")
    sweep.add_argument("--out", help="output directory (results.csv, manifest.json)")
    sweep.add_argument("--mt", type=int)
    sweep.add_argument("--mr", type=int)
    sweep.add_argument("--modulation", choices=["bpsk", "qpsk"])
    sweep.add_argument("--N", type=int, dest="N")
    sweep.add_argument("--K", type=int, dest="K")
    sweep.add_argument("--snr-db-list", type=_float_list, help="comma separated, 'inf' allowed")
    sweep.add_argument("--perfect-csi", type=_bool)
    sweep.add_argument("--pilot-len", type=int)
    sweep.add_argument("--receivers", type=_receivers, help="subset of linear,iterative,oracle,dnn")
    sweep.add_argument("--iters", type=int)
    sweep.add_argument("--packets", type=int, help="packets per (realization, SNR) point")
    sweep.add_argument("--realizations", type=int)
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--early-stop", type=int, help="stop a point once every receiver has this many bit errors")
    sweep.add_argument("--epochs", type=int)
    sweep.add_argument("--train-snr-db", type=float)
    sweep.add_argument("--lr", type=float)
    sweep.add_argument("--resample-noise", type=_bool, nargs="?", const=True)
    sweep.add_argument("--channel-features", type=_bool)
    sweep.add_argument("--hidden-widths", type=_int_list)
    sweep.add_argument("--model-out", help="directory for per-realization checkpoints")
    sweep.add_argument("--model-in", help="checkpoint to use instead of training")
    sweep.add_argument("--target-ber", type=float, default=1e-4)

    summ = sub.add_parser("summarize", help="tabulate a results.csv")
    summ.add_argument("csv")
    summ.add_argument("--target-ber", type=float, default=1e-4)
    summ.add_argument("--reference")
    summ.add_argument("--table-out", help="write the plot-ready table as CSV")
    return parser


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    data = config.to_dict()
    for dest, path in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        target = data
        for key in path[:-1]:
            target = target[key]
        target[path[-1]] = value
    return RunConfig.from_dict(data)


def _cmd_sweep(args) -> int:
    config_bytes = None
    if args.config:
        with open(args.config, "rb") as fh:
            config_bytes = fh.read()
        config = load_config(args.config)
    else:
        config = RunConfig()
    config = _apply_overrides(config, args)

    os.makedirs(config.output_dir, exist_ok=True)
    records, manifest = run_ber_sweep(config, config_bytes)
    csv_path = os.path.join(config.output_dir, "results.csv")
    write_csv(records, csv_path)
    with open(os.path.join(config.output_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    print(summarize(records, args.target_ber).text)
    if manifest["failures"]:
        for failure in manifest["failures"]:
            print(f"realization {failure['realization']} failed: {failure['error']}", file=sys.stderr)
        return 1
    return 0


def _cmd_summarize(args) -> int:
    summary = summarize(read_csv(args.csv), args.target_ber, args.reference)
    print(summary.text)
    if args.table_out:
        with open(args.table_out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(summary.table[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(summary.table)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command == "sweep":
        return _cmd_sweep(args)
    return _cmd_summarize(args)


if __name__ == "__main__":
    sys.exit(main())
