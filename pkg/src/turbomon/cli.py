"""Command-line pipeline driver.

Subcommands: synth, train, detect, evaluate, sweep. Exit codes:
0 success, 2 configuration error, 3 data ingest/quality error,
4 training failure, 5 model/schema mismatch, 6 evaluation misalignment,
1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data import DataQualityError, IngestError
from .pipeline import (ConfigError, PipelineConfig, cmd_detect, cmd_evaluate,
                       cmd_sweep, cmd_synth, cmd_train)
from .training import TrainingError


def _add_common(p):
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--out", required=True, help="output directory")


def _add_overrides(p):
    p.add_argument("--contamination", type=float,
                   help="fraction of training samples removed by refinement")
    p.add_argument("--seq-len", type=int, help="window length")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--no-selection", action="store_true",
                   help="skip the autoencoder/LOF refinement stage")
    p.add_argument("--no-lstm", action="store_true",
                   help="use the dense VAE over flattened windows")
    p.add_argument("--features", choices=["daf", "latent"],
                   help="mixture input: full 3-D features or latent only")
    p.add_argument("--fit-on", choices=["train", "test", "both"],
                   help="which feature set the mixture is fitted on")


def _resolve_config(args) -> PipelineConfig:
    cfg = (PipelineConfig.from_json_file(args.config) if args.config
           else PipelineConfig())
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "contamination", None) is not None:
        cfg.contamination = args.contamination
    if getattr(args, "seq_len", None) is not None:
        cfg.seq_len = args.seq_len
    if getattr(args, "batch_size", None) is not None:
        cfg.batch_size = args.batch_size
    if getattr(args, "no_selection", False):
        cfg.use_selection = False
    if getattr(args, "no_lstm", False):
        cfg.use_lstm = False
    if getattr(args, "features", None):
        cfg.feature_mode = "daf" if args.features == "daf" else "latent_only"
    if getattr(args, "fit_on", None):
        cfg.fit_on = args.fit_on
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="turbomon",
        description="Unsupervised sensor-series anomaly detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic train/test CSVs")
    _add_common(p)

    p = sub.add_parser("train", help="train refinement + VAE models")
    _add_common(p)
    _add_overrides(p)
    p.add_argument("--train-csv", required=True)

    p = sub.add_parser("detect", help="window test data and emit verdicts")
    _add_common(p)
    _add_overrides(p)
    p.add_argument("--bundle", required=True, help="training output directory")
    p.add_argument("--test-csv", required=True)

    p = sub.add_parser("evaluate", help="score verdicts against labels")
    _add_common(p)
    _add_overrides(p)
    p.add_argument("--verdicts", required=True)
    p.add_argument("--test-csv", required=True)

    p = sub.add_parser("sweep", help="full pipeline per axis value")
    _add_common(p)
    _add_overrides(p)
    p.add_argument("--axis", required=True,
                   choices=["contamination", "seq_len", "batch"])
    p.add_argument("--values", required=True,
                   help="comma-separated axis values")
    p.add_argument("--train-csv", required=True)
    p.add_argument("--test-csv", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "synth":
            summary = cmd_synth(cfg, args.out)
        elif args.command == "train":
            summary = cmd_train(cfg, args.train_csv, args.out)
        elif args.command == "detect":
            summary = cmd_detect(cfg, args.bundle, args.test_csv, args.out)
        elif args.command == "evaluate":
            out_json = f"{args.out}/metrics.json"
            report = cmd_evaluate(cfg, args.verdicts, args.test_csv, out_json)
            summary = {"metrics": out_json, "ac": report.ac, "far": report.far}
        else:
            values = [float(v) if args.axis == "contamination" else int(v)
                      for v in args.values.split(",")]
            rows = cmd_sweep(cfg, args.axis, values, args.train_csv,
                             args.test_csv, args.out)
            summary = {"sweep": f"{args.out}/sweep.csv", "runs": len(rows)}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IngestError, DataQualityError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 4
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        msg = str(exc)
        if "align" in msg:
            print(f"evaluation error: {exc}", file=sys.stderr)
            return 6
        if "features" in msg or "model format" in msg:
            print(f"model error: {exc}", file=sys.stderr)
            return 5
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - single CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
