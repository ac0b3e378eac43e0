"""Command-line driver: ``qostrust {ingest,train,identify,experiment}``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import datasets as ds
from . import evaluation as ev
from . import network as nw
from . import pipeline as pl
from .config import CONFIG_DIR_ENV, LAYOUTS, ConfigError, RunConfig, data_source, load_config
from .qos_model import ServiceLevel, TrustLabel

log = logging.getLogger("qostrust")


class CommandError(Exception):
    pass


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _read_text(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _dataset_text(schema, records) -> str:
    buf = io.StringIO()
    ds.write_dataset(buf, schema, records)
    return buf.getvalue()


def _load_records(cfg: RunConfig, input_path: Optional[str]) -> tuple[list, int]:
    """Records from the configured source, plus the number of rejected rows."""
    if cfg.dataset.source == "synthetic" and input_path is None:
        return ds.synthesize(cfg.synthetic_spec()), 0
    path = Path(input_path) if input_path else cfg.dataset.path
    parsed = ds.parse_qws(io.StringIO(_read_text(path)), cfg.schema, LAYOUTS[cfg.dataset.layout])
    for line, why in parsed.rejected:
        print(f"{path}:{line}: rejected: {why}", file=sys.stderr)
    return parsed.records, len(parsed.rejected)


def _split_paths(output: Path) -> tuple[Path, Path]:
    return output.with_name(output.stem + ".train.csv"), output.with_name(output.stem + ".test.csv")


def cmd_ingest(cfg: RunConfig, args) -> int:
    records, rejected = _load_records(cfg, args.input)
    output = Path(args.output) if args.output else Path(args.out) / "dataset.csv"
    if records:
        records = [r if r.trust_label is not None else _trusted(r) for r in records]
        records, _ = ds.inject_malicious(records, cfg.schema, cfg.adversary)
    _write(output, _dataset_text(cfg.schema, records))
    if records and not args.no_split:
        train, test = ds.split(records, cfg.dataset.split, ev.derive_seed(cfg.seed, 2))
        train_path, test_path = _split_paths(output)
        _write(train_path, _dataset_text(cfg.schema, train))
        _write(test_path, _dataset_text(cfg.schema, test))
    print(f"{len(records)} records, {rejected} rejected")
    return 0


def _trusted(record):
    return replace(record, trust_label=TrustLabel.TRUSTWORTHY)


def _read_dataset(path: Path, schema) -> list:
    try:
        return ds.read_dataset(io.StringIO(_read_text(path)), schema)
    except ValueError as exc:
        raise CommandError(f"{path}: {exc}") from exc


def cmd_train(cfg: RunConfig, args) -> int:
    records = _read_dataset(Path(args.dataset), cfg.schema)
    try:
        model = pl.train_pipeline(records, cfg.schema, cfg.pipeline)
    except (nw.DivergenceError, pl.EmptyCategoryError) as exc:
        raise CommandError(f"training failed: {exc}") from exc
    except ValueError as exc:
        raise CommandError(str(exc)) from exc
    output = Path(args.model) if args.model else Path(args.out) / "model.json"
    _write(output, model.dumps())
    tcfg = cfg.pipeline.training
    epochs, final = len(model.history), model.history[-1]
    status = "reached acceptable_error" if final <= tcfg.acceptable_error else "stopped at max_epochs"
    print(f"epochs: {epochs} ({status})")
    print(f"final {tcfg.stop_metric.value}: {final:.6f}")
    for level in ServiceLevel:
        ident = model.identifiers[level]
        if isinstance(ident.model, TrustLabel):
            counts = f"constant {ident.model.name.lower()}"
        else:
            c = ident.model.counts()
            counts = f"untrustworthy={c['untrustworthy']} trustworthy={c['trustworthy']}"
        pooled = " (pooled)" if level in model.pooled_levels else ""
        print(f"{level.name.lower()}: {counts}{pooled}")
    return 0


def cmd_identify(cfg: RunConfig, args) -> int:
    try:
        model = pl.PipelineModel.loads(_read_text(Path(args.model)))
    except (ValueError, KeyError) as exc:
        raise CommandError(f"{args.model}: not a usable model ({exc})") from exc
    records = _read_dataset(Path(args.dataset), model.schema)
    try:
        results = pl.identify_records(model, records)
    except ValueError as exc:
        raise CommandError(f"dataset does not fit the model schema: {exc}") from exc
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["service_id", "level", "label", "p_1", "p_2"])
    for r, (level, v) in zip(records, results):
        writer.writerow([r.service_id, level.name.lower(), v.label.name.lower(), repr(v.p_untrustworthy), repr(v.p_trustworthy)])
    output = Path(args.output) if args.output else Path(args.out) / "verdicts.csv"
    _write(output, buf.getvalue())
    print(f"{len(results)} verdicts written to {output}")
    if records and all(r.trust_label is not None for r in records):
        ratio = ev.identification_ratio([v.label for _, v in results], [r.trust_label for r in records])
        print(f"identification ratio: {ratio:.4f}")
    return 0


def cmd_experiment(cfg: RunConfig, args) -> int:
    records = None
    if cfg.dataset.source == "qws":
        records, _ = _load_records(cfg, None)
    source = data_source(cfg, records)
    exp = cfg.experiment
    on_error = "skip" if args.skip_failed else "raise"
    common = dict(config=cfg.pipeline, trials=exp.trials, seed=cfg.seed, ideal=exp.ideal, on_error=on_error)
    try:
        if exp.axis in ("malicious_service_ratio", "malicious_feedback_ratio"):
            report = ev.sweep_malicious(source, exp.grid, adversary=cfg.adversary, axis=exp.axis, **common)
        elif exp.axis == "sigma":
            report = ev.sweep_sigma(
                source, exp.grid, adversary=cfg.adversary,
                learning_rate=cfg.pipeline.training.learning_rate, **common,
            )
        else:
            report = ev.sweep_learning_rate(
                source, exp.grid, adversary=cfg.adversary, target=exp.target,
                max_epochs=exp.max_epochs, **common,
            )
    except nw.DivergenceError as exc:
        raise CommandError(f"a trial diverged ({exc}); rerun with --skip-failed to drop it") from exc
    report.settings["run_config"] = cfg.fingerprint()
    out = Path(args.out)
    for suffix, text in (("csv", report.to_csv()), ("json", report.to_json()), ("dat", report.to_gnuplot())):
        _write(out / f"{exp.axis}.{suffix}", text)
    sys.stdout.write(report.to_csv())
    if report.annotations:
        where = "interior" if report.annotations["interior"] else "boundary"
        print(f"# minimum MAE at {exp.axis}={report.annotations['argmin']:g} ({where})")
    return 0


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "identify": cmd_identify, "experiment": cmd_experiment}


GLOBAL_DEFAULTS = {"config": None, "seed": None, "out": ".", "verbose": False}


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; SUPPRESS keeps
    # the subparser from overwriting a value given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help=f"run config (TOML); default from ${CONFIG_DIR_ENV} or the bundled one")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override dataset.seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: current directory)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="qostrust", description="QoS-based trust identification", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse or synthesize a dataset, inject adversaries, split")
    p.add_argument("input", nargs="?", help="QWS-style input file (default: dataset.path or the synthetic generator)")
    p.add_argument("-o", "--output", help="dataset file (default: OUT/dataset.csv)")
    p.add_argument("--no-split", action="store_true", help="skip writing the train/test split files")

    p = sub.add_parser("train", parents=[common], help="train the two-phase model")
    p.add_argument("dataset")
    p.add_argument("-o", "--model", help="model file (default: OUT/model.json)")

    p = sub.add_parser("identify", parents=[common], help="trust verdicts for a dataset")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("-o", "--output", help="verdict table (default: OUT/verdicts.csv)")

    p = sub.add_parser("experiment", parents=[common], help="run the configured sweep")
    p.add_argument("--skip-failed", action="store_true", help="drop diverged trials instead of failing")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, args.seed)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, CommandError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
