"""Shared helpers for the experiment scripts."""

import argparse
from pathlib import Path

from qostrust import datasets as ds
from qostrust import evaluation as ev


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--per-level", type=int, default=250, help="services per level cluster")
    return p


def source(args) -> ev.DataSource:
    return ev.DataSource(synthetic=ds.SyntheticSpec(sizes=(args.per_level,) * 4))


def save(report: ev.ExperimentReport, out: Path, stem: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.csv").write_text(report.to_csv())
    (out / f"{stem}.json").write_text(report.to_json())
    (out / f"{stem}.dat").write_text(report.to_gnuplot())
    print(report.to_csv(), end="")
