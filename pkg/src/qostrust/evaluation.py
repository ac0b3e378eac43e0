"""Identification metrics and the sweep harness."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Protocol, Sequence, Union

import numpy as np

from . import datasets as ds
from . import network as nw
from . import pipeline as pl
from .qos_model import (
    AttributeSchema,
    NormalizationContext,
    QosRecord,
    ServiceLevel,
    TrustLabel,
    feature_matrix,
    normalize_matrix,
)


# -- metrics ----------------------------------------------------------------

def identification_ratio(predictions: Sequence, truth: Sequence) -> float:
    """Fraction of services whose predicted trust label equals the truth."""
    predictions, truth = list(predictions), list(truth)
    if not truth:
        raise ValueError("identification ratio needs at least one service")
    if len(predictions) != len(truth):
        raise ValueError("predictions and truth differ in length")
    correct = sum(int(p) == int(t) for p, t in zip(predictions, truth))
    return correct / len(truth)


def mae(ratios: Sequence[float], ideals: Union[float, Sequence[float]] = 1.0) -> float:
    """Mean absolute gap between achieved and ideal identification ratios."""
    ratios = np.asarray(ratios, dtype=np.float64)
    if np.isscalar(ideals):
        ideals = np.full(ratios.shape, float(ideals))
    ideals = np.asarray(ideals, dtype=np.float64)
    if ratios.shape != ideals.shape:
        raise ValueError("ratios and ideals differ in length")
    if ratios.size == 0:
        raise ValueError("mae needs at least one testing sample")
    return float(np.mean(np.abs(ratios - ideals)))


def per_level_ratios(levels: Sequence, predictions: Sequence, truth: Sequence) -> dict[ServiceLevel, tuple[float, int]]:
    """Identification ratio and service count per predicted level."""
    out = {}
    levels = np.asarray([int(lv) for lv in levels])
    predictions = np.asarray([int(p) for p in predictions])
    truth = np.asarray([int(t) for t in truth])
    for level in ServiceLevel:
        mask = levels == level.value
        if mask.any():
            out[level] = (float(np.mean(predictions[mask] == truth[mask])), int(mask.sum()))
    return out


def sample_std(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=np.float64)
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


# -- identifiers ------------------------------------------------------------

class TrustIdentifier(Protocol):
    """Anything that learns trust labels from one split and predicts the other."""

    name: str

    def fit_predict(
        self, train: Sequence[QosRecord], test: Sequence[QosRecord], schema: AttributeSchema
    ) -> "Prediction": ...


@dataclass
class Prediction:
    labels: list[TrustLabel]
    levels: Optional[list[ServiceLevel]] = None
    epochs: int = 0
    reached: bool = True


@dataclass
class TwoPhaseIdentifier:
    config: pl.PipelineConfig = field(default_factory=pl.PipelineConfig)
    name: str = "two-phase"

    def fit_predict(self, train, test, schema) -> Prediction:
        model = pl.train_pipeline(train, schema, self.config)
        out = pl.identify_records(model, test)
        history = model.history
        return Prediction(
            [v.label for _, v in out],
            [lv for lv, _ in out],
            len(history),
            bool(history) and history[-1] <= self.config.training.acceptable_error,
        )


@dataclass
class MajorityIdentifier:
    """Predicts the most common training trust label for every service."""

    name: str = "majority"

    def fit_predict(self, train, test, schema) -> Prediction:
        counts = {lbl: sum(r.trust_label is lbl for r in train) for lbl in TrustLabel}
        # ties go to untrustworthy, like the PNN
        label = max(TrustLabel, key=lambda lbl: (counts[lbl], -lbl.value))
        return Prediction([label] * len(test))


# -- experiment data ----------------------------------------------------------

def derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1)[0])


@dataclass(frozen=True)
class DataSource:
    """Synthetic marketplace, or a fixed record list (e.g. parsed QWS)."""

    synthetic: Optional[ds.SyntheticSpec] = None
    records: Optional[tuple[QosRecord, ...]] = None
    schema: Optional[AttributeSchema] = None

    def __post_init__(self):
        if (self.synthetic is None) == (self.records is None):
            raise ValueError("give exactly one of synthetic or records")
        if self.records is not None and self.schema is None:
            raise ValueError("record sources need a schema")

    def draw(self, seed: int) -> tuple[list[QosRecord], AttributeSchema]:
        if self.synthetic is not None:
            spec = replace(self.synthetic, seed=seed)
            return ds.synthesize(spec), spec.schema
        recs = [
            r if r.trust_label is not None else replace(r, trust_label=TrustLabel.TRUSTWORTHY)
            for r in self.records
        ]
        return recs, self.schema

    def describe(self) -> dict:
        if self.synthetic is not None:
            d = {k: v for k, v in self.synthetic.__dict__.items() if k != "attributes"}
            d["sizes"] = list(d["sizes"])
            return {"synthetic": d}
        blob = json.dumps([[r.service_id, r.raw_values] for r in self.records]).encode()
        return {"records": len(self.records), "digest": hashlib.sha256(blob).hexdigest()[:16]}


@dataclass
class TrialData:
    train: list[QosRecord]
    test: list[QosRecord]
    schema: AttributeSchema


def prepare_trial(
    source: DataSource,
    adversary: ds.AdversarySpec,
    seed: int,
    fractions: tuple[float, float] = (0.8, 0.2),
) -> TrialData:
    records, schema = source.draw(seed)
    records, _ = ds.inject_malicious(records, schema, replace(adversary, rng_seed=derive_seed(seed, 1)))
    train, test = ds.split(records, fractions, derive_seed(seed, 2))
    return TrialData(train, test, schema)


def _seeded_config(config: pl.PipelineConfig, seed: int, **training) -> pl.PipelineConfig:
    tcfg = replace(config.training, rng_seed=derive_seed(seed, 3), **training)
    return replace(config, training=tcfg, allow_single_category=True)


# -- reports ----------------------------------------------------------------

@dataclass
class ReportRow:
    value: float
    ratios: list[float]
    mae_terms: list[float]
    epochs: list[int]
    reached: list[bool]

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios))

    @property
    def std_ratio(self) -> float:
        return sample_std(self.ratios)

    @property
    def mean_mae(self) -> float:
        return float(np.mean(self.mae_terms))

    @property
    def std_mae(self) -> float:
        return sample_std(self.mae_terms)

    @property
    def mean_epochs(self) -> float:
        return float(np.mean(self.epochs)) if self.epochs else 0.0


CSV_COLUMNS = ["axis_value", "mean_ratio", "std_ratio", "mean_mae", "std_mae", "epochs"]


@dataclass
class ExperimentReport:
    axis: str
    rows: list[ReportRow]
    seeds: list[int]
    identifier: str
    fingerprint: str
    settings: dict = field(default_factory=dict)
    annotations: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows.sort(key=lambda r: r.value)

    @property
    def values(self) -> list[float]:
        return [r.value for r in self.rows]

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# axis={self.axis} identifier={self.identifier} fingerprint={self.fingerprint}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [repr(r.value), f"{r.mean_ratio:.6f}", f"{r.std_ratio:.6f}", f"{r.mean_mae:.6f}",
                 f"{r.std_mae:.6f}", f"{r.mean_epochs:.2f}"]
            )
        return buf.getvalue()

    def to_gnuplot(self) -> str:
        lines = [
            f"# {self.axis} sweep, identifier={self.identifier}, fingerprint={self.fingerprint}",
            "# " + " ".join(CSV_COLUMNS),
        ]
        for r in self.rows:
            lines.append(
                f"{r.value!r} {r.mean_ratio:.6f} {r.std_ratio:.6f} {r.mean_mae:.6f} {r.std_mae:.6f} {r.mean_epochs:.2f}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "identifier": self.identifier,
            "fingerprint": self.fingerprint,
            "seeds": list(self.seeds),
            "settings": self.settings,
            "annotations": self.annotations,
            "rows": [
                {
                    "axis_value": r.value,
                    "mean_ratio": r.mean_ratio,
                    "std_ratio": r.std_ratio,
                    "mean_mae": r.mean_mae,
                    "std_mae": r.std_mae,
                    "mean_epochs": r.mean_epochs,
                    "ratios": r.ratios,
                    "epochs": r.epochs,
                    "reached": r.reached,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def fingerprint(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def interior_minimum(values: Sequence[float], maes: Sequence[float]) -> dict:
    """Where the MAE curve bottoms out (first index on ties) and whether that
    point is strictly inside the grid."""
    idx = int(np.argmin(maes))
    return {"argmin": float(values[idx]), "interior": 0 < idx < len(values) - 1}


# -- sweeps -----------------------------------------------------------------

def _trial_seeds(seed: int, trials: int) -> list[int]:
    if trials < 1:
        raise ValueError("need at least one trial")
    return [seed + t for t in range(trials)]


def sweep_malicious(
    source: DataSource,
    ratios: Sequence[float],
    *,
    config: pl.PipelineConfig = pl.PipelineConfig(),
    adversary: ds.AdversarySpec = ds.AdversarySpec(),
    axis: str = "malicious_service_ratio",
    trials: int = 5,
    seed: int = 0,
    ideal: float = 1.0,
    identifier_factory: Optional[Callable[[pl.PipelineConfig], TrustIdentifier]] = None,
    on_error: str = "raise",
) -> ExperimentReport:
    """Identification ratio and MAE across adversary ratios.

    ``axis`` picks which adversary ratio the grid varies
    (``malicious_service_ratio`` or ``malicious_feedback_ratio``).
    """
    if axis not in ("malicious_service_ratio", "malicious_feedback_ratio"):
        raise ValueError(f"cannot sweep over {axis!r}")
    seeds = _trial_seeds(seed, trials)
    factory = identifier_factory or (lambda cfg: TwoPhaseIdentifier(cfg))
    rows, name = [], ""
    for value in ratios:
        adv = replace(adversary, **{axis: float(value)})
        row = ReportRow(float(value), [], [], [], [])
        for s in seeds:
            data = prepare_trial(source, adv, s)
            ident = factory(_seeded_config(config, s))
            name = ident.name
            try:
                pred = ident.fit_predict(data.train, data.test, data.schema)
            except nw.DivergenceError:
                if on_error == "skip":
                    continue
                raise
            ratio = identification_ratio(pred.labels, [r.trust_label for r in data.test])
            row.ratios.append(ratio)
            row.mae_terms.append(abs(ratio - ideal))
            row.epochs.append(pred.epochs)
            row.reached.append(pred.reached)
        rows.append(row)
    settings = {
        "source": source.describe(),
        "adversary": adversary.__dict__,
        "pipeline": config.to_dict(),
        "trials": trials,
        "ideal": ideal,
    }
    fp = fingerprint({"axis": axis, "grid": sorted(map(float, ratios)), "seeds": seeds, **settings})
    return ExperimentReport(axis, rows, seeds, name or "two-phase", fp, settings)


def sweep_sigma(
    source: DataSource,
    sigmas: Sequence[float],
    *,
    config: pl.PipelineConfig = pl.PipelineConfig(),
    adversary: ds.AdversarySpec = ds.AdversarySpec(malicious_service_ratio=0.3),
    learning_rate: float = 0.1,
    trials: int = 5,
    seed: int = 0,
    ideal: float = 1.0,
    on_error: str = "raise",
) -> ExperimentReport:
    """MAE per smoothing factor; the level classifier is trained once per trial."""
    if any(not s > 0 for s in sigmas):
        raise ValueError("sigmas must be positive")
    seeds = _trial_seeds(seed, trials)
    rows = {float(s): ReportRow(float(s), [], [], [], []) for s in sigmas}
    for s in seeds:
        data = prepare_trial(source, adversary, s)
        cfg = _seeded_config(config, s, learning_rate=learning_rate)
        try:
            phase1 = pl.fit_phase1(data.train, data.schema, cfg)
        except nw.DivergenceError:
            if on_error == "skip":
                continue
            raise
        truth = [r.trust_label for r in data.test]
        for sigma in sigmas:
            model = pl.fit_phase2(phase1, replace(cfg, sigma=float(sigma)))
            labels = [v.label for _, v in pl.identify_records(model, data.test)]
            ratio = identification_ratio(labels, truth)
            row = rows[float(sigma)]
            row.ratios.append(ratio)
            row.mae_terms.append(abs(ratio - ideal))
            row.epochs.append(len(phase1.history))
            row.reached.append(phase1.history[-1] <= cfg.training.acceptable_error)
    settings = {
        "source": source.describe(),
        "adversary": adversary.__dict__,
        "pipeline": config.to_dict(),
        "learning_rate": learning_rate,
        "trials": trials,
        "ideal": ideal,
    }
    fp = fingerprint({"axis": "sigma", "grid": sorted(map(float, sigmas)), "seeds": seeds, **settings})
    report = ExperimentReport("sigma", list(rows.values()), seeds, "two-phase", fp, settings)
    report.annotations = interior_minimum(report.values, report.column("mean_mae"))
    return report


def sweep_learning_rate(
    source: DataSource,
    learning_rates: Sequence[float],
    *,
    target: float = 0.10,
    max_epochs: int = 2000,
    config: pl.PipelineConfig = pl.PipelineConfig(),
    adversary: ds.AdversarySpec = ds.AdversarySpec(malicious_service_ratio=0.3),
    trials: int = 5,
    seed: int = 0,
    ideal: float = 1.0,
    on_error: str = "raise",
) -> ExperimentReport:
    """Epochs until the classifier's output MAE reaches ``target``.

    A learning rate that never gets there records ``max_epochs`` and
    ``reached = False``.
    """
    if any(not lr > 0 for lr in learning_rates):
        raise ValueError("learning rates must be positive")
    seeds = _trial_seeds(seed, trials)
    rows = {float(lr): ReportRow(float(lr), [], [], [], []) for lr in learning_rates}
    for s in seeds:
        data = prepare_trial(source, adversary, s)
        truth = [r.trust_label for r in data.test]
        for lr in learning_rates:
            cfg = _seeded_config(
                config, s, learning_rate=float(lr), acceptable_error=target,
                max_epochs=max_epochs, stop_metric=nw.StopMetric.MAE,
            )
            try:
                model = pl.train_pipeline(data.train, data.schema, cfg)
            except nw.DivergenceError:
                if on_error == "skip":
                    continue
                raise
            labels = [v.label for _, v in pl.identify_records(model, data.test)]
            ratio = identification_ratio(labels, truth)
            row = rows[float(lr)]
            row.ratios.append(ratio)
            row.mae_terms.append(abs(ratio - ideal))
            row.epochs.append(len(model.history))
            row.reached.append(model.history[-1] <= target)
    settings = {
        "source": source.describe(),
        "adversary": adversary.__dict__,
        "pipeline": config.to_dict(),
        "target": target,
        "max_epochs": max_epochs,
        "trials": trials,
        "ideal": ideal,
    }
    fp = fingerprint({"axis": "learning_rate", "grid": sorted(map(float, learning_rates)), "seeds": seeds, **settings})
    return ExperimentReport("learning_rate", list(rows.values()), seeds, "two-phase", fp, settings)


@dataclass
class TrainerRun:
    trainer: nw.Trainer
    seed: int
    epochs: int
    sample_passes: int
    reached: bool
    final_loss: float


def compare_trainers(
    source: DataSource,
    seeds: Sequence[int],
    *,
    acceptable_error: float = 0.05,
    learning_rate: float = 0.1,
    perturbation_step: float = 0.1,
    backprop_epochs: int = 500,
    perturbation_steps: int = 1000,
    hidden: Sequence[int] = (9, 9, 9, 9, 9),
) -> list[tuple[TrainerRun, TrainerRun]]:
    """Backprop versus weight perturbation on the clean level-classification task.

    Cost is counted in per-sample forward passes so that one backprop epoch
    and one perturbation step are measured on the same scale.  A run that
    exhausts its budget reports the budget, a lower bound on its true cost.
    """
    out = []
    for s in seeds:
        records, schema = source.draw(s)
        phase1_cfg = pl.PipelineConfig(hidden=tuple(hidden))
        with_rep = any(r.feedback for r in records)
        raw = feature_matrix(records, with_rep)
        feat_schema = schema.with_reputation() if with_rep else schema
        ctx = NormalizationContext(tuple(raw.min(axis=0).tolist()), tuple(raw.max(axis=0).tolist()))
        X = normalize_matrix(raw, feat_schema, ctx)
        y = pl.level_targets(records, X, phase1_cfg.level_labels)
        spec = nw.LayerSpec((X.shape[1], *hidden, nw.N_LEVELS))
        pair = []
        for trainer, budget in ((nw.Trainer.BACKPROP, backprop_epochs), (nw.Trainer.PERTURBATION, perturbation_steps)):
            cfg = nw.TrainingConfig(
                learning_rate=learning_rate, max_epochs=budget, acceptable_error=acceptable_error,
                rng_seed=derive_seed(s, 3), trainer=trainer, perturbation_step=perturbation_step,
            )
            _, history = nw.train(spec, X, y, cfg)
            pair.append(
                TrainerRun(trainer, s, len(history), nw.sample_passes(trainer, len(history), len(X)),
                           history[-1] <= acceptable_error, history[-1])
            )
        out.append(tuple(pair))
    return out
