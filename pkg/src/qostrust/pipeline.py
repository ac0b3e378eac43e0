"""Two-phase identification: level classifier, then one PNN per level."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import network as nw
from . import pnn
from .qos_model import (
    AttributeSchema,
    NormalizationContext,
    QosRecord,
    ServiceLevel,
    TrustLabel,
    feature_matrix,
    normalize_matrix,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class EmptyCategoryError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    hidden: tuple[int, ...] = (9, 9, 9, 9, 9)
    training: nw.TrainingConfig = field(default_factory=nw.TrainingConfig)
    sigma: float = 1.0
    prefactor: str = pnn.UNIVARIATE
    # None: append the reputation column whenever any record carries feedback
    use_reputation: Optional[bool] = None
    # train the level classifier on trustworthy services only
    phase1_trustworthy_only: bool = True
    # "native" uses level labels when every record has one, else quartile bins
    level_labels: str = "native"
    # when a whole training set lacks one trust category, answer with the other
    allow_single_category: bool = False
    # "level" standardizes each level's PNN inputs by that level's mean/std
    pnn_scaling: str = "level"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.level_labels not in ("native", "quartile"):
            raise ValueError("level_labels must be 'native' or 'quartile'")
        if self.pnn_scaling not in ("level", "none"):
            raise ValueError("pnn_scaling must be 'level' or 'none'")

    def to_dict(self) -> dict:
        return {
            "hidden": list(self.hidden),
            "training": self.training.to_dict(),
            "sigma": self.sigma,
            "prefactor": self.prefactor,
            "use_reputation": self.use_reputation,
            "phase1_trustworthy_only": self.phase1_trustworthy_only,
            "level_labels": self.level_labels,
            "allow_single_category": self.allow_single_category,
            "pnn_scaling": self.pnn_scaling,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class LevelIdentifier:
    """A level's PNN together with the affine map into its pattern space.

    ``model`` is a constant label when no PNN could be fitted at all.
    """

    model: Union[pnn.PnnModel, TrustLabel]
    center: np.ndarray
    scale: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.center) / self.scale

    def verdict(self, x: np.ndarray) -> pnn.TrustVerdict:
        if isinstance(self.model, pnn.PnnModel):
            return pnn.identify(self.model, self.transform(x))
        return pnn.TrustVerdict(self.model, float("nan"), float("nan"))

    def to_dict(self) -> dict:
        d = {"center": self.center.tolist(), "scale": self.scale.tolist()}
        if isinstance(self.model, pnn.PnnModel):
            d.update(kind="pnn", **self.model.to_dict())
        else:
            d.update(kind="constant", label=self.model.name.lower())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LevelIdentifier":
        d = dict(d)
        center, scale = np.array(d.pop("center")), np.array(d.pop("scale"))
        if d.pop("kind") == "pnn":
            return cls(pnn.PnnModel.from_dict(d), center, scale)
        return cls(TrustLabel.parse(d["label"]), center, scale)


@dataclass(frozen=True)
class PipelineModel:
    schema: AttributeSchema
    with_reputation: bool
    normalization: NormalizationContext
    classifier: nw.NetworkParams
    identifiers: dict  # ServiceLevel -> LevelIdentifier
    pooled_levels: tuple[ServiceLevel, ...] = ()
    warnings: tuple[str, ...] = ()
    history: tuple[float, ...] = ()
    fingerprint: str = ""

    @property
    def feature_schema(self) -> AttributeSchema:
        return self.schema.with_reputation() if self.with_reputation else self.schema

    def features(self, records: Sequence[QosRecord]) -> np.ndarray:
        for r in records:
            r.check(self.schema)
        raw = feature_matrix(records, self.with_reputation)
        return normalize_matrix(raw, self.feature_schema, self.normalization)

    def to_dict(self) -> dict:
        idents = {lv.name.lower(): self.identifiers[lv].to_dict() for lv in ServiceLevel}
        return {
            "format": "qostrust-pipeline",
            "version": FORMAT_VERSION,
            "fingerprint": self.fingerprint,
            "schema": self.schema.to_dict(),
            "with_reputation": self.with_reputation,
            "normalization": self.normalization.to_dict(),
            "classifier": self.classifier.to_dict(),
            "identifiers": idents,
            "pooled_levels": [lv.name.lower() for lv in self.pooled_levels],
            "warnings": list(self.warnings),
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineModel":
        if d.get("format") != "qostrust-pipeline":
            raise ValueError("not a pipeline model document")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        idents = {lv: LevelIdentifier.from_dict(d["identifiers"][lv.name.lower()]) for lv in ServiceLevel}
        return cls(
            AttributeSchema.from_dict(d["schema"]),
            bool(d["with_reputation"]),
            NormalizationContext.from_dict(d["normalization"]),
            nw.NetworkParams.from_dict(d["classifier"]),
            idents,
            tuple(ServiceLevel.parse(s) for s in d["pooled_levels"]),
            tuple(d["warnings"]),
            tuple(d["history"]),
            d["fingerprint"],
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PipelineModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Phase1:
    """Everything phase 2 needs from the level classifier."""

    schema: AttributeSchema
    with_reputation: bool
    normalization: NormalizationContext
    classifier: nw.NetworkParams
    history: tuple[float, ...]
    X: np.ndarray  # normalized training features
    trust: np.ndarray  # TrustLabel values
    predicted: np.ndarray  # predicted level per training record


def level_targets(records: Sequence[QosRecord], X: np.ndarray, mode: str) -> np.ndarray:
    if mode == "native" and all(r.level_label is not None for r in records):
        return np.array([int(r.level_label) for r in records], dtype=np.int64)
    return nw.quartile_levels(X.mean(axis=1))


def fit_phase1(records: Sequence[QosRecord], schema: AttributeSchema, config: PipelineConfig) -> Phase1:
    if not records:
        raise ValueError("empty training set")
    if any(r.trust_label is None for r in records):
        raise ValueError("every training record needs a trust label")
    for r in records:
        r.check(schema)
    with_rep = config.use_reputation
    if with_rep is None:
        with_rep = any(r.feedback for r in records)
    feat_schema = schema.with_reputation() if with_rep else schema
    raw = feature_matrix(records, with_rep)
    ctx = NormalizationContext(tuple(raw.min(axis=0).tolist()), tuple(raw.max(axis=0).tolist()))
    X = normalize_matrix(raw, feat_schema, ctx)
    trust = np.array([int(r.trust_label) for r in records], dtype=np.int64)
    levels = level_targets(records, X, config.level_labels)

    rows = np.arange(len(records))
    if config.phase1_trustworthy_only and np.any(trust == TrustLabel.TRUSTWORTHY):
        rows = rows[trust == TrustLabel.TRUSTWORTHY]
    spec = nw.LayerSpec((X.shape[1], *config.hidden, nw.N_LEVELS))
    net, history = nw.train(spec, X[rows], levels[rows], config.training)
    predicted = nw.classify_levels(net, X)
    return Phase1(schema, with_rep, ctx, net, tuple(history), X, trust, predicted)


def fit_phase2(phase1: Phase1, config: PipelineConfig, fingerprint: str = "") -> PipelineModel:
    """Fit one PNN per predicted level from the trust-labelled members routed there.

    A level missing either trust category falls back to a PNN over all
    training records; the fallback is recorded in ``warnings``.
    """
    X, trust, predicted = phase1.X, phase1.trust, phase1.predicted
    warnings: list[str] = []
    pooled: Optional[LevelIdentifier] = None
    pooled_levels = []
    identifiers: dict = {}

    def build(mask) -> Optional[LevelIdentifier]:
        members = X[mask]
        if len(members) == 0:
            return None
        if config.pnn_scaling == "level":
            center = members.mean(axis=0)
            scale = members.std(axis=0)
            scale[scale == 0] = 1.0
        else:
            center, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
        good = members[trust[mask] == TrustLabel.TRUSTWORTHY]
        bad = members[trust[mask] == TrustLabel.UNTRUSTWORTHY]
        if len(good) == 0 or len(bad) == 0:
            return None
        model = pnn.fit((good - center) / scale, (bad - center) / scale, config.sigma, config.prefactor)
        return LevelIdentifier(model, center, scale)

    for level in ServiceLevel:
        ident = build(predicted == level.value)
        if ident is None:
            if pooled is None:
                pooled = build(np.ones(len(X), dtype=bool))
                if pooled is None:
                    present = TrustLabel(int(trust[0]))
                    if not config.allow_single_category:
                        raise EmptyCategoryError(
                            f"training data has no {TrustLabel(3 - present).name.lower()} services"
                        )
                    pooled = LevelIdentifier(present, np.zeros(X.shape[1]), np.ones(X.shape[1]))
                    warnings.append(f"only {present.name.lower()} services in training data")
            warnings.append(f"level {level.name.lower()}: missing a trust category, using pooled model")
            pooled_levels.append(level)
            ident = pooled
        identifiers[level] = ident
    for w in warnings:
        log.warning(w)
    return PipelineModel(
        phase1.schema,
        phase1.with_reputation,
        phase1.normalization,
        phase1.classifier,
        identifiers,
        tuple(pooled_levels),
        tuple(warnings),
        phase1.history,
        fingerprint,
    )


def train_pipeline(records: Sequence[QosRecord], schema: AttributeSchema, config: PipelineConfig) -> PipelineModel:
    return fit_phase2(fit_phase1(records, schema, config), config, config.fingerprint())


def identify_service(model: PipelineModel, record: QosRecord) -> tuple[ServiceLevel, pnn.TrustVerdict]:
    """Normalize, classify the level, and ask that level's identifier."""
    x = model.features([record])[0]
    level = nw.classify_level(model.classifier, x)
    return level, model.identifiers[level].verdict(x)


def identify_records(
    model: PipelineModel, records: Sequence[QosRecord]
) -> list[tuple[ServiceLevel, pnn.TrustVerdict]]:
    if not records:
        return []
    X = model.features(records)
    out = []
    for x in X:
        level = nw.classify_level(model.classifier, x)
        out.append((level, model.identifiers[level].verdict(x)))
    return out
