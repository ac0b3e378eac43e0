"""Service records, attribute schemas and per-class SAW normalization."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class Polarity(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

    @classmethod
    def parse(cls, text: str) -> "Polarity":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown polarity {text!r} (expected positive|negative)") from None


class ServiceLevel(enum.IntEnum):
    BRONZE = 0
    SILVER = 1
    GOLD = 2
    PLATINUM = 3

    @classmethod
    def parse(cls, text: str) -> "ServiceLevel":
        return cls[text.strip().upper()]


class TrustLabel(enum.IntEnum):
    # values follow the category numbering c=1 (untrustworthy), c=2 (trustworthy)
    UNTRUSTWORTHY = 1
    TRUSTWORTHY = 2

    @classmethod
    def parse(cls, text: str) -> "TrustLabel":
        return cls[text.strip().upper()]


@dataclass(frozen=True)
class AttributeSchema:
    names: tuple[str, ...]
    polarities: tuple[Polarity, ...]

    def __post_init__(self):
        names = tuple(self.names)
        polarities = tuple(Polarity.parse(p) if isinstance(p, str) else p for p in self.polarities)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "polarities", polarities)
        if not names:
            raise ValueError("schema needs at least one attribute")
        if len(names) != len(polarities):
            raise ValueError("one polarity per attribute name is required")
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, object]]) -> "AttributeSchema":
        return cls(tuple(n for n, _ in pairs), tuple(p for _, p in pairs))

    @property
    def m(self) -> int:
        return len(self.names)

    def with_reputation(self, name: str = "reputation") -> "AttributeSchema":
        """Schema extended by the derived feedback attribute (positive)."""
        if name in self.names:
            return self
        return AttributeSchema(self.names + (name,), self.polarities + (Polarity.POSITIVE,))

    def to_dict(self) -> dict:
        return {"attributes": [[n, p.value] for n, p in zip(self.names, self.polarities)]}

    @classmethod
    def from_dict(cls, d: dict) -> "AttributeSchema":
        return cls.from_pairs([(n, p) for n, p in d["attributes"]])


@dataclass(frozen=True)
class QosRecord:
    service_id: str
    raw_values: tuple[float, ...]
    feedback: tuple[float, ...] = ()
    trust_label: Optional[TrustLabel] = None
    level_label: Optional[ServiceLevel] = None

    def __post_init__(self):
        object.__setattr__(self, "raw_values", tuple(float(v) for v in self.raw_values))
        object.__setattr__(self, "feedback", tuple(float(v) for v in self.feedback))
        if not all(np.isfinite(self.raw_values)):
            raise ValueError(f"{self.service_id}: non-finite QoS value")
        for score in self.feedback:
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"{self.service_id}: feedback score {score} outside [0, 1]")

    def check(self, schema: AttributeSchema) -> None:
        if len(self.raw_values) != schema.m:
            raise ValueError(
                f"{self.service_id}: {len(self.raw_values)} values, schema has {schema.m}"
            )


@dataclass(frozen=True)
class ServiceClass:
    schema: AttributeSchema
    services: tuple[QosRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "services", tuple(self.services))
        for rec in self.services:
            rec.check(self.schema)

    def matrix(self) -> np.ndarray:
        return np.array([r.raw_values for r in self.services], dtype=np.float64).reshape(
            len(self.services), self.schema.m
        )


@dataclass(frozen=True)
class NormalizationContext:
    q_min: tuple[float, ...]
    q_max: tuple[float, ...]

    def __post_init__(self):
        if len(self.q_min) != len(self.q_max):
            raise ValueError("q_min and q_max lengths differ")
        if any(lo > hi for lo, hi in zip(self.q_min, self.q_max)):
            raise ValueError("q_min must not exceed q_max")

    def to_dict(self) -> dict:
        return {"q_min": list(self.q_min), "q_max": list(self.q_max)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationContext":
        return cls(tuple(d["q_min"]), tuple(d["q_max"]))


def build_context(service_class: ServiceClass) -> NormalizationContext:
    if not service_class.services:
        raise ValueError("empty service class")
    values = service_class.matrix()
    return NormalizationContext(
        tuple(float(v) for v in values.min(axis=0)),
        tuple(float(v) for v in values.max(axis=0)),
    )


def saw_normalize(value: float, polarity: Polarity, ctx_min: float, ctx_max: float) -> float:
    """Min-max normalize one attribute value, direction-corrected by polarity.

    A degenerate range maps to 1. Values outside ``[ctx_min, ctx_max]`` are
    clamped so the result always lies in ``[0, 1]``.
    """
    span = ctx_max - ctx_min
    if span == 0:
        return 1.0
    if polarity is Polarity.POSITIVE:
        score = (value - ctx_min) / span
    else:
        score = (ctx_max - value) / span
    return min(1.0, max(0.0, score))


def normalize_matrix(values: np.ndarray, schema: AttributeSchema, ctx: NormalizationContext) -> np.ndarray:
    """Vectorized ``saw_normalize`` over an (n, m) array of raw values."""
    values = np.asarray(values, dtype=np.float64)
    lo = np.asarray(ctx.q_min)
    hi = np.asarray(ctx.q_max)
    span = hi - lo
    safe = np.where(span == 0, 1.0, span)
    positive = np.array([p is Polarity.POSITIVE for p in schema.polarities])
    scores = np.where(positive, (values - lo) / safe, (hi - values) / safe)
    scores = np.where(span == 0, 1.0, scores)
    return np.clip(scores, 0.0, 1.0)


def normalize_class(service_class: ServiceClass) -> list[np.ndarray]:
    ctx = build_context(service_class)
    out = normalize_matrix(service_class.matrix(), service_class.schema, ctx)
    return list(out)


def effective_reputation(record: QosRecord) -> float:
    """Mean feedback score, or the neutral 0.5 when there is no feedback."""
    if not record.feedback:
        return 0.5
    return float(np.mean(record.feedback))


def feature_matrix(records: Sequence[QosRecord], with_reputation: bool) -> np.ndarray:
    """Raw attribute matrix, optionally with the reputation column appended."""
    rows = []
    for r in records:
        row = list(r.raw_values)
        if with_reputation:
            row.append(effective_reputation(r))
        rows.append(row)
    width = len(records[0].raw_values) + int(with_reputation) if records else 0
    return np.array(rows, dtype=np.float64).reshape(len(records), width)
