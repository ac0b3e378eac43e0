"""QWS ingestion, synthetic marketplaces, adversary injection and splitting."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .qos_model import AttributeSchema, Polarity, QosRecord, ServiceLevel, TrustLabel

log = logging.getLogger(__name__)

# QWS attribute order with (worst, best) values used by the synthetic generator
QWS_ATTRIBUTES: tuple[tuple[str, str, float, float], ...] = (
    ("response_time", "negative", 1200.0, 60.0),
    ("availability", "positive", 55.0, 100.0),
    ("throughput", "positive", 1.0, 40.0),
    ("successability", "positive", 55.0, 100.0),
    ("reliability", "positive", 40.0, 85.0),
    ("compliance", "positive", 55.0, 100.0),
    ("best_practices", "positive", 50.0, 95.0),
    ("latency", "negative", 400.0, 5.0),
    ("documentation", "positive", 5.0, 95.0),
)


def qws_schema() -> AttributeSchema:
    return AttributeSchema.from_pairs([(n, p) for n, p, _, _ in QWS_ATTRIBUTES])


@dataclass(frozen=True)
class QwsLayout:
    """Where the attributes live in a comma-separated QWS row.

    ``attribute_columns`` defaults to the first ``m`` columns.  When
    ``n_columns`` is set every row must have exactly that many fields.
    """

    attribute_columns: Optional[tuple[int, ...]] = None
    id_column: Optional[int] = None
    n_columns: Optional[int] = None
    comment_prefix: str = "#"

    def columns_for(self, schema: AttributeSchema) -> tuple[int, ...]:
        cols = self.attribute_columns or tuple(range(schema.m))
        if len(cols) != schema.m:
            raise ValueError(f"layout names {len(cols)} attribute columns, schema has {schema.m}")
        return tuple(cols)


# Layout of the public QWS 2.0 file: 9 attributes, service name, WSDL address.
QWS2_LAYOUT = QwsLayout(attribute_columns=tuple(range(9)), id_column=9, n_columns=11)


@dataclass
class ParseResult:
    records: list[QosRecord]
    rejected: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def report(self) -> str:
        return "".join(f"line {n}: {why}\n" for n, why in self.rejected)


def parse_qws(stream: TextIO, schema: AttributeSchema, layout: QwsLayout = QwsLayout()) -> ParseResult:
    """Parse QWS-style rows into records.

    Bad rows are collected with their 1-based line numbers and parsing
    continues.  Blank lines and lines starting with ``layout.comment_prefix``
    are skipped.
    """
    cols = layout.columns_for(schema)
    needed = max(cols + ((layout.id_column,) if layout.id_column is not None else ())) + 1
    result = ParseResult([])
    for line_no, line in enumerate(stream, start=1):
        text = line.strip()
        if not text or (layout.comment_prefix and text.startswith(layout.comment_prefix)):
            continue
        fields = next(csv.reader([text]))
        if layout.n_columns is not None and len(fields) != layout.n_columns:
            result.rejected.append((line_no, f"expected {layout.n_columns} columns, found {len(fields)}"))
            continue
        if len(fields) < needed:
            result.rejected.append((line_no, f"expected at least {needed} columns, found {len(fields)}"))
            continue
        try:
            values = [float(fields[c]) for c in cols]
        except ValueError as exc:
            result.rejected.append((line_no, f"non-numeric attribute value ({exc})"))
            continue
        if not all(math.isfinite(v) for v in values):
            result.rejected.append((line_no, "non-finite attribute value"))
            continue
        sid = fields[layout.id_column].strip() if layout.id_column is not None else f"s{line_no}"
        result.records.append(QosRecord(sid, tuple(values)))
    if not result.records and not result.rejected:
        result.warnings.append("no data rows found")
        log.warning("QWS stream contained no data rows")
    return result


def fixture_text() -> str:
    """The bundled 10-row QWS fixture (QWS 2.0 layout)."""
    return resources.files("qostrust").joinpath("data/qws_fixture.csv").read_text()


def load_fixture() -> ParseResult:
    return parse_qws(io.StringIO(fixture_text()), qws_schema(), QWS2_LAYOUT)


# -- canonical dataset files ------------------------------------------------

def write_dataset(stream: TextIO, schema: AttributeSchema, records: Sequence[QosRecord]) -> None:
    """Write records as CSV with a header; feedback is ``;``-joined."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["service_id", *schema.names, "level", "trust", "feedback"])
    for r in records:
        writer.writerow(
            [
                r.service_id,
                *(repr(v) for v in r.raw_values),
                r.level_label.name.lower() if r.level_label is not None else "",
                r.trust_label.name.lower() if r.trust_label is not None else "",
                ";".join(repr(f) for f in r.feedback),
            ]
        )


def read_dataset(stream: TextIO, schema: AttributeSchema) -> list[QosRecord]:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        return []
    expected = ["service_id", *schema.names, "level", "trust", "feedback"]
    if header != expected:
        raise ValueError(f"dataset header {header} does not match schema columns {expected}")
    records = []
    m = schema.m
    for row in reader:
        if not row:
            continue
        level, trust, fb = row[m + 1], row[m + 2], row[m + 3]
        records.append(
            QosRecord(
                row[0],
                tuple(float(v) for v in row[1 : m + 1]),
                tuple(float(v) for v in fb.split(";")) if fb else (),
                TrustLabel.parse(trust) if trust else None,
                ServiceLevel.parse(level) if level else None,
            )
        )
    return records


# -- synthetic marketplaces -------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian level clusters laid out in QWS-like attribute units.

    Level ``L`` sits at quality ``(L + 0.5) / 4`` between each attribute's
    worst and best value; ``spread`` is the per-attribute standard deviation
    in the same quality units.
    """

    sizes: tuple[int, ...] = (250, 250, 250, 250)
    spread: float = 0.05
    untrustworthy_fraction: float = 0.0
    degradation: float = 0.5
    n_feedback: int = 10
    feedback_noise: float = 0.1
    seed: int = 0
    attributes: tuple[tuple[str, str, float, float], ...] = QWS_ATTRIBUTES

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) != len(ServiceLevel):
            raise ValueError(f"need one cluster size per service level ({len(ServiceLevel)})")
        if any(s <= 0 for s in self.sizes):
            raise ValueError("cluster sizes must be positive")
        if not self.spread > 0:
            raise ValueError("spread must be positive")
        if not 0 <= self.untrustworthy_fraction <= 1:
            raise ValueError("untrustworthy_fraction must lie in [0, 1]")
        if self.n_feedback < 0:
            raise ValueError("n_feedback must be non-negative")

    @property
    def schema(self) -> AttributeSchema:
        return AttributeSchema.from_pairs([(n, p) for n, p, _, _ in self.attributes])

    def level_means(self) -> np.ndarray:
        worst = np.array([a[2] for a in self.attributes])
        best = np.array([a[3] for a in self.attributes])
        q = (np.arange(len(ServiceLevel)) + 0.5) / len(ServiceLevel)
        return worst + q[:, None] * (best - worst)


def degrade(values: Sequence[float], schema: AttributeSchema, intensity: float) -> tuple[float, ...]:
    """Inflate negative attributes and deflate positive ones by ``intensity``."""
    out = []
    for v, pol in zip(values, schema.polarities):
        out.append(v * (1.0 + intensity) if pol is Polarity.NEGATIVE else v * (1.0 - intensity))
    return tuple(out)


def _feedback(rng: np.random.Generator, quality: float, n: int, noise: float) -> tuple[float, ...]:
    return tuple(np.clip(rng.normal(quality, noise, size=n), 0.0, 1.0))


def synthesize(spec: SyntheticSpec) -> list[QosRecord]:
    """One Gaussian cluster per level; an ``untrustworthy_fraction`` of each
    cluster is degraded by ``spec.degradation`` and labelled untrustworthy.

    Honest feedback centres on the service's latent quality, reduced in
    proportion to any degradation.
    """
    rng = np.random.default_rng(spec.seed)
    schema = spec.schema
    worst = np.array([a[2] for a in spec.attributes])
    best = np.array([a[3] for a in spec.attributes])
    records = []
    for level, size in zip(ServiceLevel, spec.sizes):
        center = (level.value + 0.5) / len(ServiceLevel)
        quality = np.clip(rng.normal(center, spec.spread, size=(size, len(worst))), 0.0, 1.0)
        raw = worst + quality * (best - worst)
        n_bad = math.floor(spec.untrustworthy_fraction * size)
        bad = set(rng.permutation(size)[:n_bad].tolist())
        for i in range(size):
            values = tuple(raw[i])
            q = float(np.clip(quality[i].mean(), 0.0, 1.0))
            trust = TrustLabel.TRUSTWORTHY
            if i in bad:
                values = degrade(values, schema, spec.degradation)
                q *= 1.0 - spec.degradation
                trust = TrustLabel.UNTRUSTWORTHY
            fb = _feedback(rng, q, spec.n_feedback, spec.feedback_noise)
            records.append(QosRecord(f"{level.name.lower()}-{i:04d}", values, fb, trust, level))
    return records


# -- adversaries ------------------------------------------------------------

@dataclass(frozen=True)
class AdversarySpec:
    """Malicious services and malicious feedback to inject.

    Each malicious service is degraded with an intensity drawn uniformly from
    ``(0, perturbation_scale]`` (``intensity="uniform"``) or exactly
    ``perturbation_scale`` (``intensity="fixed"``).
    """

    malicious_service_ratio: float = 0.0
    malicious_feedback_ratio: float = 0.0
    perturbation_scale: float = 0.5
    intensity: str = "uniform"
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("malicious_service_ratio", "malicious_feedback_ratio"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.perturbation_scale > 0:
            raise ValueError("perturbation_scale must be positive")
        if self.intensity not in ("uniform", "fixed"):
            raise ValueError("intensity must be 'uniform' or 'fixed'")


def inject_malicious(
    records: Sequence[QosRecord], schema: AttributeSchema, adversary: AdversarySpec
) -> tuple[list[QosRecord], np.ndarray]:
    """Turn a seeded subset of services malicious and poison feedback.

    Exactly ``floor(ratio * n)`` services are flagged (a prefix of a seeded
    permutation).  Their QoS is degraded and their honest feedback scaled down
    by the same intensity.  Then ``floor(feedback_ratio * total_entries)``
    feedback entries are overwritten: 1.0 on untrustworthy services
    (ballot-stuffing), 0.0 on trustworthy ones (bad-mouthing).

    Returns the new records and a boolean array, true where the service is
    untrustworthy after injection.
    """
    rng = np.random.default_rng(adversary.rng_seed)
    n = len(records)
    out = list(records)
    n_bad = math.floor(adversary.malicious_service_ratio * n)
    chosen = rng.permutation(n)[:n_bad]
    for i in chosen:
        r = out[i]
        if adversary.intensity == "fixed":
            intensity = adversary.perturbation_scale
        else:
            intensity = adversary.perturbation_scale * (1.0 - rng.random())
        out[i] = replace(
            r,
            raw_values=degrade(r.raw_values, schema, intensity),
            feedback=tuple(f * (1.0 - min(intensity, 1.0)) for f in r.feedback),
            trust_label=TrustLabel.UNTRUSTWORTHY,
        )

    owners = [i for i, r in enumerate(out) for _ in r.feedback]
    n_poison = math.floor(adversary.malicious_feedback_ratio * len(owners))
    if n_poison:
        hits: dict[int, list[int]] = {}
        starts = np.cumsum([0] + [len(r.feedback) for r in out])
        for flat in np.sort(rng.permutation(len(owners))[:n_poison]):
            owner = owners[flat]
            hits.setdefault(owner, []).append(int(flat - starts[owner]))
        for owner, positions in hits.items():
            r = out[owner]
            score = 1.0 if r.trust_label is TrustLabel.UNTRUSTWORTHY else 0.0
            fb = list(r.feedback)
            for p in positions:
                fb[p] = score
            out[owner] = replace(r, feedback=tuple(fb))

    flags = np.array([r.trust_label is TrustLabel.UNTRUSTWORTHY for r in out], dtype=bool)
    return out, flags


# -- splitting --------------------------------------------------------------

def _stratum(r: QosRecord) -> tuple:
    return (
        r.level_label.name.lower() if r.level_label is not None else None,
        r.trust_label.name.lower() if r.trust_label is not None else None,
    )


def split(
    records: Sequence[QosRecord], fractions: tuple[float, float] = (0.8, 0.2), seed: int = 0
) -> tuple[list[QosRecord], list[QosRecord]]:
    """Seeded split stratified by (level, trust) label.

    Each stratum contributes ``round(f * n)`` records to each side; a stratum
    that would leave either side empty is an error.
    """
    train_f, test_f = fractions
    if train_f <= 0 or test_f <= 0 or train_f + test_f > 1 + 1e-12:
        raise ValueError("split fractions must be positive and sum to at most 1")
    rng = np.random.default_rng(seed)
    groups: dict[tuple, list[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(_stratum(r), []).append(i)
    train_idx, test_idx = [], []
    for key in sorted(groups, key=lambda k: tuple("" if v is None else v for v in k)):
        members = groups[key]
        perm = [members[j] for j in rng.permutation(len(members))]
        n_train = int(round(train_f * len(members)))
        n_test = min(len(members) - n_train, int(round(test_f * len(members))))
        if n_train == 0 or n_test == 0:
            name = "/".join("unlabelled" if v is None else v for v in key)
            raise ValueError(f"stratum {name} has {len(members)} record(s), too small to split")
        train_idx.extend(perm[:n_train])
        test_idx.extend(perm[n_train : n_train + n_test])
    return [records[i] for i in sorted(train_idx)], [records[i] for i in sorted(test_idx)]


def level_array(records: Iterable[QosRecord]) -> np.ndarray:
    return np.array([int(r.level_label) for r in records], dtype=np.int64)


def trust_array(records: Iterable[QosRecord]) -> np.ndarray:
    return np.array([int(r.trust_label) for r in records], dtype=np.int64)
