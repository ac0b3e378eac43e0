import io
import math
import os
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qostrust import datasets as ds
from qostrust import network as nw
from qostrust.qos_model import (
    NormalizationContext,
    QosRecord,
    ServiceLevel,
    TrustLabel,
    feature_matrix,
    normalize_matrix,
)

SCHEMA = ds.qws_schema()


def test_fixture_parses_cleanly():
    result = ds.load_fixture()
    assert len(result.records) == 10 and result.rejected == []
    assert all(len(r.raw_values) == 9 and all(np.isfinite(r.raw_values)) for r in result.records)
    assert result.records[0].service_id == "MAPPMatching"
    assert result.records[0].raw_values[0] == 302.75


def test_malformed_rows_are_collected():
    text = ds.fixture_text() + "1,2,3\n" + ",".join(["x"] * 9) + ",name,url\n"
    result = ds.parse_qws(io.StringIO(text), SCHEMA, ds.QWS2_LAYOUT)
    assert len(result.records) == 10
    assert [why.split()[0] for _, why in result.rejected] == ["expected", "non-numeric"]
    assert "line" in result.report()


def test_empty_stream_warns():
    result = ds.parse_qws(io.StringIO(""), SCHEMA)
    assert result.records == [] and result.warnings


def test_plain_layout_generates_ids():
    result = ds.parse_qws(io.StringIO("1,2,3,4,5,6,7,8,9\n"), SCHEMA)
    assert result.records[0].service_id == "s1"


def test_layout_arity_mismatch():
    with pytest.raises(ValueError):
        ds.QwsLayout(attribute_columns=(0, 1)).columns_for(SCHEMA)


def test_dataset_roundtrip():
    records = ds.synthesize(ds.SyntheticSpec(sizes=(3, 3, 3, 3), untrustworthy_fraction=0.34, seed=2))
    buf = io.StringIO()
    ds.write_dataset(buf, SCHEMA, records)
    assert ds.read_dataset(io.StringIO(buf.getvalue()), SCHEMA) == records
    with pytest.raises(ValueError, match="header"):
        ds.read_dataset(io.StringIO("a,b\n"), SCHEMA)


def test_synthesize_labels_and_determinism():
    spec = ds.SyntheticSpec(sizes=(100, 100, 100, 100), seed=3)
    records = ds.synthesize(spec)
    assert len(records) == 400
    assert all(r.trust_label is TrustLabel.TRUSTWORTHY for r in records)
    assert Counter(r.level_label for r in records) == {lv: 100 for lv in ServiceLevel}
    assert ds.synthesize(spec) == records
    assert ds.synthesize(replace(spec, seed=4)) != records


def test_synthesize_untrustworthy_fraction():
    records = ds.synthesize(ds.SyntheticSpec(sizes=(10, 10, 10, 10), untrustworthy_fraction=0.3))
    assert sum(r.trust_label is TrustLabel.UNTRUSTWORTHY for r in records) == 12


@pytest.mark.parametrize("kwargs", [{"sizes": (1, 2, 3)}, {"sizes": (0, 1, 1, 1)}, {"spread": 0.0}])
def test_synthetic_spec_validation(kwargs):
    with pytest.raises(ValueError):
        ds.SyntheticSpec(**kwargs)


def test_clusters_are_learnable():
    train = ds.synthesize(ds.SyntheticSpec(seed=0))
    test = ds.synthesize(ds.SyntheticSpec(sizes=(50, 50, 50, 50), seed=1))
    raw = feature_matrix(train, True)
    ctx = NormalizationContext(tuple(raw.min(axis=0)), tuple(raw.max(axis=0)))
    schema = SCHEMA.with_reputation()
    X = normalize_matrix(raw, schema, ctx)
    net, _ = nw.train(nw.LayerSpec.default(10), X, ds.level_array(train), nw.TrainingConfig(rng_seed=5))
    Xt = normalize_matrix(feature_matrix(test, True), schema, ctx)
    assert np.mean(nw.classify_levels(net, Xt) == ds.level_array(test)) >= 0.95


def test_degrade_direction():
    out = ds.degrade((100.0, 50.0), SCHEMA.__class__(("t", "a"), ("negative", "positive")), 0.2)
    assert out == pytest.approx((120.0, 40.0))


def test_injection_identity_and_full():
    records = ds.synthesize(ds.SyntheticSpec(sizes=(5, 5, 5, 5)))
    same, flags = ds.inject_malicious(records, SCHEMA, ds.AdversarySpec())
    assert same == records and not flags.any()
    _, flags = ds.inject_malicious(records, SCHEMA, ds.AdversarySpec(malicious_service_ratio=1.0))
    assert flags.all()


def test_injection_counts():
    records = ds.synthesize(ds.SyntheticSpec())
    adv = ds.AdversarySpec(malicious_service_ratio=0.3, malicious_feedback_ratio=0.5, rng_seed=9)
    out, flags = ds.inject_malicious(records, SCHEMA, adv)
    assert flags.sum() == 300
    # service selection draws come first, so the unpoisoned run shares them
    base, _ = ds.inject_malicious(records, SCHEMA, replace(adv, malicious_feedback_ratio=0.0))
    poison = lambda r: 1.0 if r.trust_label is TrustLabel.UNTRUSTWORTHY else 0.0
    diffs = [(f, poison(r)) for r, b in zip(out, base) for f, g in zip(r.feedback, b.feedback) if f != g]
    assert all(f == p for f, p in diffs)
    assert len(diffs) <= 5000
    assert sum(f == poison(r) for r in out for f in r.feedback) >= 5000
    again, flags2 = ds.inject_malicious(records, SCHEMA, adv)
    assert again == out and np.array_equal(flags, flags2)


def test_injection_degrades_flagged_services():
    records = ds.synthesize(ds.SyntheticSpec(sizes=(5, 5, 5, 5)))
    adv = ds.AdversarySpec(malicious_service_ratio=0.5, perturbation_scale=0.4, intensity="fixed")
    out, flags = ds.inject_malicious(records, SCHEMA, adv)
    for before, after, bad in zip(records, out, flags):
        if bad:
            assert after.raw_values == pytest.approx(ds.degrade(before.raw_values, SCHEMA, 0.4))
            assert after.feedback == pytest.approx(tuple(0.6 * f for f in before.feedback))
        else:
            assert after == before


def test_adversary_validation():
    with pytest.raises(ValueError):
        ds.AdversarySpec(malicious_service_ratio=1.5)
    with pytest.raises(ValueError):
        ds.AdversarySpec(intensity="gaussian")


def test_split_sizes_and_disjoint():
    records = [QosRecord(f"s{i}", (float(i),), (), TrustLabel.TRUSTWORTHY) for i in range(100)]
    train, test = ds.split(records, (0.8, 0.2), seed=1)
    assert len(train) == 80 and len(test) == 20
    assert not {r.service_id for r in train} & {r.service_id for r in test}
    assert ds.split(records, (0.8, 0.2), seed=1) == (train, test)


def test_split_is_stratified():
    records = ds.synthesize(ds.SyntheticSpec(sizes=(50, 60, 70, 80), untrustworthy_fraction=0.3))
    train, test = ds.split(records, (0.8, 0.2), seed=2)
    key = lambda r: (r.level_label, r.trust_label)
    full, tr = Counter(map(key, records)), Counter(map(key, train))
    for k, n in full.items():
        assert abs(tr[k] - 0.8 * n) <= 1


def test_split_small_stratum_named():
    records = [QosRecord("a", (1.0,), (), TrustLabel.TRUSTWORTHY, ServiceLevel.GOLD)]
    with pytest.raises(ValueError, match="gold/trustworthy"):
        ds.split(records)


@given(st.floats(0, 1), st.integers(1, 60), st.integers(0, 1000))
def test_injection_flags_floor(ratio, n, seed):
    records = [QosRecord(f"s{i}", (1.0,) * 9, (0.5,), TrustLabel.TRUSTWORTHY) for i in range(n)]
    out, flags = ds.inject_malicious(records, SCHEMA, ds.AdversarySpec(malicious_service_ratio=ratio, rng_seed=seed))
    assert flags.sum() == math.floor(ratio * n)
    assert all(0.0 <= f <= 1.0 for r in out for f in r.feedback)


QWS_FILE = os.environ.get("QWS_DATASET")


@pytest.mark.skipif(not QWS_FILE, reason="set QWS_DATASET to the full QWS 2.0 file")
def test_full_qws_file():
    with open(QWS_FILE, encoding="latin-1") as fh:
        result = ds.parse_qws(fh, SCHEMA, ds.QWS2_LAYOUT)
    assert len(result.records) == 2507
    assert all(len(r.raw_values) == 9 for r in result.records)
