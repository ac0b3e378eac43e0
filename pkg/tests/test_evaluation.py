import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qostrust import datasets as ds
from qostrust import evaluation as ev
from qostrust.qos_model import ServiceLevel, TrustLabel

SMALL = ev.DataSource(synthetic=ds.SyntheticSpec(sizes=(60, 60, 60, 60)))

# the "our approach" row of the published comparison table, and its two summary cells
TABLE_ROW = [0.96, 0.94, 0.92, 0.91, 0.87, 0.83]


def test_identification_ratio_examples():
    assert ev.identification_ratio([2] * 90 + [1] * 10, [2] * 100) == 0.90
    assert ev.identification_ratio([1, 2], [1, 2]) == 1.0
    with pytest.raises(ValueError):
        ev.identification_ratio([], [])
    with pytest.raises(ValueError):
        ev.identification_ratio([1], [1, 2])


def test_table_summary_statistics():
    assert np.mean(TABLE_ROW) == pytest.approx(0.9050, abs=5e-5)
    assert ev.sample_std(TABLE_ROW) == pytest.approx(0.0476, abs=5e-5)


def test_mae_examples():
    assert ev.mae([0.9, 0.8], [1.0, 1.0]) == pytest.approx(0.15, abs=1e-15)
    assert ev.mae([0.96]) == pytest.approx(0.04, abs=1e-15)
    assert ev.mae([0.3, 0.7], [0.3, 0.7]) == 0.0
    with pytest.raises(ValueError):
        ev.mae([0.9], [1.0, 1.0])
    with pytest.raises(ValueError):
        ev.mae([])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.floats(0, 1))
def test_mae_properties(ratios, ideal):
    value = ev.mae(ratios, ideal)
    assert value >= 0
    assert (value == 0) == all(r == ideal for r in ratios)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(1, 2), st.integers(1, 2)), min_size=1, max_size=50))
def test_ratio_decomposes_over_levels(rows):
    levels, pred, truth = zip(*rows)
    overall = ev.identification_ratio(pred, truth)
    parts = ev.per_level_ratios(levels, pred, truth)
    weighted = sum(r * n for r, n in parts.values()) / len(rows)
    assert 0.0 <= overall <= 1.0
    assert weighted == pytest.approx(overall, abs=1e-12)
    assert set(parts) == {ServiceLevel(lv) for lv in levels}


def test_majority_baseline():
    records = ds.synthesize(ds.SyntheticSpec(sizes=(10, 10, 10, 10), untrustworthy_fraction=0.3))
    pred = ev.MajorityIdentifier().fit_predict(records, records[:5], ds.qws_schema())
    assert pred.labels == [TrustLabel.TRUSTWORTHY] * 5


def test_derive_seed_is_stable():
    assert ev.derive_seed(3, 1) == ev.derive_seed(3, 1)
    assert len({ev.derive_seed(3, k) for k in range(4)}) == 4


def test_data_source_validation():
    with pytest.raises(ValueError):
        ev.DataSource()
    with pytest.raises(ValueError):
        ev.DataSource(records=())


def test_record_source_labels_missing_trust_as_trustworthy():
    fixture = ds.load_fixture().records
    source = ev.DataSource(records=tuple(fixture), schema=ds.qws_schema())
    recs, _ = source.draw(0)
    assert all(r.trust_label is TrustLabel.TRUSTWORTHY for r in recs)
    assert source.describe()["records"] == 10


@pytest.fixture(scope="module")
def small_report():
    return ev.sweep_malicious(SMALL, [0.3, 0.0, 0.6], trials=2)


def test_sweep_rows_sorted_and_complete(small_report):
    assert small_report.values == [0.0, 0.3, 0.6]
    assert all(len(r.ratios) == 2 for r in small_report.rows)
    assert small_report.rows[0].mean_ratio >= 0.95


def test_report_formats(small_report):
    rows = list(csv.reader(io.StringIO(small_report.to_csv())))
    assert rows[0][0].startswith("# axis=malicious_service_ratio")
    assert small_report.fingerprint in rows[0][0]
    assert rows[1] == ev.CSV_COLUMNS and len(rows) == 2 + 3
    doc = json.loads(small_report.to_json())
    assert doc["fingerprint"] == small_report.fingerprint and len(doc["rows"]) == 3
    dat = small_report.to_gnuplot().splitlines()
    assert dat[0].startswith("#") and len(dat) == 5
    assert all(len(line.split()) == 6 for line in dat[2:])


def test_sweep_is_reproducible(small_report):
    again = ev.sweep_malicious(SMALL, [0.0, 0.3, 0.6], trials=2)
    assert again.to_json() == small_report.to_json()
    other = ev.sweep_malicious(SMALL, [0.0, 0.3, 0.6], trials=2, seed=5)
    assert other.fingerprint != small_report.fingerprint


def test_sweep_with_baseline_identifier():
    report = ev.sweep_malicious(
        SMALL, [0.3], trials=1, identifier_factory=lambda cfg: ev.MajorityIdentifier()
    )
    assert report.identifier == "majority"
    assert report.rows[0].mean_ratio == pytest.approx(0.7, abs=0.02)


def test_sweep_feedback_axis():
    report = ev.sweep_malicious(
        SMALL, [0.0, 0.5], axis="malicious_feedback_ratio", trials=1,
        adversary=ds.AdversarySpec(malicious_service_ratio=0.3),
    )
    assert report.axis == "malicious_feedback_ratio" and len(report.rows) == 2
    with pytest.raises(ValueError):
        ev.sweep_malicious(SMALL, [0.1], axis="sigma")


def test_interior_minimum():
    assert ev.interior_minimum([1, 2, 3], [0.3, 0.1, 0.2]) == {"argmin": 2.0, "interior": True}
    assert ev.interior_minimum([1, 2, 3], [0.1, 0.1, 0.2])["interior"] is False


def test_tiny_sigma_overfits():
    report = ev.sweep_sigma(ev.DataSource(synthetic=ds.SyntheticSpec()), [0.01, 1.0], trials=3)
    tiny, unit = report.rows
    assert tiny.mean_mae > unit.mean_mae
    with pytest.raises(ValueError):
        ev.sweep_sigma(SMALL, [0.0])


def test_learning_rate_sentinel_and_determinism():
    report = ev.sweep_learning_rate(SMALL, [0.01, 0.1], target=1e-6, max_epochs=5, trials=1)
    assert [r.epochs for r in report.rows] == [[5], [5]]
    assert [r.reached for r in report.rows] == [[False], [False]]
    again = ev.sweep_learning_rate(SMALL, [0.01, 0.1], target=1e-6, max_epochs=5, trials=1)
    assert again.to_json() == report.to_json()
    with pytest.raises(ValueError):
        ev.sweep_learning_rate(SMALL, [-0.1])


def test_trial_count_validated():
    with pytest.raises(ValueError):
        ev.sweep_malicious(SMALL, [0.1], trials=0)
