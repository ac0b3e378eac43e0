import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qostrust.qos_model import (
    AttributeSchema,
    NormalizationContext,
    Polarity,
    QosRecord,
    ServiceClass,
    ServiceLevel,
    TrustLabel,
    build_context,
    effective_reputation,
    feature_matrix,
    normalize_class,
    normalize_matrix,
    saw_normalize,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def one_attr_class(values, polarity="positive"):
    schema = AttributeSchema(("q",), (polarity,))
    return ServiceClass(schema, tuple(QosRecord(f"s{i}", (v,)) for i, v in enumerate(values)))


def test_context_min_max():
    ctx = build_context(one_attr_class([1, 5, 3]))
    assert ctx.q_min == (1.0,) and ctx.q_max == (5.0,)


@pytest.mark.parametrize("values", [[7.0], [2.0, 2.0, 2.0]])
def test_context_degenerate(values):
    ctx = build_context(one_attr_class(values))
    assert ctx.q_min == ctx.q_max == (values[0],)


def test_context_empty():
    with pytest.raises(ValueError, match="empty service class"):
        build_context(ServiceClass(AttributeSchema(("q",), ("positive",)), ()))


@pytest.mark.parametrize(
    "args, expected",
    [
        ((3, Polarity.POSITIVE, 1, 5), 0.5),
        ((3, Polarity.NEGATIVE, 1, 5), 0.5),
        ((7, Polarity.POSITIVE, 7, 7), 1.0),
        ((5, Polarity.POSITIVE, 1, 5), 1.0),
        ((1, Polarity.POSITIVE, 1, 5), 0.0),
        ((2, Polarity.NEGATIVE, 1, 5), 0.75),
    ],
)
def test_saw_examples(args, expected):
    assert saw_normalize(*args) == expected


def test_out_of_range_clamps():
    assert saw_normalize(9, Polarity.POSITIVE, 1, 5) == 1.0
    assert saw_normalize(-3, Polarity.POSITIVE, 1, 5) == 0.0
    assert saw_normalize(9, Polarity.NEGATIVE, 1, 5) == 0.0


@pytest.mark.parametrize("polarity, expected", [("positive", [0.0, 1.0]), ("negative", [1.0, 0.0])])
def test_normalize_class_endpoints(polarity, expected):
    out = normalize_class(one_attr_class([0.0, 10.0], polarity))
    assert [v[0] for v in out] == expected


def test_normalize_matrix_matches_scalar_oracle(rng):
    schema = AttributeSchema(tuple("abcd"), ("positive", "negative", "positive", "negative"))
    values = rng.normal(size=(5, 4)) * 10
    cls = ServiceClass(schema, tuple(QosRecord(f"s{i}", row) for i, row in enumerate(values)))
    out = np.array(normalize_class(cls))
    lo, hi = values.min(axis=0), values.max(axis=0)
    for i in range(5):
        for j, pol in enumerate(schema.polarities):
            q = values[i, j]
            want = (q - lo[j]) / (hi[j] - lo[j]) if pol is Polarity.POSITIVE else (hi[j] - q) / (hi[j] - lo[j])
            assert math.isclose(out[i, j], want, rel_tol=0, abs_tol=1e-15)
    assert np.all((out >= 0) & (out <= 1))


@pytest.mark.parametrize("fb, expected", [((1.0, 0.0), 0.5), ((), 0.5), ((0.9, 0.9, 0.9), 0.9)])
def test_effective_reputation(fb, expected):
    assert effective_reputation(QosRecord("s", (1.0,), fb)) == pytest.approx(expected, abs=1e-15)


def test_feature_matrix_appends_reputation():
    recs = [QosRecord("a", (1.0, 2.0), (1.0, 0.0)), QosRecord("b", (3.0, 4.0))]
    X = feature_matrix(recs, with_reputation=True)
    assert X.shape == (2, 3)
    assert X[:, 2].tolist() == [0.5, 0.5]
    assert feature_matrix(recs, with_reputation=False).shape == (2, 2)


def test_record_validation():
    with pytest.raises(ValueError):
        QosRecord("s", (float("nan"),))
    with pytest.raises(ValueError):
        QosRecord("s", (1.0,), (1.5,))
    with pytest.raises(ValueError):
        QosRecord("s", (1.0, 2.0)).check(AttributeSchema(("q",), ("positive",)))


def test_schema_validation_and_roundtrip():
    with pytest.raises(ValueError):
        AttributeSchema(("a", "a"), ("positive", "positive"))
    with pytest.raises(ValueError):
        AttributeSchema(("a",), ("sideways",))
    schema = AttributeSchema(("a", "b"), ("positive", "negative"))
    assert AttributeSchema.from_dict(schema.to_dict()) == schema
    ext = schema.with_reputation()
    assert ext.names[-1] == "reputation" and ext.polarities[-1] is Polarity.POSITIVE
    assert ext.with_reputation() == ext


def test_label_parsing():
    assert ServiceLevel.parse("Gold") is ServiceLevel.GOLD
    assert TrustLabel.parse("untrustworthy") is TrustLabel.UNTRUSTWORTHY
    assert TrustLabel.UNTRUSTWORTHY.value == 1 and TrustLabel.TRUSTWORTHY.value == 2


def test_context_roundtrip():
    ctx = NormalizationContext((0.0, 1.0), (2.0, 3.0))
    assert NormalizationContext.from_dict(ctx.to_dict()) == ctx


# -- properties -------------------------------------------------------------

@given(finite, finite, finite, st.sampled_from(list(Polarity)))
def test_saw_in_unit_interval(v, a, b, pol):
    lo, hi = min(a, b), max(a, b)
    assert 0.0 <= saw_normalize(v, pol, lo, hi) <= 1.0


@given(finite, finite, finite)
def test_saw_polarity_duality(v, a, b):
    lo, hi = min(a, b), max(a, b)
    if lo < hi:
        pos = saw_normalize(v, Polarity.POSITIVE, lo, hi)
        neg = saw_normalize(v, Polarity.NEGATIVE, lo, hi)
        assert neg == pytest.approx(1.0 - pos, abs=1e-12)


@given(finite, finite, finite, finite)
def test_saw_monotone(v1, v2, a, b):
    lo, hi = min(a, b), max(a, b)
    v1, v2 = min(v1, v2), max(v1, v2)
    assert saw_normalize(v1, Polarity.POSITIVE, lo, hi) <= saw_normalize(v2, Polarity.POSITIVE, lo, hi)
    assert saw_normalize(v1, Polarity.NEGATIVE, lo, hi) >= saw_normalize(v2, Polarity.NEGATIVE, lo, hi)


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=20), st.sampled_from(["positive", "negative"]))
def test_context_of_normalized_class(rows, polarity):
    schema = AttributeSchema(("a", "b"), (polarity, "positive"))
    cls = ServiceClass(schema, tuple(QosRecord(f"s{i}", r) for i, r in enumerate(rows)))
    normed = normalize_class(cls)
    again = build_context(ServiceClass(schema, tuple(QosRecord(f"n{i}", v) for i, v in enumerate(normed))))
    raw = np.array(rows)
    for j in range(2):
        if raw[:, j].min() < raw[:, j].max():
            assert (again.q_min[j], again.q_max[j]) == pytest.approx((0.0, 1.0), abs=1e-12)
        else:
            assert again.q_min[j] == again.q_max[j] == 1.0


@given(st.lists(finite, min_size=2, max_size=10))
def test_normalize_matrix_agrees_with_scalar(values):
    schema = AttributeSchema(("q",), ("negative",))
    ctx = NormalizationContext((min(values),), (max(values),))
    out = normalize_matrix(np.array(values)[:, None], schema, ctx)[:, 0]
    want = [saw_normalize(v, Polarity.NEGATIVE, min(values), max(values)) for v in values]
    assert out.tolist() == pytest.approx(want, abs=1e-12)
