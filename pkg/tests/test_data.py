import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ttpredict.data import (
    CovariateSchema,
    ObservationalDataset,
    default_schema,
    ingest_text,
    positivity_report,
    summarize,
    to_canonical_csv,
)
from ttpredict.errors import DomainError, ParseError, PositivityError, SchemaError

SCHEMA = CovariateSchema(
    numeric_columns=("age",),
    binary_columns=("married",),
    treatment_column="smoke",
    outcome_column="w",
    eligibility_filters=(("race", (1,)),),
    treatment_recode="invert",
)

FOUR_ROWS = """w,smoke,age,married,race
3000,0,25,1,1
3100,1,30,0,1
2900,0,22,1,1
3500,1,40,1,2
"""


def test_filter_and_invert_fixture():
    ds = ingest_text(FOUR_ROWS, SCHEMA)
    assert ds.n == 3
    assert ds.t.tolist() == [1, 0, 1]
    assert ds.y.tolist() == [3000, 3100, 2900]
    assert ds.x[:, 0].tolist() == [25, 30, 22]
    assert ds.n_dropped_ineligible == 1


def test_header_only_is_positivity_error():
    with pytest.raises(PositivityError):
        ingest_text("w,smoke,age,married,race\n", SCHEMA)


def test_single_arm_is_positivity_error():
    with pytest.raises(PositivityError):
        ingest_text("w,smoke,age,married,race\n1,0,2,1,1\n2,0,3,0,1\n", SCHEMA)


def test_missing_column_named():
    with pytest.raises(SchemaError, match="married"):
        ingest_text("w,smoke,age,race\n1,0,2,1\n", SCHEMA)


def test_non_numeric_cell_reports_row():
    text = FOUR_ROWS.replace("2900,0,22", "2900,0,abc")
    with pytest.raises(ParseError, match="row 3"):
        ingest_text(text, SCHEMA)


def test_missing_values_dropped_and_counted():
    text = FOUR_ROWS + "3200,1,NA,1,1\n3300,0,,1,1\n"
    ds = ingest_text(text, SCHEMA)
    assert ds.n == 3
    assert ds.n_dropped_missing == 2


def test_binary_column_checked():
    with pytest.raises(SchemaError):
        ingest_text("w,smoke,age,married,race\n1,0,2,2,1\n2,1,3,0,1\n", SCHEMA)


def test_schema_rejects_overlapping_roles():
    with pytest.raises(SchemaError):
        CovariateSchema(("a",), (), "a", "y")


def test_schema_roundtrip():
    s = default_schema()
    assert CovariateSchema.from_dict(json.loads(json.dumps(s.to_dict()))) == s


def test_application_columns(birthweight):
    assert birthweight.n == 3754
    assert birthweight.covariate_names == (
        "mage", "medu", "fage", "fedu", "mmarried_", "foreign", "fbaby_", "deadkids")


def test_summarize_fixture_by_hand():
    text = "w,smoke,age,married,race\n10,1,20,1,1\n20,0,30,0,1\n30,1,40,1,1\n40,0,50,0,1\n60,0,60,1,1\n"
    s = summarize(ingest_text(text, SCHEMA))
    # after inversion treated rows are smoke == 0: w = 20, 40, 60
    assert s["n_treated"] == 3 and s["n_control"] == 2
    assert s["mean_outcome"] == 32.0
    assert s["mean_outcome_treated"] == 40.0
    assert s["mean_outcome_control"] == 20.0
    assert s["covariate_means"] == {"age": 40.0, "married": 0.6}


def test_summarize_constant_outcome():
    text = "w,smoke,age,married,race\n7,1,20,1,1\n7,0,30,0,1\n7,1,40,1,1\n"
    s = summarize(ingest_text(text, SCHEMA))
    assert s["mean_outcome_treated"] == s["mean_outcome_control"] == 7.0


rows = st.lists(
    st.tuples(st.integers(0, 9000), st.integers(0, 1), st.floats(10, 60, allow_nan=False).map(lambda v: round(v, 3)),
              st.integers(0, 1), st.integers(1, 2)),
    min_size=2, max_size=40,
)


def _csv(rs):
    return "w,smoke,age,married,race\n" + "".join(f"{a},{b},{c!r},{d},{e}\n" for a, b, c, d, e in rs)


def _try(text, schema):
    try:
        return ingest_text(text, schema)
    except PositivityError:
        return None


@given(rows)
def test_canonical_reingest_is_identity(rs):
    ds = _try(_csv(rs), SCHEMA)
    if ds is None:
        return
    again = ingest_text(to_canonical_csv(ds), SCHEMA.canonical())
    assert again == ds
    assert to_canonical_csv(again) == to_canonical_csv(ds)


@given(rows)
def test_filter_preserves_order(rs):
    ds = _try(_csv(rs), SCHEMA)
    if ds is None:
        return
    kept = [r for r in rs if r[4] == 1]
    assert ds.y.tolist() == [float(r[0]) for r in kept]
    assert ds.x[:, 0].tolist() == [r[2] for r in kept]


@given(rows)
def test_means_recombine(rs):
    ds = _try(_csv(rs), SCHEMA)
    if ds is None:
        return
    s = summarize(ds)
    assert s["n_treated"] + s["n_control"] == s["n"]
    pooled = (s["n_treated"] * s["mean_outcome_treated"] + s["n_control"] * s["mean_outcome_control"]) / s["n"]
    assert pooled == pytest.approx(s["mean_outcome"], rel=1e-12, abs=1e-12)


def _tiny():
    return ObservationalDataset(np.array([1.0, 2.0]), np.array([1, 0], np.int8), np.zeros((2, 2)),
                                CovariateSchema(("a",), ("b",), "t", "y"))


def test_positivity_report_clean():
    r = positivity_report(_tiny(), np.array([0.5, 0.5]), eps=0.01)
    assert r["n_violations"] == 0


def test_positivity_report_flags_threshold():
    pi = np.array([0.004, 0.5])
    before = pi.copy()
    r = positivity_report(_tiny(), pi, eps=0.01)
    assert r["n_violations"] == 1 and r["n_below"] == 1 and r["n_violations_treated"] == 1
    assert np.array_equal(pi, before)


def test_positivity_report_domain():
    with pytest.raises(DomainError):
        positivity_report(_tiny(), np.array([0.0, 0.5]))
