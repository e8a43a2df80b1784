from __future__ import annotations

import json
import math

import pandas as pd
import pytest

from aclab.solvers.errors import MissingKey, SchemaMismatch
from aclab.solvers.jacobi_spectrum import derived_oracles
from utils.config import GOLDEN_REFERENCE_PATH
from utils.golden import (
    SCHEMA,
    GoldenRecord,
    load_records,
    records_from_table,
    regression_check,
    write_records,
)


@pytest.fixture()
def golden():
    return load_records(GOLDEN_REFERENCE_PATH)


def _produced(golden, tmp_path, overrides=None, drop=()):
    overrides = overrides or {}
    records = [
        GoldenRecord(key=k, value=overrides.get(k, r.value), provenance=r.provenance, tolerance=r.tolerance)
        for k, r in golden.items()
        if k not in drop
    ]
    return write_records(records, tmp_path / "produced.json")


def test_reference_file_covers_the_table(golden):
    for d in range(7, 15):
        assert golden[f"lambda_{d}"].provenance == "published_table"
        assert golden[f"gamma_{d}"].tolerance == pytest.approx(5e-3)
    assert golden["lambda_7"].value == pytest.approx(5.70)
    assert golden["gamma_14"].value == pytest.approx(1.1734)
    assert golden["lambda_step_7"].provenance == "derived_oracle"


def test_identical_values_pass(golden, tmp_path):
    report = regression_check(GOLDEN_REFERENCE_PATH, _produced(golden, tmp_path))
    assert report.passed
    assert report.max_rel_deviation == 0.0
    assert len(report.rows) == len(golden)


def test_perturbed_lambda_is_listed(golden, tmp_path):
    produced = _produced(golden, tmp_path, overrides={"lambda_7": 5.73})
    report = regression_check(GOLDEN_REFERENCE_PATH, produced)
    assert not report.passed
    assert report.failures == ["lambda_7"]
    assert "FAIL lambda_7" in report.diff_text()
    assert report.max_rel_deviation == pytest.approx(0.03 / 5.70)


def test_missing_derived_record_is_named(golden, tmp_path):
    produced = _produced(golden, tmp_path, drop={"lambda_step_9"})
    with pytest.raises(MissingKey, match="lambda_step_9"):
        regression_check(GOLDEN_REFERENCE_PATH, produced)


def test_restricted_keys(golden, tmp_path):
    produced = _produced(golden, tmp_path, drop={"lambda_step_9"})
    report = regression_check(GOLDEN_REFERENCE_PATH, produced, keys=["lambda_7", "gamma_7"])
    assert report.passed
    assert list(report.rows["key"]) == ["gamma_7", "lambda_7"]


@pytest.mark.parametrize(
    "payload",
    [
        "not json",
        json.dumps({"schema": "other", "records": []}),
        json.dumps({"schema": SCHEMA, "records": [{"key": "x", "value": 1.0}]}),
        json.dumps(
            {"schema": SCHEMA, "records": [{"key": "x", "value": 1.0, "provenance": "guess", "tolerance": 0.1}]}
        ),
        json.dumps(
            {
                "schema": SCHEMA,
                "records": [
                    {"key": "x", "value": 1.0, "provenance": "trivial", "tolerance": 0.1},
                    {"key": "x", "value": 2.0, "provenance": "trivial", "tolerance": 0.1},
                ],
            }
        ),
    ],
)
def test_schema_violations(tmp_path, payload):
    path = tmp_path / "bad.json"
    path.write_text(payload, encoding="utf-8")
    with pytest.raises(SchemaMismatch):
        load_records(path)


def test_records_from_table(golden):
    table = pd.DataFrame(
        [
            {"d": 7, "m": 4, "k": 3, "lambda": 5.71, "gamma": 1.75},
            {"d": 8, "m": 4, "k": 4, "lambda": 6.70, "gamma": 1.48},
        ]
    )
    produced = {r.key: r for r in records_from_table(table, golden)}
    assert set(produced) == {"lambda_7", "gamma_7", "lambda_8", "gamma_8", "lambda_step_7"}
    assert produced["lambda_step_7"].value == pytest.approx(0.99)
    assert produced["lambda_7"].provenance == "published_table"
    assert produced["lambda_7"].source == "computed"


def test_records_from_table_carries_derived_values(golden):
    table = pd.DataFrame([{"d": 7, "m": 1, "k": 6, "lambda": 5.70, "gamma": 1.7573}])
    produced = {r.key: r for r in records_from_table(table, golden, {"theta_fb_7_4_3": 0.46, "extra": 1.0})}
    assert produced["theta_fb_7_4_3"].provenance == "derived_oracle"
    assert produced["theta_fb_7_4_3"].tolerance == golden["theta_fb_7_4_3"].tolerance
    # keys absent from the golden file get a zero tolerance
    assert produced["extra"].tolerance == 0.0


def test_closed_form_records_agree_with_their_formulas(golden):
    root5 = math.sqrt(5.0)
    area = 8 * math.pi**3 * (2 / 15 - 22 / (375 * root5))
    assert golden["theta_fb_7_4_3"].value == pytest.approx(math.atan(0.5), abs=1e-15)
    assert golden["section_area_7_4_3"].value == pytest.approx(area, abs=1e-6)
    assert golden["weiss_density_7_4_3"].value == pytest.approx(area / 7, abs=1e-7)
    assert golden["mean_curv_total_7_4_3"].value == pytest.approx(6.4 * math.pi**3 / root5, abs=1e-6)
    assert golden["quotient_one_7_4_3"].value == pytest.approx(-(0.8 / root5) / (area / (8 * math.pi**3)), abs=1e-7)
    for d in range(7, 15):
        assert golden[f"matched_m_{d}"].value == 1.0


def test_derived_oracles_match_the_reference(golden, tmp_path):
    table = pd.DataFrame([{"d": 7, "m": 1, "k": 6, "lambda": 5.70, "gamma": 1.7573}])
    derived = derived_oracles(table, n=1024)
    assert set(derived) == {
        "theta_fb_7_4_3",
        "H_7_4_3",
        "weiss_density_7_4_3",
        "section_area_7_4_3",
        "mean_curv_total_7_4_3",
        "hessian_sq_7_4_3",
        "quotient_one_7_4_3",
        "matched_m_7",
        "weiss_density_7_1_6",
    }
    produced = write_records(
        [GoldenRecord(key=k, value=v, provenance="derived_oracle", tolerance=0.0) for k, v in derived.items()],
        tmp_path / "derived.json",
    )
    report = regression_check(GOLDEN_REFERENCE_PATH, produced, keys=sorted(derived))
    assert report.passed, report.diff_text()
