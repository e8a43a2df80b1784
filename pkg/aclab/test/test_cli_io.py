from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest

from aclab.cli import build_parser, load_config, parse_and_dispatch
from aclab.solvers.errors import ConfigError, SchemaMismatch
from aclab.solvers.grid_solver import GridGeometry, field_from_function, flat_trace
from aclab.test.testcase.cases import BAD_CONFIG_CASES, CLI_SOLVE_CASES
from utils.config import RunConfig, parse_dims, parse_t_grid
from utils.io import (
    file_hash,
    load_field,
    read_csv,
    read_json,
    save_field,
    write_csv,
    write_manifest,
    write_polylines_svg,
)


def test_cone_command_writes_profile(tmp_path):
    out = tmp_path / "cone"
    code = parse_and_dispatch(["cone", "--dim", "7", "--split", "4,3", "--output-dir", str(out)])
    assert code == 0
    header = read_json(out / "cone_d7_4_3.json")
    assert header["admissible"] is True
    assert 0.0 < header["theta_fb"] < np.pi / 2
    assert 0.0 < header["max_gradient"] <= 1.0 + 1e-6
    samples = read_csv(out / "cone_d7_4_3.csv")
    assert list(samples.columns) == ["theta", "g", "g_prime"]
    hashes = read_json(out / "hashes.json")
    assert hashes["cone_d7_4_3.csv"] == file_hash(out / "cone_d7_4_3.csv")


@pytest.mark.parametrize("case", CLI_SOLVE_CASES, ids=[c["id"] for c in CLI_SOLVE_CASES])
def test_solve_command_round_trips_field(tmp_path, case):
    out = tmp_path / case["id"]
    argv = ["solve", "--geometry", case["geometry"], "--data", case["data"], "--h", case["h"], "--output-dir", str(out)]
    assert parse_and_dispatch(argv) == 0
    field = load_field(out / "field.json")
    assert field.converged
    raw = np.fromfile(out / "field.bin", dtype="<f8")
    np.testing.assert_array_equal(raw.reshape(field.u.shape), field.u)
    summary = read_json(out / "summary.json")
    assert summary["data"] == "flat-0.25"
    assert "growth_lower" not in summary


def test_solve_command_reports_growth_on_fine_grids(tmp_path):
    out = tmp_path / "fine"
    argv = ["solve", "--geometry", "planar", "--data", "flat:0.25", "--h", "0.015625", "--output-dir", str(out)]
    assert parse_and_dispatch(argv) == 0
    summary = read_json(out / "summary.json")
    assert 0.5 < summary["growth_lower"] <= summary["growth_upper"] < 1.2
    growth = read_csv(out / "field_growth.csv")
    assert list(growth.columns) == ["r", "sup_u_over_r"]
    assert growth["r"].iloc[0] == pytest.approx(0.125)


@pytest.mark.parametrize("case", BAD_CONFIG_CASES, ids=[c["id"] for c in BAD_CONFIG_CASES])
def test_invalid_configuration_exits_with_two(tmp_path, case):
    assert parse_and_dispatch(case["argv"] + ["--output-dir", str(tmp_path / "bad")]) == 2


def test_usage_errors_exit_with_two():
    assert parse_and_dispatch(["cone", "--split", "4,3"]) == 2
    assert parse_and_dispatch(["bogus"]) == 2


def test_missing_pair_file_exits_with_two(tmp_path):
    argv = ["diagnose", "--pair", str(tmp_path / "a.json"), str(tmp_path / "b.json")]
    assert parse_and_dispatch(argv) == 2


def test_config_file_is_merged_under_flags(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"command": "cone", "dims": [7], "splits": [[4, 3]], "tol": 1e-9}), encoding="utf-8")
    args = build_parser().parse_args(["cone", "--dim", "8", "--split", "4,4", "--config", str(path)])
    config = load_config(args)
    assert config.tol == 1e-9
    assert config.dims == (8,)
    assert config.splits == ((4, 4),)


def test_config_file_for_another_command_is_rejected(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"command": "table", "dims": [7, 8]}), encoding="utf-8")
    args = build_parser().parse_args(["cone", "--dim", "7", "--split", "4,3", "--config", str(path)])
    with pytest.raises(ConfigError):
        load_config(args)


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"command": "cone", "colour": "red"})
    with pytest.raises(ConfigError):
        RunConfig(command="table", dims=(6, 7))
    with pytest.raises(ConfigError):
        RunConfig(command="solve", h=0.0)
    config = RunConfig.from_json(RunConfig(command="sweep", t_grid="log:1e-4:1e-1:9").to_json())
    assert config.t_grid == "log:1e-4:1e-1:9"


def test_grid_and_dimension_parsers():
    assert parse_dims("7..14") == tuple(range(7, 15))
    assert parse_dims("7,9") == (7, 9)
    ts = parse_t_grid("log:1e-4:1e-1:4")
    np.testing.assert_allclose(ts, [1e-4, 1e-3, 1e-2, 1e-1])
    assert parse_t_grid("lin:0:0.1:3") == pytest.approx([0.0, 0.05, 0.1])
    for bad in ("log:0:0.1:4", "lin:0.1:0:3", "cubic:0:1:3", "lin:0:0.1"):
        with pytest.raises(ConfigError):
            parse_t_grid(bad)


def test_field_sidecar_round_trip(tmp_path):
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 16)
    field = field_from_function(geo, flat_trace(0.3))
    bin_path, json_path = save_field(field, tmp_path / "f")
    meta = read_json(json_path)
    assert meta["dtype"] == "<f8"
    assert meta["data"] == bin_path.name
    loaded = load_field(json_path)
    np.testing.assert_array_equal(loaded.u, field.u)
    assert loaded.geometry == geo
    assert loaded.energy == pytest.approx(field.energy)


def test_field_with_wrong_size_is_rejected(tmp_path):
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 16)
    _, json_path = save_field(field_from_function(geo, flat_trace(0.3)), tmp_path / "f")
    meta = read_json(json_path)
    meta["shape"] = [3, 3]
    json_path.write_text(json.dumps(meta), encoding="utf-8")
    with pytest.raises(SchemaMismatch):
        load_field(json_path)


def test_csv_keeps_full_precision(tmp_path):
    frame = pd.DataFrame({"x": [0.1, 1.0 / 3.0, 2.0**-40]})
    path = write_csv(frame, tmp_path / "t.csv")
    assert b"\r\n" not in path.read_bytes()
    assert read_csv(path)["x"].tolist() == frame["x"].tolist()


def test_svg_and_manifest(tmp_path):
    poly = np.array([[0.0, 0.0], [0.5, 0.5], [0.9, 0.1]])
    svg = write_polylines_svg([("a", [poly])], 1.0, tmp_path / "c.svg", title="curves & more")
    text = svg.read_text(encoding="utf-8")
    assert text.startswith("<svg")
    assert text.count("<polyline") == 1
    assert "curves &amp; more" in text
    manifest = read_json(write_manifest(tmp_path, [svg]))
    assert manifest == {"c.svg": file_hash(svg)}


def test_spectrum_on_flat_split_is_neutral(tmp_path):
    out = tmp_path / "spectrum"
    argv = ["spectrum", "--dim", "7", "--split", "6,1", "-n", "256", "--output-dir", str(out)]
    assert parse_and_dispatch(argv) == 0
    table = read_csv(out / "spectrum_d7.csv")
    assert len(table) == 1
    assert table["lambda"].iloc[0] == pytest.approx(0.0, abs=1e-6)


@pytest.mark.slow
def test_table_against_a_corrupted_golden_file_exits_with_one(tmp_path):
    from utils.config import GOLDEN_REFERENCE_PATH

    golden = read_json(GOLDEN_REFERENCE_PATH)
    for record in golden["records"]:
        if record["key"] == "lambda_7":
            record["value"] += 1.0
    bad = tmp_path / "golden_bad.json"
    bad.write_text(json.dumps(golden))
    argv = ["table", "--dims", "7..7", "--golden", str(bad), "--output-dir", str(tmp_path / "table")]
    assert parse_and_dispatch(argv) == 1
    regression = read_csv(tmp_path / "table" / "regression.csv")
    assert "lambda_7" in set(regression["key"])
