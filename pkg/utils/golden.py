"""Golden records and regression checks against them."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import pandas as pd

from aclab.solvers.errors import MissingKey, SchemaMismatch
from utils.io import write_json

SCHEMA = "aclab-golden/1"
PROVENANCES = ("published_table", "derived_oracle", "trivial")


@dataclass(frozen=True)
class GoldenRecord:
    key: str
    value: float
    provenance: str
    tolerance: float
    source: str = ""

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise SchemaMismatch(f"record {self.key!r}: provenance {self.provenance!r} not in {PROVENANCES}")
        if not self.tolerance >= 0:
            raise SchemaMismatch(f"record {self.key!r}: tolerance must be >= 0")


@dataclass(frozen=True, eq=False)
class RegressionReport:
    rows: pd.DataFrame
    max_rel_deviation: float

    @property
    def passed(self) -> bool:
        return bool(self.rows["passed"].all()) if not self.rows.empty else True

    @property
    def failures(self) -> List[str]:
        return self.rows.loc[~self.rows["passed"], "key"].tolist()

    def diff_text(self) -> str:
        lines = []
        for row in self.rows.itertuples(index=False):
            flag = "ok  " if row.passed else "FAIL"
            lines.append(
                f"{flag} {row.key}: golden={row.golden:.10g} produced={row.produced:.10g} "
                f"dev={row.deviation:.3g} tol={row.tolerance:.3g}"
            )
        lines.append(f"max relative deviation {self.max_rel_deviation:.3g}")
        return "\n".join(lines)


def _parse(path: Path) -> Dict[str, GoldenRecord]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaMismatch(f"{path}: not valid JSON ({e})") from e
    if not isinstance(data, dict) or data.get("schema") != SCHEMA or not isinstance(data.get("records"), list):
        raise SchemaMismatch(f"{path}: expected an object with schema {SCHEMA!r} and a 'records' list")
    out: Dict[str, GoldenRecord] = {}
    for item in data["records"]:
        try:
            rec = GoldenRecord(
                key=str(item["key"]),
                value=float(item["value"]),
                provenance=str(item["provenance"]),
                tolerance=float(item["tolerance"]),
                source=str(item.get("source", "")),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaMismatch(f"{path}: malformed record {item!r}") from e
        if rec.key in out:
            raise SchemaMismatch(f"{path}: duplicate key {rec.key!r}")
        out[rec.key] = rec
    return out


def load_records(path: Path) -> Dict[str, GoldenRecord]:
    return _parse(path)


def write_records(records: Iterable[GoldenRecord], path: Path) -> Path:
    rows = sorted((asdict(r) for r in records), key=lambda r: r["key"])
    return write_json({"schema": SCHEMA, "records": rows}, path)


def records_from_table(
    table: pd.DataFrame,
    golden: Dict[str, GoldenRecord],
    derived: Optional[Dict[str, float]] = None,
) -> List[GoldenRecord]:
    """Produced records (lambda_d, gamma_d, lambda_step_d) for a table of matched rows, plus ``derived`` values."""
    produced: List[GoldenRecord] = []

    def add(key: str, value: float) -> None:
        ref = golden.get(key)
        produced.append(
            GoldenRecord(
                key=key,
                value=float(value),
                provenance=ref.provenance if ref else "derived_oracle",
                tolerance=ref.tolerance if ref else 0.0,
                source="computed",
            )
        )

    by_d = {int(r["d"]): r for r in table.to_dict("records")}
    for d, row in sorted(by_d.items()):
        add(f"lambda_{d}", row["lambda"])
        add(f"gamma_{d}", row["gamma"])
        if d + 1 in by_d:
            add(f"lambda_step_{d}", by_d[d + 1]["lambda"] - row["lambda"])
    for key, value in sorted((derived or {}).items()):
        add(key, value)
    return produced


def regression_check(golden_path: Path, produced_path: Path, keys: Optional[Iterable[str]] = None) -> RegressionReport:
    """Compare produced values with each golden record's own tolerance."""
    golden = _parse(golden_path)
    produced = _parse(produced_path)
    wanted = sorted(golden) if keys is None else sorted(keys)
    rows = []
    for key in wanted:
        if key not in golden:
            raise MissingKey(f"golden file {golden_path} has no record {key!r}")
        if key not in produced:
            raise MissingKey(f"produced file {produced_path} lacks record {key!r}")
        ref, got = golden[key], produced[key]
        dev = abs(got.value - ref.value)
        rows.append(
            {
                "key": key,
                "golden": ref.value,
                "produced": got.value,
                "deviation": dev,
                "rel_deviation": dev / abs(ref.value) if ref.value else dev,
                "tolerance": ref.tolerance,
                "provenance": ref.provenance,
                "passed": dev <= ref.tolerance,
            }
        )
    frame = pd.DataFrame(
        rows, columns=["key", "golden", "produced", "deviation", "rel_deviation", "tolerance", "provenance", "passed"]
    )
    max_rel = float(frame["rel_deviation"].max()) if not frame.empty else 0.0
    return RegressionReport(rows=frame, max_rel_deviation=max_rel)


__all__ = [
    "SCHEMA",
    "PROVENANCES",
    "GoldenRecord",
    "RegressionReport",
    "load_records",
    "write_records",
    "records_from_table",
    "regression_check",
]
