"""Node wrapper for the eigenvalue/exponent table and its golden regression."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict

from aclab.solvers.errors import GoldenMismatch
from aclab.solvers.jacobi_spectrum import derived_oracles, golden_table
from utils.config import GOLDEN_REFERENCE_PATH, RunConfig
from utils.golden import load_records, records_from_table, regression_check, write_records
from utils.io import write_csv, write_json, write_manifest
from utils.logger import log_event


def run(config: RunConfig) -> Dict[str, Any]:
    d_min, d_max = min(config.dims), max(config.dims)
    result = golden_table(d_min, d_max, n=config.n, tol=config.tol)

    out = config.out_dir
    golden_path = Path(config.golden) if config.golden else GOLDEN_REFERENCE_PATH
    golden = load_records(golden_path)
    produced = records_from_table(result.rows, golden, derived_oracles(result.rows, n=config.n, tol=config.tol))
    produced_path = write_records(produced, out / "golden_produced.json")
    report = regression_check(golden_path, produced_path, keys=[r.key for r in produced])

    written = [
        write_csv(result.rows, out / "table.csv"),
        write_csv(result.candidates, out / "candidates.csv"),
        produced_path,
        write_csv(report.rows, out / "regression.csv"),
        write_json(config.to_dict(), out / "config.json"),
    ]
    write_manifest(out, written)
    log_event("table", "regression", {"golden": str(golden_path)}, passed=report.passed, max_rel=report.max_rel_deviation)
    if not report.passed:
        raise GoldenMismatch(
            f"{len(report.failures)} record(s) outside tolerance: {', '.join(report.failures)}\n{report.diff_text()}",
            report=report,
        )
    return {"rows": result.rows.to_dict("records"), "max_rel_deviation": report.max_rel_deviation}


__all__ = ["run"]
