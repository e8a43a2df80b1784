"""Node wrapper for difference-field diagnostics of an ordered pair."""

from __future__ import annotations

from dataclasses import asdict
from typing import Any, Dict

import pandas as pd

from aclab.solvers.errors import ConfigError
from aclab.solvers.sweep_harness import check_ordering, difference_diagnostics
from utils.config import RunConfig
from utils.io import load_field, write_csv, write_json, write_manifest


def run(config: RunConfig) -> Dict[str, Any]:
    try:
        u = load_field(config.pair[0])
        v = load_field(config.pair[1])
    except FileNotFoundError as e:
        raise ConfigError(f"--pair: {e}") from e
    audit = check_ordering([(0.0, u), (1.0, v)])
    rows = difference_diagnostics(u, v, config.rho)

    out = config.out_dir
    frame = pd.DataFrame([asdict(r) for r in rows])
    written = [
        write_csv(frame, out / "diagnostics.csv"),
        write_json({"audit": audit.to_dict(), "annuli": frame.to_dict("records")}, out / "diagnostics.json"),
        write_json(config.to_dict(), out / "config.json"),
    ]
    write_manifest(out, written)
    return {"audit": audit.to_dict(), "annuli": frame.to_dict("records"), "files": [str(p) for p in written]}


__all__ = ["run"]
