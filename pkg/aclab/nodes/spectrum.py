"""Node wrapper for the Jacobi spectrum of one dimension."""

from __future__ import annotations

from typing import Any, Dict, List

import pandas as pd

from aclab.solvers.cone_builder import SymmetrySplit, shoot_all, shoot_profile
from aclab.solvers.errors import ConfigError
from aclab.solvers.jacobi_spectrum import principal_eigenvalue
from utils.config import RunConfig
from utils.io import write_csv, write_json, write_manifest


def run(config: RunConfig) -> Dict[str, Any]:
    d = config.dims[0]
    if config.splits:
        for m, k in config.splits:
            if m + k != d:
                raise ConfigError(f"--split: {m}+{k} does not add up to --dim {d}")
        profiles = [shoot_profile(d, SymmetrySplit(m, k), config.tol) for m, k in config.splits]
    else:
        profiles = list(shoot_all(d, config.tol).values())

    out = config.out_dir
    rows: List[Dict[str, Any]] = []
    written = []
    for profile in profiles:
        if not profile.admissible:
            continue
        eig = principal_eigenvalue(profile, n=config.n)
        split = profile.split
        rows.append(
            {
                "d": d,
                "m": split.m,
                "k": split.k,
                "theta_fb": profile.theta_fb,
                "H": profile.H,
                "lambda": eig.lam,
                "gamma_minus": eig.gamma_minus,
                "gamma_plus": eig.gamma_plus,
                "certified_error": eig.certified_error,
                "stable": eig.stable,
            }
        )
        eigvec = pd.DataFrame({"theta": eig.theta, "phi": eig.phi})
        written.append(write_csv(eigvec, out / f"eigenfunction_d{d}_{split.m}_{split.k}.csv"))

    table = pd.DataFrame(rows)
    written.append(write_csv(table, out / f"spectrum_d{d}.csv"))
    written.append(write_json(config.to_dict(), out / "config.json"))
    write_manifest(out, written)
    return {"rows": rows, "files": [str(p) for p in written]}


__all__ = ["run"]
