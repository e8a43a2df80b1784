"""Node wrapper for the cone profile builder."""

from __future__ import annotations

from typing import Any, Dict

import numpy as np
import pandas as pd

from aclab.solvers.cone_builder import (
    SymmetrySplit,
    gradient_norm_sq,
    section_integrals,
    shoot_profile,
    weiss_density,
)
from aclab.solvers.errors import ConfigError
from utils.config import RunConfig
from utils.io import write_csv, write_json, write_manifest


def run(config: RunConfig) -> Dict[str, Any]:
    if not config.splits:
        raise ConfigError("--split: cone needs a split M,K")
    d = config.dims[0]
    m, k = config.splits[0]
    if m + k != d:
        raise ConfigError(f"--split: {m}+{k} does not add up to --dim {d}")
    profile = shoot_profile(d, SymmetrySplit(m, k), config.tol)

    header = profile.header()
    header.update(
        certified_error=profile.certified_error,
        ode_residual=profile.residual,
        max_gradient=float(np.sqrt(np.max(gradient_norm_sq(profile)))),
    )
    if profile.admissible:
        integrals = section_integrals(profile)
        header.update(
            hessian_sq=integrals.hessian_sq,
            mean_curv_total=integrals.mean_curv_total,
            section_area=integrals.section_area,
            weiss_density_quadrature=weiss_density(profile),
        )

    out = config.out_dir
    stem = f"cone_d{d}_{m}_{k}"
    samples = pd.DataFrame({"theta": profile.theta, "g": profile.g, "g_prime": profile.g_prime})
    written = [
        write_csv(samples, out / f"{stem}.csv"),
        write_json(header, out / f"{stem}.json"),
        write_json(config.to_dict(), out / "config.json"),
    ]
    write_manifest(out, written)
    return {"profile": header, "files": [str(p) for p in written]}


__all__ = ["run"]
