"""Node wrapper for a monotone family sweep."""

from __future__ import annotations

from typing import Any, Dict

import numpy as np

from aclab.nodes.inputs import build_trace, parse_geometry
from aclab.solvers.grid_solver import MinimizeOptions
from aclab.solvers.sweep_harness import FamilySpec, compare_refinements, refine_family, run_family
from utils.config import RunConfig, parse_t_grid
from utils.io import save_field, write_csv, write_json, write_loglog_svg, write_manifest, write_polylines_svg


def run(config: RunConfig) -> Dict[str, Any]:
    geometry = parse_geometry(config)
    base, label = build_trace(config, geometry)
    spec = FamilySpec(
        base=base,
        t_grid=tuple(parse_t_grid(config.t_grid)),
        geometry=geometry,
        label=label,
        opts=MinimizeOptions(max_sweeps=config.max_sweeps, energy_tol=config.energy_tol, seed=config.seed),
    )
    report = run_family(spec)

    out = config.out_dir
    written = []
    for i, summary in enumerate(report.summaries):
        if summary.field is not None:
            written.extend(save_field(summary.field, out / "fields" / f"t{i:02d}"))
    pairs = report.pairs.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        pairs["log_dt"] = np.log(pairs["t"] - pairs["s"])
        pairs["log_gap"] = np.log(pairs["gap"])
        pairs["log_sing_dist"] = np.log(pairs["sing_dist"])
    written += [
        write_csv(report.summary_frame(), out / "fields.csv"),
        write_csv(pairs, out / "pairs.csv"),
        write_json(report.to_dict(), out / "report.json"),
        write_json(config.to_dict(), out / "config.json"),
    ]
    curves = [(f"t={s.t:g}", s.curve.vertices) for s in report.summaries if s.curve is not None]
    if curves:
        written.append(
            write_polylines_svg(
                curves, geometry.extent, out / "free_boundaries.svg", quarter=geometry.mode == "double_polar"
            )
        )
    if report.linear is not None:
        written.append(
            write_loglog_svg(
                pairs["t"] - pairs["s"],
                pairs["gap"],
                out / "linear_separation.svg",
                title=f"{label}: free-boundary gap",
                xlabel="|t-s|",
                ylabel="gap",
                slope=report.linear.slope,
                intercept=report.linear.intercept,
            )
        )
    if report.superlinear is not None:
        base_pairs = pairs[(pairs["s"] == 0.0) & pairs["sing_dist"].notna()]
        written.append(
            write_loglog_svg(
                base_pairs["t"],
                base_pairs["sing_dist"],
                out / "singular_separation.svg",
                title=f"{label}: singular-point separation",
                xlabel="tau",
                ylabel="s(tau)",
                slope=report.superlinear.slope,
                intercept=report.superlinear.intercept,
            )
        )
    refinement = None
    if config.refine:
        refinement = compare_refinements(report, run_family(refine_family(spec)))
        written.append(write_json(refinement.to_dict(), out / "refinement.json"))
    write_manifest(out, written)
    result = report.to_dict()
    if refinement is not None:
        result["refinement"] = refinement.to_dict()
    result["files"] = [str(p) for p in written]
    return result


__all__ = ["run"]
