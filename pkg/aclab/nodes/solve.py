"""Node wrapper for a single grid minimization and its analyses."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from aclab.nodes.inputs import build_trace, parse_geometry
from aclab.solvers.errors import LabError, SweepLimitExceeded
from aclab.solvers.grid_analysis import (
    FreeBoundaryCurve,
    classify_point,
    domain_distance,
    free_boundary,
    growth_bounds,
    weiss_series,
)
from aclab.solvers.grid_solver import GridField, MinimizeOptions, minimize
from utils.config import RunConfig
from utils.io import save_field, write_csv, write_json, write_manifest, write_polylines_svg
from utils.logger import log_event

LADDER = 8


def curve_frame(curve: FreeBoundaryCurve) -> pd.DataFrame:
    parts = [
        pd.DataFrame({"curve": i, "x": poly[:, 0], "y": poly[:, 1], "deficit": dfc})
        for i, (poly, dfc) in enumerate(zip(curve.vertices, curve.deficits))
    ]
    return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=["curve", "x", "y", "deficit"])


def series_center(field: GridField, curve: Optional[FreeBoundaryCurve]):
    """Origin on double-polar grids, else the free-boundary vertex nearest the origin."""
    if field.geometry.mode == "double_polar" or curve is None:
        return (0.0, 0.0)
    pts = curve.points
    return tuple(pts[int(np.argmin(np.hypot(pts[:, 0], pts[:, 1])))])


def radius_ladder(field: GridField, center) -> List[float]:
    r_max = 0.9 * domain_distance(field, center)
    r_min = 16 * field.h
    if r_max <= r_min:
        return []
    return [float(r) for r in np.geomspace(r_min, r_max, LADDER)]


def growth_ladder(field: GridField, center) -> List[float]:
    """Radii in [8h, R/4] for the nondegeneracy/Lipschitz ratios."""
    r_max = min(field.geometry.extent / 4, domain_distance(field, center))
    r_min = 8 * field.h
    if r_max <= r_min:
        return []
    return [float(r) for r in np.geomspace(r_min, r_max, LADDER)]


def analyse(field: GridField, out, stem: str = "field") -> Dict[str, Any]:
    """Free boundary, Weiss series and center classification written next to the field."""
    written = list(save_field(field, out / stem))
    summary: Dict[str, Any] = {"energy": field.energy, "sweeps": field.sweeps, "converged": field.converged}
    curve = None
    try:
        curve = free_boundary(field)
        written.append(write_csv(curve_frame(curve), out / f"{stem}_free_boundary.csv"))
        written.append(
            write_polylines_svg(
                [(stem, curve.vertices)],
                field.geometry.extent,
                out / f"{stem}_free_boundary.svg",
                quarter=field.geometry.mode == "double_polar",
            )
        )
        summary["max_deficit"] = curve.max_deficit
    except LabError as e:
        summary["free_boundary"] = f"{type(e).__name__}: {e}"

    center = series_center(field, curve)
    radii = radius_ladder(field, center)
    if radii:
        series = weiss_series(field, center, radii)
        frame = pd.DataFrame(
            {
                "r": series.radii,
                "weiss": series.values,
                "energy_part": series.energy_part,
                "boundary_part": series.boundary_part,
            }
        )
        written.append(write_csv(frame, out / f"{stem}_weiss.csv"))
        summary.update(
            center=list(center),
            flat_density=series.flat_density,
            weiss_min=float(series.values.min()),
            weiss_max=float(series.values.max()),
            weiss_monotone=series.is_monotone(10 * field.h),
        )
        if curve is not None:
            try:
                summary["center_class"] = classify_point(field, center)
            except LabError as e:
                summary["center_class"] = f"{type(e).__name__}: {e}"
    growth_radii = growth_ladder(field, center) if curve is not None else []
    if growth_radii:
        growth = growth_bounds(field, center, growth_radii)
        frame = pd.DataFrame({"r": growth["radii"], "sup_u_over_r": growth["ratios"]})
        written.append(write_csv(frame, out / f"{stem}_growth.csv"))
        summary.update(growth_lower=growth["lower"], growth_upper=growth["upper"])
    summary["files"] = [str(p) for p in written]
    return summary


def run(config: RunConfig) -> Dict[str, Any]:
    geometry = parse_geometry(config)
    trace, label = build_trace(config, geometry)
    opts = MinimizeOptions(max_sweeps=config.max_sweeps, energy_tol=config.energy_tol, seed=config.seed)
    out = config.out_dir
    try:
        field = minimize(geometry, trace, opts)
    except SweepLimitExceeded as e:
        if e.field is not None:
            save_field(e.field, out / "field_best")
        raise

    summary = analyse(field, out)
    summary["data"] = label
    written = [Path(p) for p in summary["files"]]
    written.append(write_json({k: v for k, v in summary.items() if k != "files"}, out / "summary.json"))
    written.append(write_json(config.to_dict(), out / "config.json"))
    write_manifest(out, written)
    log_event("solve", "artifacts written", {"out": str(out)}, files=len(written))
    return summary


__all__ = ["run", "analyse", "curve_frame", "series_center", "radius_ladder", "growth_ladder"]
