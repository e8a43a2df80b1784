"""Geometry and boundary-data specs shared by the grid commands."""

from __future__ import annotations

from pathlib import Path
from typing import Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from aclab.solvers.cone_builder import SymmetrySplit, evaluate_cone, shoot_profile
from aclab.solvers.errors import ConfigError
from aclab.solvers.grid_solver import GridGeometry, Trace, flat_trace
from utils.config import RunConfig, parse_split


def parse_geometry(config: RunConfig) -> GridGeometry:
    """``planar`` | ``planar-box`` | ``dp:M,K``."""
    text = config.geometry.strip()
    if text in ("planar", "planar-disk"):
        return GridGeometry(mode="planar", extent=config.radius, h=config.h, shape="disk")
    if text == "planar-box":
        return GridGeometry(mode="planar", extent=config.radius, h=config.h, shape="box")
    if text.startswith("dp:"):
        m, k = parse_split(text[3:])
        if m < 1 or k < 1:
            raise ConfigError(f"--geometry: split factors must be >= 1, got {text!r}")
        return GridGeometry(mode="double_polar", extent=config.radius, h=config.h, split=SymmetrySplit(m, k))
    raise ConfigError(f"--geometry: expected planar, planar-box or dp:M,K, got {text!r}")


def _file_trace(path: Path) -> Trace:
    from utils.io import load_field

    try:
        source = load_field(path)
    except FileNotFoundError as e:
        raise ConfigError(f"--data: no field at {path}") from e
    grid = source.grid
    interp = RegularGridInterpolator(
        (grid.x, grid.y), np.where(grid.used, source.u, 0.0), bounds_error=False, fill_value=0.0
    )
    return lambda X, Y: np.maximum(interp(np.column_stack([np.ravel(X), np.ravel(Y)])).reshape(np.shape(X)), 0.0)


def build_trace(config: RunConfig, geometry: GridGeometry) -> Tuple[Trace, str]:
    """``flat:c`` | ``cone`` | ``file:PATH``; returns the trace and a label."""
    text = config.data.strip()
    if text.startswith("flat:"):
        try:
            c = float(text[5:])
        except ValueError as e:
            raise ConfigError(f"--data: cannot parse offset in {text!r}") from e
        if geometry.mode == "double_polar":
            if geometry.split.k != 1:
                raise ConfigError("--data flat:c on a double-polar grid needs k = 1 (half-space x_d > c)")
            return flat_trace(c, (0.0, 1.0)), f"flat-{c:g}"
        return flat_trace(c), f"flat-{c:g}"
    if text == "cone":
        if geometry.mode != "double_polar":
            raise ConfigError("--data cone requires --geometry dp:M,K")
        split = geometry.split
        profile = shoot_profile(split.d, split, config.tol)
        return (lambda X, Y: evaluate_cone(profile, X, Y)), f"cone-{split.m}-{split.k}"
    if text.startswith("file:"):
        return _file_trace(Path(text[5:])), Path(text[5:]).stem
    raise ConfigError(f"--data: expected flat:c, cone or file:PATH, got {text!r}")


__all__ = ["parse_geometry", "build_trace"]
