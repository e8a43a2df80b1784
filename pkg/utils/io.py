"""Artifact persistence: CSV tables, JSON sidecars, flat binary fields, SVG plots, file hashes."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from aclab.solvers.errors import SchemaMismatch
from aclab.solvers.grid_solver import GridField, GridGeometry, discrete_energy

TEMPLATE_DIR = Path(__file__).resolve().parent / "templates"
FIELD_DTYPE = "<f8"
COLOURS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")

_env = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    undefined=StrictUndefined,
    autoescape=True,
    keep_trailing_newline=True,
)


def _plain(val: Any) -> Any:
    if isinstance(val, (np.floating, np.integer, np.bool_)):
        return val.item()
    if isinstance(val, np.ndarray):
        return [_plain(v) for v in val.tolist()]
    if isinstance(val, (list, tuple)):
        return [_plain(v) for v in val]
    if isinstance(val, dict):
        return {str(k): _plain(v) for k, v in val.items()}
    if isinstance(val, float) and not math.isfinite(val):
        return None
    if isinstance(val, Path):
        return str(val)
    return val


def file_hash(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """'.' decimal, LF line endings, 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path)


def write_json(data: Any, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(data), sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="\n")
    return path


def read_json(path: Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# --- fields ------------------------------------------------------------------------------


def save_field(field: GridField, stem: Path) -> Tuple[Path, Path]:
    """Write ``<stem>.bin`` (little-endian float64, row-major) and ``<stem>.json``."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    bin_path = stem.with_suffix(".bin")
    np.ascontiguousarray(field.u, dtype=FIELD_DTYPE).tofile(bin_path)
    sidecar = {
        "geometry": field.geometry.to_dict(),
        "shape": list(field.u.shape),
        "dtype": FIELD_DTYPE,
        "h": field.h,
        "energy": field.energy,
        "sweeps": field.sweeps,
        "converged": field.converged,
        "data": bin_path.name,
    }
    json_path = write_json(sidecar, stem.with_suffix(".json"))
    return bin_path, json_path


def load_field(path: Path) -> GridField:
    """Load a field from its sidecar (``.json``) or stem."""
    json_path = Path(path).with_suffix(".json")
    meta = read_json(json_path)
    for key in ("geometry", "shape", "dtype", "data"):
        if key not in meta:
            raise SchemaMismatch(f"{json_path}: field sidecar lacks '{key}'")
    geometry = GridGeometry.from_dict(meta["geometry"])
    u = np.fromfile(json_path.parent / meta["data"], dtype=meta["dtype"])
    shape = tuple(meta["shape"])
    if u.size != math.prod(shape) or shape != geometry.grid.X.shape:
        raise SchemaMismatch(f"{json_path}: array of {u.size} values does not match shape {shape}")
    u = u.reshape(shape).astype(float)
    grid = geometry.grid
    energy = meta.get("energy")
    if energy is None:
        energy = discrete_energy(grid, u, geometry.h, geometry.measure_constant)
    return GridField(
        geometry=geometry,
        u=u,
        boundary_trace=np.where(grid.fixed, u, 0.0),
        energy=float(energy),
        sweeps=int(meta.get("sweeps", 0)),
        converged=bool(meta.get("converged", True)),
        energies=(float(energy),),
    )


# --- SVG ---------------------------------------------------------------------------------


def write_polylines_svg(
    curves: Sequence[Tuple[str, Iterable[np.ndarray]]],
    extent: float,
    path: Path,
    title: str = "free boundaries",
    size: int = 480,
    quarter: bool = False,
) -> Path:
    """Polylines in physical coordinates, mapped to a square canvas (y up)."""
    lo = 0.0 if quarter else -extent
    scale = size / (extent - lo)
    items: List[Dict[str, Any]] = []
    for i, (label, polys) in enumerate(curves):
        paths = []
        for poly in polys:
            pts = np.asarray(poly, dtype=float)
            if len(pts) < 2:
                continue
            xs = (pts[:, 0] - lo) * scale
            ys = size - (pts[:, 1] - lo) * scale
            paths.append(" ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys)))
        items.append({"label": label, "colour": COLOURS[i % len(COLOURS)], "paths": paths})
    text = _env.get_template("polylines.svg.j2").render(size=size, title=title, curves=items)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def write_loglog_svg(
    x: Sequence[float],
    y: Sequence[float],
    path: Path,
    title: str,
    xlabel: str = "x",
    ylabel: str = "y",
    slope: Optional[float] = None,
    intercept: Optional[float] = None,
    width: int = 480,
    height: int = 360,
) -> Path:
    xa, ya = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = (xa > 0) & (ya > 0)
    lx, ly = np.log10(xa[keep]), np.log10(ya[keep])
    margin = 30
    points, fit_line = [], None
    if lx.size:
        x0, x1 = float(lx.min()), float(lx.max())
        y0, y1 = float(ly.min()), float(ly.max())
        sx = (width - 2 * margin) / ((x1 - x0) or 1.0)
        sy = (height - 2 * margin) / ((y1 - y0) or 1.0)

        def to_px(a, b):
            return margin + (a - x0) * sx, height - margin - (b - y0) * sy

        for a, b in zip(lx, ly):
            px, py = to_px(a, b)
            points.append({"x": f"{px:.3f}", "y": f"{py:.3f}"})
        if slope is not None and intercept is not None:
            # natural-log fit drawn in log10 axes: same slope, intercept / ln 10
            c = intercept / math.log(10)
            ax, ay = to_px(x0, c + slope * x0)
            bx, by = to_px(x1, c + slope * x1)
            fit_line = {
                "x1": f"{ax:.3f}",
                "y1": f"{ay:.3f}",
                "x2": f"{bx:.3f}",
                "y2": f"{by:.3f}",
                "slope": f"{slope:.4f}",
            }
    text = _env.get_template("loglog.svg.j2").render(
        width=width, height=height, title=title, xlabel=xlabel, ylabel=ylabel, points=points, fit_line=fit_line
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def write_manifest(out_dir: Path, paths: Iterable[Path]) -> Path:
    """sha256 of every emitted file, keyed by name relative to ``out_dir``."""
    out_dir = Path(out_dir)
    hashes = {str(Path(p).resolve().relative_to(out_dir.resolve())): file_hash(p) for p in paths}
    return write_json(hashes, out_dir / "hashes.json")


__all__ = [
    "file_hash",
    "write_csv",
    "read_csv",
    "write_json",
    "read_json",
    "save_field",
    "load_field",
    "write_polylines_svg",
    "write_loglog_svg",
    "write_manifest",
]
