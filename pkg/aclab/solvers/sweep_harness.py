"""Monotone families g_t = (g + t)_+: parallel solves, ordering audit, separation fits, difference diagnostics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from aclab.solvers.cone_builder import shoot_profile
from aclab.solvers.errors import EmptyAnnulus, InsufficientPairs, LabError, OrderingViolation, WeissNotMonotone
from aclab.solvers.fitting import ExponentFit, fit_power_law
from aclab.solvers.grid_analysis import (
    CLASSIFY_RADIUS,
    FreeBoundaryCurve,
    WeissSeries,
    classify_point,
    domain_distance,
    free_boundary,
    regularity_scales,
    weiss_series,
    weiss_value,
)
from aclab.solvers.grid_solver import (
    GridField,
    GridGeometry,
    MinimizeOptions,
    Trace,
    lifted,
    minimize,
    sample_trace,
)
from aclab.solvers.jacobi_spectrum import principal_eigenvalue
from utils.config import worker_count
from utils.logger import log_event

ORDER_SLACK = 1.0  # nodewise ordering tolerance, in units of h
DECAY_FACTOR_A = 2.0
FIT_TOLERANCE = 0.05
WEISS_SLACK = 10.0  # per-field Weiss slack, in units of h
WEISS_LADDER = 6
REFINEMENT_TOLERANCE = 0.3


@dataclass(frozen=True)
class FamilySpec:
    base: Trace
    t_grid: Tuple[float, ...]
    geometry: GridGeometry
    label: str = "family"
    opts: MinimizeOptions = field(default_factory=MinimizeOptions)
    probe_radius: Optional[float] = None

    def __post_init__(self):
        grid = tuple(float(t) for t in self.t_grid)
        if len(grid) < 2:
            raise ValueError("t grid needs at least two values")
        if any(not math.isfinite(t) or not -1.0 < t < 1.0 for t in grid):
            raise ValueError("t grid values must be finite and lie in (-1, 1)")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("t grid must be strictly increasing")
        object.__setattr__(self, "t_grid", grid)

    @property
    def t_floor(self) -> float:
        return 10.0 * self.geometry.h**2

    def effective_grid(self) -> Tuple[float, ...]:
        """t grid with the t = 0 reference and positive values floored at 10 h^2."""
        ts = {0.0}
        for t in self.t_grid:
            ts.add(max(t, self.t_floor) if t > 0 else t)
        return tuple(sorted(ts))

    def trace_at(self, t: float) -> Trace:
        return lifted(self.base, t)

    def check_lift_rule(self) -> None:
        """g_t - g_s >= t - s wherever g_s > 0, on the Dirichlet nodes."""
        grid = self.geometry.grid
        ts = self.effective_grid()
        traces = [sample_trace(self.geometry, self.trace_at(t))[grid.fixed] for t in ts]
        for (s, gs), (t, gt) in zip(zip(ts, traces), zip(ts[1:], traces[1:])):
            on = gs > 0
            if np.any(gt[on] - gs[on] < (t - s) - 1e-12):
                raise ValueError(f"lift rule violated between t={s} and t={t}")


@dataclass(frozen=True, eq=False)
class FieldSummary:
    t: float
    field: Optional[GridField]
    curve: Optional[FreeBoundaryCurve]
    singular: bool = False
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.field is None or bool(self.error)

    def row(self) -> Dict[str, object]:
        return {
            "t": self.t,
            "energy": self.field.energy if self.field is not None else float("nan"),
            "sweeps": self.field.sweeps if self.field is not None else 0,
            "converged": bool(self.field is not None and self.field.converged),
            "singular": self.singular,
            "failed": self.failed,
            "error": self.error,
        }


@dataclass(frozen=True)
class OrderingAudit:
    pairs_checked: int
    max_violation: float
    strict_separation: float
    unresolved_pairs: int

    def to_dict(self) -> Dict[str, float]:
        return {
            "pairs_checked": self.pairs_checked,
            "max_violation": self.max_violation,
            "strict_separation": self.strict_separation,
            "unresolved_pairs": self.unresolved_pairs,
        }


@dataclass(frozen=True, eq=False)
class SweepReport:
    spec: FamilySpec
    summaries: List[FieldSummary]
    pairs: pd.DataFrame
    audit: Optional[OrderingAudit] = None
    linear: Optional[ExponentFit] = None
    superlinear: Optional[ExponentFit] = None
    superlinear_bound: float = float("nan")
    linear_constant: float = float("nan")
    weiss: Dict[float, WeissSeries] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @property
    def superlinear_within_bound(self) -> Optional[bool]:
        if self.superlinear is None or math.isnan(self.superlinear_bound):
            return None
        return self.superlinear.slope <= self.superlinear_bound + FIT_TOLERANCE

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame([s.row() for s in self.summaries])

    def to_dict(self) -> Dict[str, object]:
        return {
            "label": self.spec.label,
            "geometry": self.spec.geometry.to_dict(),
            "t_grid": list(self.spec.effective_grid()),
            "fields": [s.row() for s in self.summaries],
            "audit": self.audit.to_dict() if self.audit else None,
            "linear_fit": self.linear.to_dict() if self.linear else None,
            "superlinear_fit": self.superlinear.to_dict() if self.superlinear else None,
            "superlinear_bound": self.superlinear_bound,
            "superlinear_within_bound": self.superlinear_within_bound,
            "linear_constant": self.linear_constant,
            "weiss_checked": sorted(self.weiss),
            "notes": list(self.notes),
        }


# --- polyline distances -------------------------------------------------------------------


def _densify(curve: FreeBoundaryCurve, spacing: float) -> np.ndarray:
    pieces = []
    for poly in curve.vertices:
        if len(poly) == 1:
            pieces.append(poly)
            continue
        for a, b in zip(poly[:-1], poly[1:]):
            n = max(1, int(math.ceil(np.hypot(*(b - a)) / spacing)))
            s = np.linspace(0.0, 1.0, n, endpoint=False)[:, None]
            pieces.append(a + s * (b - a))
        pieces.append(poly[-1:])
    return np.vstack(pieces) if pieces else np.zeros((0, 2))


def curve_distance(a: FreeBoundaryCurve, b: FreeBoundaryCurve, spacing: float, exclude_radius: float = 0.0) -> float:
    """Minimum distance between two polylines (vertices within ``exclude_radius`` of the origin dropped)."""
    pa, pb = _densify(a, spacing), _densify(b, spacing)
    if exclude_radius > 0:
        pa = pa[np.hypot(pa[:, 0], pa[:, 1]) >= exclude_radius]
        pb = pb[np.hypot(pb[:, 0], pb[:, 1]) >= exclude_radius]
    if len(pa) == 0 or len(pb) == 0:
        return float("nan")
    dist, _ = cKDTree(pb).query(pa)
    return float(np.min(dist))


def point_to_curve(p, curve: FreeBoundaryCurve) -> float:
    """Exact distance from p to the polyline."""
    q = np.asarray(p, dtype=float)
    best = math.inf
    for poly in curve.vertices:
        if len(poly) == 1:
            best = min(best, float(np.hypot(*(poly[0] - q))))
            continue
        a, b = poly[:-1], poly[1:]
        ab = b - a
        denom = np.sum(ab * ab, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(denom > 0, np.sum((q - a) * ab, axis=1) / denom, 0.0)
        s = np.clip(s, 0.0, 1.0)
        foot = a + s[:, None] * ab
        best = min(best, float(np.min(np.hypot(foot[:, 0] - q[0], foot[:, 1] - q[1]))))
    return best


# --- solves and audit ------------------------------------------------------------------------


def _solve_one(spec: FamilySpec, t: float, warm_support: Optional[np.ndarray] = None) -> FieldSummary:
    try:
        fld = minimize(spec.geometry, spec.trace_at(t), spec.opts, warm_support=warm_support)
    except LabError as e:
        log_event("sweep", "solve failed", {"label": spec.label, "t": t}, reason=str(e))
        best = getattr(e, "field", None)
        return FieldSummary(t=t, field=best, curve=None, error=f"{type(e).__name__}: {e}")
    try:
        curve = free_boundary(fld)
    except LabError as e:
        return FieldSummary(t=t, field=fld, curve=None, error=f"{type(e).__name__}: {e}")
    singular = False
    if spec.geometry.mode == "double_polar":
        try:
            singular = classify_point(fld, (0.0, 0.0)) == "singular"
        except LabError as e:
            log_event("sweep", "classification skipped", {"label": spec.label, "t": t}, reason=str(e))
    return FieldSummary(t=t, field=fld, curve=curve, singular=singular)


def check_ordering(fields: Sequence[Tuple[float, GridField]], curves: Optional[Sequence[FreeBoundaryCurve]] = None) -> OrderingAudit:
    """u_s <= u_t + h nodewise for s < t, and disjoint free boundaries (gap > h) for resolvable pairs."""
    if len(fields) < 2:
        raise ValueError("ordering audit needs at least two fields")
    items = sorted(fields, key=lambda item: item[0])
    h = items[0][1].h
    used = items[0][1].grid.used
    max_violation = 0.0
    strict = math.inf
    unresolved = 0
    checked = 0
    order = sorted(range(len(fields)), key=lambda i: fields[i][0])
    for a in range(len(items)):
        for b in range(a + 1, len(items)):
            s, us = items[a]
            t, ut = items[b]
            excess = np.where(used, us.u - ut.u, 0.0)
            worst = float(np.max(excess))
            max_violation = max(max_violation, worst)
            if worst > ORDER_SLACK * h:
                node = tuple(int(i) for i in np.unravel_index(int(np.argmax(excess)), excess.shape))
                raise OrderingViolation(
                    f"u_{s:g} exceeds u_{t:g} by {worst:.3g} at node {node}", pair=(s, t), node=node
                )
            checked += 1
            if curves is None:
                continue
            ca, cb = curves[order[a]], curves[order[b]]
            if ca is None or cb is None:
                continue
            if t - s < 2 * h:
                unresolved += 1
                continue
            gap = curve_distance(ca, cb, h / 4)
            if not math.isnan(gap):
                strict = min(strict, gap)
                if gap <= h:
                    raise OrderingViolation(
                        f"free boundaries of t={s:g} and t={t:g} are {gap:.3g} apart (<= h)", pair=(s, t)
                    )
    return OrderingAudit(
        pairs_checked=checked,
        max_violation=max_violation,
        strict_separation=strict if math.isfinite(strict) else float("nan"),
        unresolved_pairs=unresolved,
    )


def _pair_table(spec: FamilySpec, summaries: Sequence[FieldSummary], probe_radius: float) -> pd.DataFrame:
    h = spec.geometry.h
    rows = []
    for i, a in enumerate(summaries):
        for b in summaries[i + 1 :]:
            gap = sing = float("nan")
            if a.curve is not None and b.curve is not None:
                gap = curve_distance(a.curve, b.curve, h / 4, exclude_radius=probe_radius)
            if a.singular and b.curve is not None:
                sing = point_to_curve((0.0, 0.0), b.curve)
            rows.append({"s": a.t, "t": b.t, "gap": gap, "sing_dist": sing})
    return pd.DataFrame(rows, columns=["s", "t", "gap", "sing_dist"])


def superlinear_bound(geometry: GridGeometry) -> float:
    """1 / (1 + gamma_d) for the represented cone of a double-polar geometry."""
    split = geometry.split
    eig = principal_eigenvalue(shoot_profile(split.d, split))
    if not eig.stable or not math.isfinite(eig.gamma):
        return float("nan")
    return 1.0 / (1.0 + eig.gamma)


def fit_separation_exponents(report: SweepReport) -> Tuple[ExponentFit, Optional[ExponentFit]]:
    """Linear fit of log gap vs log|t - s|; superlinear fit of log s(tau) vs log tau from the t = 0 singular point."""
    pairs = report.pairs
    if pairs.empty:
        raise InsufficientPairs("pair table is empty")
    linear = fit_power_law((pairs["t"] - pairs["s"]).to_numpy(), pairs["gap"].to_numpy())
    superlinear = None
    base = pairs[(pairs["s"] == 0.0) & (pairs["t"] > 0.0)]
    if base["sing_dist"].notna().any():
        superlinear = fit_power_law(base["t"].to_numpy(), base["sing_dist"].to_numpy())
    return linear, superlinear


def weiss_ladder(fld: GridField, count: int = WEISS_LADDER) -> np.ndarray:
    """Geometric radii from the classification radius to 0.85 of the distance to the boundary."""
    lo = CLASSIFY_RADIUS * fld.h
    hi = 0.85 * domain_distance(fld, (0.0, 0.0))
    if lo >= hi:
        return np.zeros(0)
    return np.geomspace(lo, hi, count)


def check_weiss_monotone(t: float, fld: GridField, radii: Optional[Sequence[float]] = None) -> Optional[WeissSeries]:
    """W(u_t; 0, r) nondecreasing in r within 10 h; None when the domain is too small for a ladder."""
    radii = weiss_ladder(fld) if radii is None else np.asarray(radii, dtype=float)
    if len(radii) < 2:
        return None
    series = weiss_series(fld, (0.0, 0.0), radii)
    slack = WEISS_SLACK * fld.h
    if not series.is_monotone(slack):
        drop = float(-np.min(np.diff(series.values)))
        raise WeissNotMonotone(f"W(u_{t:g}; 0, r) drops by {drop:.3g} across the ladder (slack {slack:.3g})", t=t, series=series)
    return series


def linear_constant(pairs: pd.DataFrame, h: float) -> float:
    """min gap / (t - s) over pairs the grid resolves (t - s >= 2h)."""
    if pairs.empty:
        return float("nan")
    dt = pairs["t"] - pairs["s"]
    ok = (dt >= 2 * h) & pairs["gap"].notna() & (pairs["gap"] > 0)
    if not ok.any():
        return float("nan")
    return float((pairs.loc[ok, "gap"] / dt[ok]).min())


def run_family(spec: FamilySpec) -> SweepReport:
    """Solve t = 0 first, then the rest in parallel, warm-started from the support of u_0."""
    spec.check_lift_rule()
    ts = spec.effective_grid()
    log_event("sweep", "family started", {"label": spec.label}, count=len(ts), mode=spec.geometry.mode)
    reference = _solve_one(spec, 0.0)
    warm = reference.field.u > 0 if reference.field is not None else None
    rest = [t for t in ts if t != 0.0]
    with ThreadPoolExecutor(max_workers=max(1, min(worker_count(), len(rest)))) as pool:
        solved = dict(zip(rest, pool.map(lambda t: _solve_one(spec, t, warm), rest)))
    solved[0.0] = reference
    summaries = [solved[t] for t in ts]

    weiss: Dict[float, WeissSeries] = {}
    for s in summaries:
        if s.failed:
            continue
        series = check_weiss_monotone(s.t, s.field)
        if series is not None:
            weiss[s.t] = series

    probe_radius = spec.probe_radius
    if probe_radius is None:
        probe_radius = spec.geometry.extent / 4 if spec.geometry.mode == "double_polar" else 0.0
    notes: List[str] = []
    good = [s for s in summaries if not s.failed]
    audit = None
    if len(good) >= 2:
        audit = check_ordering([(s.t, s.field) for s in good], [s.curve for s in good])
    pairs = _pair_table(spec, good, probe_radius)
    report = SweepReport(spec=spec, summaries=summaries, pairs=pairs, audit=audit, notes=notes)
    constant = linear_constant(pairs, spec.geometry.h)

    linear = superlinear = None
    try:
        linear, superlinear = fit_separation_exponents(report)
    except InsufficientPairs as e:
        notes.append(f"fit skipped: {e}")
    bound = superlinear_bound(spec.geometry) if superlinear is not None else float("nan")
    report = SweepReport(
        spec=spec,
        summaries=summaries,
        pairs=pairs,
        audit=audit,
        linear=linear,
        superlinear=superlinear,
        superlinear_bound=bound,
        linear_constant=constant,
        weiss=weiss,
        notes=notes,
    )
    log_event(
        "sweep",
        "family finished",
        {"label": spec.label},
        failed=sum(s.failed for s in summaries),
        linear_slope=linear.slope if linear else float("nan"),
        superlinear_slope=superlinear.slope if superlinear else float("nan"),
        linear_constant=constant,
    )
    return report


@dataclass(frozen=True)
class RefinementComparison:
    coarse_h: float
    fine_h: float
    coarse: float
    fine: float
    relative_change: float
    tolerance: float = REFINEMENT_TOLERANCE

    @property
    def stable(self) -> bool:
        return math.isfinite(self.relative_change) and self.relative_change <= self.tolerance

    def to_dict(self) -> Dict[str, object]:
        return {
            "coarse_h": self.coarse_h,
            "fine_h": self.fine_h,
            "coarse": self.coarse,
            "fine": self.fine,
            "relative_change": self.relative_change,
            "stable": self.stable,
        }


def compare_refinements(coarse: SweepReport, fine: SweepReport, tolerance: float = REFINEMENT_TOLERANCE) -> RefinementComparison:
    """Linear separation constant of the same family at two resolutions."""
    a, b = coarse.linear_constant, fine.linear_constant
    change = abs(a - b) / max(abs(a), abs(b)) if max(abs(a), abs(b)) > 0 else float("nan")
    return RefinementComparison(
        coarse_h=coarse.spec.geometry.h,
        fine_h=fine.spec.geometry.h,
        coarse=a,
        fine=b,
        relative_change=change,
        tolerance=tolerance,
    )


def refine_family(spec: FamilySpec) -> FamilySpec:
    """The same family on a grid with half the spacing."""
    return replace(spec, geometry=replace(spec.geometry, h=spec.geometry.h / 2))


# --- difference fields -------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnulusDiagnostic:
    radius: float
    nodes: int
    harnack_ratio: float
    decay_factor: float
    weiss_increment: float


def _ring(fld: GridField, center, r: float) -> np.ndarray:
    grid = fld.grid
    dist = np.hypot(grid.X - center[0], grid.Y - center[1])
    return (np.abs(dist - r) < 0.5 * fld.h) & grid.used & (fld.u > fld.theta_cut)


def _filtered_diff(u: GridField, v: GridField, center, r: float, rho: float) -> np.ndarray:
    ring = _ring(u, center, r)
    if not np.any(ring):
        return np.zeros(0)
    pts = np.column_stack([u.grid.X[ring], u.grid.Y[ring]])
    scales = regularity_scales(u, pts)
    keep = scales > rho * r
    return (v.u[ring] - u.u[ring])[keep]


def difference_diagnostics(
    u: GridField,
    v: GridField,
    rho: float,
    annuli: Optional[Sequence[float]] = None,
    center=(0.0, 0.0),
) -> List[AnnulusDiagnostic]:
    """Harnack ratio, decay factor (A = 2) and Weiss increment of v - u on scale-filtered rings."""
    if annuli is None:
        R = u.geometry.extent
        annuli = [R / 16, R / 8, R / 4]
    out: List[AnnulusDiagnostic] = []
    for r in annuli:
        diff = _filtered_diff(u, v, center, r, rho)
        if diff.size == 0:
            raise EmptyAnnulus(f"no node on the ring r={r:.4g} has regularity scale above {rho * r:.4g}")
        lo, hi = float(np.min(diff)), float(np.max(diff))
        harnack = hi / lo if lo > 0 else math.inf
        outer_r = DECAY_FACTOR_A * r
        decay = float("nan")
        increment = float("nan")
        if outer_r <= domain_distance(u, center):
            outer = _filtered_diff(u, v, center, outer_r, rho)
            if outer.size and hi > 0:
                decay = float(np.max(outer)) / hi
            increment = weiss_value(u, center, outer_r)[0] - weiss_value(u, center, r)[0]
        out.append(
            AnnulusDiagnostic(
                radius=float(r),
                nodes=int(diff.size),
                harnack_ratio=harnack,
                decay_factor=decay,
                weiss_increment=increment,
            )
        )
    log_event("diagnose", "difference field", {"rho": rho}, annuli=len(out))
    return out


__all__ = [
    "FamilySpec",
    "FieldSummary",
    "OrderingAudit",
    "SweepReport",
    "RefinementComparison",
    "AnnulusDiagnostic",
    "curve_distance",
    "point_to_curve",
    "check_ordering",
    "superlinear_bound",
    "fit_separation_exponents",
    "weiss_ladder",
    "check_weiss_monotone",
    "linear_constant",
    "run_family",
    "compare_refinements",
    "refine_family",
    "difference_diagnostics",
]
