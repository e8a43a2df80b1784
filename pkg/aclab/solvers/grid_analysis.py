"""Post-processing of discrete minimizers: free boundary, Weiss series, regularity scale, classification."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree
from skimage import measure

from aclab.solvers.cone_builder import ball_volume, shoot_all
from aclab.solvers.errors import EmptyBoundary, RadiusOutOfDomain, TooCoarse
from aclab.solvers.grid_solver import GridField
from utils.logger import log_event

PointClass = Literal["interior", "contact", "regular", "singular"]

DEFICIT_RADIUS = 8  # in units of h
CLASSIFY_RADIUS = 16  # in units of h
# Fallback gap (fraction of the flat density) when a dimension has no admissible non-flat cone
FALLBACK_GAP_FRACTION = 0.1


# --- geometry helpers -----------------------------------------------------------


def domain_distance(field: GridField, p, cross_section: bool = False) -> float:
    """Distance from p to the boundary of Omega (to the axes as well when ``cross_section``)."""
    geo = field.geometry
    px, py = float(p[0]), float(p[1])
    if geo.mode == "planar" and geo.shape == "box":
        return geo.extent - max(abs(px), abs(py))
    dist = geo.extent - math.hypot(px, py)
    if geo.mode == "double_polar" and cross_section:
        dist = min(dist, px, py)
    return dist


def _is_origin(field: GridField, p) -> bool:
    return math.hypot(float(p[0]), float(p[1])) < 0.5 * field.h


def _padded(field: GridField, arr: np.ndarray, pad: int = 2) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad an array (and its coordinate axes); double-polar axes are reflected evenly."""
    grid = field.grid
    h = field.h
    if field.geometry.mode == "double_polar":
        out = np.pad(arr, ((pad, 0), (pad, 0)), mode="symmetric")
        out = np.pad(out, ((0, pad), (0, pad)), mode="constant")
    else:
        out = np.pad(arr, pad, mode="constant")
    x = np.concatenate([grid.x[0] - h * np.arange(pad, 0, -1), grid.x, grid.x[-1] + h * np.arange(1, pad + 1)])
    y = np.concatenate([grid.y[0] - h * np.arange(pad, 0, -1), grid.y, grid.y[-1] + h * np.arange(1, pad + 1)])
    return out, x, y


class _Sampler:
    """Linear interpolants of u, |grad u|^2 and chi(u > theta_cut)."""

    def __init__(self, field: GridField):
        u = np.where(field.grid.used, field.u, 0.0)
        U, x, y = _padded(field, u)
        gx, gy = np.gradient(U, field.h)
        chi = (U > field.theta_cut).astype(float)
        opts = dict(method="linear", bounds_error=False, fill_value=0.0)
        self.u = RegularGridInterpolator((x, y), U, **opts)
        self.grad_sq = RegularGridInterpolator((x, y), gx * gx + gy * gy, **opts)
        self.chi = RegularGridInterpolator((x, y), chi, **opts)


def _memo(field: GridField, name: str, build: Callable[[GridField], Any]) -> Any:
    """Per-field cache, rebuilt whenever the bytes of u change."""
    stamp = hashlib.blake2b(np.ascontiguousarray(field.u).tobytes(), digest_size=16).digest()
    memo = field.__dict__.setdefault("_memo", {})
    hit = memo.get(name)
    if hit is not None and hit[0] == stamp:
        return hit[1]
    value = build(field)
    memo[name] = (stamp, value)
    return value


def _sampler(field: GridField) -> _Sampler:
    return _memo(field, "sampler", _Sampler)


# --- free boundary ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FreeBoundaryCurve:
    vertices: List[np.ndarray]
    deficits: List[np.ndarray]

    @property
    def points(self) -> np.ndarray:
        if not self.vertices:
            return np.zeros((0, 2))
        return np.vstack(self.vertices)

    @property
    def max_deficit(self) -> float:
        vals = [d[np.isfinite(d)] for d in self.deficits]
        vals = [v for v in vals if v.size]
        return float(max(np.max(v) for v in vals)) if vals else float("nan")


def _flatness_deficit(field: GridField, tree: cKDTree, coords: np.ndarray, values: np.ndarray, q, r: float) -> float:
    """min over half-plane solutions P of sup_{B_r(q)} |u - P| / r."""
    idx = tree.query_ball_point(q, r)
    if len(idx) < 6:
        return float("nan")
    pts = coords[idx] - np.asarray(q)
    vals = values[idx]
    pos = vals > field.theta_cut
    if not np.any(pos):
        return float(np.max(vals) / r)
    # Normal guess from a least-squares plane through the positive nodes
    A = np.column_stack([pts[pos], np.ones(int(pos.sum()))])
    coef, *_ = np.linalg.lstsq(A, vals[pos], rcond=None)
    slope = math.hypot(coef[0], coef[1])
    base = math.atan2(coef[1], coef[0]) if slope > 0 else 0.0
    centre = -coef[2] / slope if slope > 0 else 0.0
    angles = base + np.linspace(-0.25, 0.25, 11)
    offsets = centre + np.linspace(-field.h, field.h, 9)
    normals = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    proj = pts @ normals.T  # (nodes, angles)
    planes = np.maximum(proj[:, :, None] - offsets[None, None, :], 0.0)
    err = np.max(np.abs(planes - vals[:, None, None]), axis=0)
    return float(np.min(err) / r)


def free_boundary(field: GridField, with_deficit: bool = True) -> FreeBoundaryCurve:
    """Marching-squares contour of chi(u > theta_cut) with the flatness deficit at scale 8h."""
    grid = field.grid
    positive = field.positive & grid.active
    if not np.any(positive) or np.all(positive[grid.active]):
        raise EmptyBoundary("positivity set is empty or fills the domain")
    indicator = (field.u > field.theta_cut).astype(float)
    contours = measure.find_contours(indicator, 0.5, mask=grid.used)
    h = field.h
    vertices = [np.column_stack([grid.x[0] + c[:, 0] * h, grid.y[0] + c[:, 1] * h]) for c in contours if len(c)]
    if not vertices:
        raise EmptyBoundary("no sign change between positive and zero nodes")

    deficits: List[np.ndarray] = []
    if with_deficit:
        used = grid.used
        coords = np.column_stack([grid.X[used], grid.Y[used]])
        values = field.u[used]
        tree = cKDTree(coords)
        r = DEFICIT_RADIUS * h
        for curve in vertices:
            deficits.append(
                np.array(
                    [
                        _flatness_deficit(field, tree, coords, values, q, r)
                        if domain_distance(field, q) >= r
                        else np.nan
                        for q in curve
                    ]
                )
            )
    else:
        deficits = [np.full(len(c), np.nan) for c in vertices]
    return FreeBoundaryCurve(vertices=vertices, deficits=deficits)


# --- Weiss energy ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeissSeries:
    center: Tuple[float, float]
    radii: np.ndarray
    values: np.ndarray
    energy_part: np.ndarray
    boundary_part: np.ndarray
    flat_density: float
    dimension: int

    def is_monotone(self, slack: float = 0.0) -> bool:
        """Nondecreasing in r up to ``slack``."""
        return bool(np.all(np.diff(self.values) >= -slack))

    def excess(self) -> np.ndarray:
        return self.values - self.flat_density


def weiss_value(field: GridField, p, r: float, cross_section: bool = False) -> Tuple[float, float, float]:
    """(W, r^-d (int |grad u|^2 + chi), r^-d-1 int_{dB_r} u^2) at one radius by midpoint rings."""
    geo = field.geometry
    sampler = _sampler(field)
    h = field.h
    weighted = geo.mode == "double_polar" and not cross_section
    if weighted:
        split = geo.split
        d, const = geo.d, geo.measure_constant
        phi_lo, phi_hi = 0.0, math.pi / 2
    else:
        d, const = 2, 1.0
        phi_lo, phi_hi = 0.0, 2 * math.pi

    n_s = max(8, int(math.ceil(r / (0.5 * h))))
    n_phi = max(64, int(math.ceil((phi_hi - phi_lo) * r / (0.5 * h))))
    ds = r / n_s
    dphi = (phi_hi - phi_lo) / n_phi
    s = (np.arange(n_s) + 0.5) * ds
    phi = phi_lo + (np.arange(n_phi) + 0.5) * dphi
    cx, cy = float(p[0]), float(p[1])

    S, PHI = np.meshgrid(s, phi, indexing="ij")
    X = cx + S * np.cos(PHI)
    Y = cy + S * np.sin(PHI)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    dens = sampler.grad_sq(pts) + sampler.chi(pts)
    w = (np.abs(X) ** (split.m - 1) * np.abs(Y) ** (split.k - 1)).ravel() if weighted else 1.0
    volume = const * float(np.sum(dens * w * S.ravel()) * ds * dphi)

    bx = cx + r * np.cos(phi)
    by = cy + r * np.sin(phi)
    bvals = sampler.u(np.column_stack([bx, by]))
    bw = np.abs(bx) ** (split.m - 1) * np.abs(by) ** (split.k - 1) if weighted else 1.0
    boundary = const * float(np.sum(bvals**2 * bw) * r * dphi)

    energy_part = volume / r**d
    boundary_part = boundary / r ** (d + 1)
    return energy_part - boundary_part, energy_part, boundary_part


def weiss_series(field: GridField, p, radii: Sequence[float], cross_section: Optional[bool] = None) -> WeissSeries:
    """W(u; p, r) on a radius ladder; double-polar fields use the weighted form at the origin only."""
    geo = field.geometry
    if cross_section is None:
        cross_section = geo.mode == "double_polar" and not _is_origin(field, p)
    if geo.mode == "double_polar" and not cross_section and not _is_origin(field, p):
        raise ValueError("weighted Weiss energy is only defined at the origin of a double-polar grid")
    radii = np.asarray(sorted(float(r) for r in radii))
    if radii.size == 0 or radii[0] <= 0:
        raise ValueError("radii must be positive")
    cap = domain_distance(field, p, cross_section=cross_section)
    if radii[-1] > cap + 1e-12:
        raise RadiusOutOfDomain(f"radius {radii[-1]:.6g} exceeds distance {cap:.6g} to the domain boundary")
    rows = np.array([weiss_value(field, p, r, cross_section) for r in radii])
    d = 2 if (geo.mode == "planar" or cross_section) else geo.d
    return WeissSeries(
        center=(float(p[0]), float(p[1])),
        radii=radii,
        values=rows[:, 0],
        energy_part=rows[:, 1],
        boundary_part=rows[:, 2],
        flat_density=0.5 * ball_volume(d),
        dimension=d,
    )


# --- regularity scale -------------------------------------------------------------


def _second_diff(U: np.ndarray, P: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Centred second difference, one-sided where a neighbour leaves the positivity set."""

    def sh(a, k):
        return np.roll(a, -k, axis=axis)

    centred = (sh(U, 1) - 2 * U + sh(U, -1)) / h**2
    forward = (U - 2 * sh(U, 1) + sh(U, 2)) / h**2
    backward = (U - 2 * sh(U, -1) + sh(U, -2)) / h**2
    return np.where(
        sh(P, 1) & sh(P, -1),
        centred,
        np.where(sh(P, 1) & sh(P, 2), forward, np.where(sh(P, -1) & sh(P, -2), backward, 0.0)),
    )


def _mixed_diff(U: np.ndarray, P: np.ndarray, h: float) -> np.ndarray:
    def sh(a, i, j):
        return np.roll(np.roll(a, -i, axis=0), -j, axis=1)

    centred_ok = sh(P, 1, 1) & sh(P, 1, -1) & sh(P, -1, 1) & sh(P, -1, -1)
    out = np.where(centred_ok, (sh(U, 1, 1) - sh(U, 1, -1) - sh(U, -1, 1) + sh(U, -1, -1)) / (4 * h**2), 0.0)
    done = centred_ok.copy()
    for a, b in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        ok = ~done & sh(P, a, b) & sh(P, a, 0) & sh(P, 0, b)
        val = a * b * (sh(U, a, b) - sh(U, a, 0) - sh(U, 0, b) + U) / h**2
        out = np.where(ok, val, out)
        done |= ok
    return out


def hessian_norm(field: GridField) -> np.ndarray:
    """Frobenius norm of D^2 u at positive nodes (0 elsewhere), in the represented dimension."""
    pad = 2
    U, x, y = _padded(field, np.where(field.grid.used, field.u, 0.0), pad)
    P = U > field.theta_cut
    h = field.h
    uxx = _second_diff(U, P, 0, h)
    uyy = _second_diff(U, P, 1, h)
    uxy = _mixed_diff(U, P, h)
    sq = uxx**2 + uyy**2 + 2 * uxy**2
    geo = field.geometry
    if geo.mode == "double_polar":
        gx, gy = np.gradient(U, h)
        X, Y = np.meshgrid(x, y, indexing="ij")
        with np.errstate(divide="ignore", invalid="ignore"):
            sq = sq + (geo.split.m - 1) * np.nan_to_num(gx / X) ** 2 + (geo.split.k - 1) * np.nan_to_num(gy / Y) ** 2
    out = np.where(P, np.sqrt(sq), 0.0)
    return out[pad:-pad, pad:-pad]


@dataclass(frozen=True, eq=False)
class _HessianIndex:
    tree: Optional[cKDTree]
    inv_norm: np.ndarray


def _hessian_index(field: GridField) -> _HessianIndex:
    return _memo(field, "hessian_index", _build_hessian_index)


def _build_hessian_index(field: GridField) -> _HessianIndex:
    H = hessian_norm(field)
    grid = field.grid
    sel = (H > 0) & grid.used
    coords = np.column_stack([grid.X[sel], grid.Y[sel]])
    if coords.size == 0:
        return _HessianIndex(tree=None, inv_norm=np.zeros(0))
    return _HessianIndex(tree=cKDTree(coords), inv_norm=1.0 / H[sel])


def regularity_scale(field: GridField, p) -> float:
    """sup { r : |D^2 u| < 1/r on B_r(p) cap {u > 0} }, capped by dist(p, dOmega); 0 below 2h.

    A node q with Hessian norm H_q rules out every r > max(|q - p|, 1/H_q), so the
    supremum is min_q max(|q - p|, 1/H_q); only nodes inside the current bound matter.
    """
    cap = domain_distance(field, p)
    if cap < 2 * field.h:
        return 0.0
    index = _hessian_index(field)
    best = cap
    if index.tree is not None:
        q = np.asarray(p, dtype=float)
        k = min(64, index.inv_norm.size)
        dist, idx = index.tree.query(q, k=k)
        dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
        best = min(best, float(np.min(np.maximum(dist, index.inv_norm[idx]))))
        near = index.tree.query_ball_point(q, best)
        if near:
            near = np.asarray(near)
            dist = np.hypot(*(index.tree.data[near] - q).T)
            best = min(best, float(np.min(np.maximum(dist, index.inv_norm[near]))))
    return best if best >= 2 * field.h else 0.0


def regularity_scales(field: GridField, points: np.ndarray) -> np.ndarray:
    return np.array([regularity_scale(field, p) for p in np.atleast_2d(points)])


# --- classification -------------------------------------------------------------------


@lru_cache(maxsize=32)
def default_density_gap(d: int) -> float:
    """Half the smallest density excess of an admissible non-flat cone in dimension d."""
    flat = 0.5 * ball_volume(d)
    if d < 3:
        return FALLBACK_GAP_FRACTION * flat
    excess = [
        prof.weiss_density - flat
        for prof in shoot_all(d).values()
        if prof.admissible and not prof.is_flat and prof.weiss_density > flat
    ]
    if not excess:
        return FALLBACK_GAP_FRACTION * flat
    return 0.5 * min(excess)


def classify_point(field: GridField, p, density_gap: Optional[float] = None) -> PointClass:
    h = field.h
    i, j = field.nearest_node(p)
    grid = field.grid
    lo_i, hi_i = max(i - 2, 0), min(i + 3, grid.X.shape[0])
    lo_j, hi_j = max(j - 2, 0), min(j + 3, grid.X.shape[1])
    X = grid.X[lo_i:hi_i, lo_j:hi_j]
    Y = grid.Y[lo_i:hi_i, lo_j:hi_j]
    near = (np.hypot(X - p[0], Y - p[1]) <= 2 * h + 1e-12) & grid.used[lo_i:hi_i, lo_j:hi_j]
    pos = field.u[lo_i:hi_i, lo_j:hi_j][near] > field.theta_cut
    if pos.all():
        return "interior"
    if not pos.any():
        return "contact"

    r_min = CLASSIFY_RADIUS * h
    at_origin = field.geometry.mode == "double_polar" and _is_origin(field, p)
    cross_section = field.geometry.mode == "double_polar" and not at_origin
    if r_min > domain_distance(field, p, cross_section=cross_section):
        raise TooCoarse(f"ball of radius {r_min:.4g} around {tuple(p)} leaves the domain; refine the grid")
    series = weiss_series(field, p, [r_min], cross_section=cross_section)
    if density_gap is None:
        density_gap = default_density_gap(series.dimension)
    label: PointClass = "singular" if series.values[0] > series.flat_density + density_gap else "regular"
    log_event(
        "classify",
        label,
        {"point": [float(p[0]), float(p[1])], "mode": field.geometry.mode},
        weiss=float(series.values[0]),
        flat=series.flat_density,
        gap=density_gap,
    )
    return label


def growth_bounds(field: GridField, p, radii: Sequence[float]) -> Dict[str, np.ndarray]:
    """sup_{B_r(p)} u / r per radius, with its min and max over the ladder."""
    grid = field.grid
    dist = np.hypot(grid.X - p[0], grid.Y - p[1])
    ratios = []
    for r in radii:
        inside = (dist < r) & grid.used
        ratios.append(float(np.max(field.u[inside])) / r if np.any(inside) else 0.0)
    ratios_arr = np.array(ratios)
    return {
        "radii": np.asarray(radii, dtype=float),
        "ratios": ratios_arr,
        "lower": float(ratios_arr.min()) if ratios_arr.size else 0.0,
        "upper": float(ratios_arr.max()) if ratios_arr.size else 0.0,
    }


__all__ = [
    "FreeBoundaryCurve",
    "WeissSeries",
    "PointClass",
    "domain_distance",
    "free_boundary",
    "weiss_value",
    "weiss_series",
    "hessian_norm",
    "regularity_scale",
    "regularity_scales",
    "default_density_gap",
    "classify_point",
    "growth_bounds",
]
