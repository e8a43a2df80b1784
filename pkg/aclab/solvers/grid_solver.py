"""Discrete Alt-Caffarelli minimization on planar and weighted double-polar grids.

Discrete energy (dmu_w = C rho^{m-1} sigma^{k-1} d rho d sigma in double-polar mode):

    E(u) = C [ sum_edges w_e (u_i - u_j)^2 + h^2 sum_nodes w_i chi(u_i > 0) ].

Nodewise exact minimization: u_i is either the weighted neighbour mean mu_i or 0,
and the positive branch wins iff S_i mu_i^2 > w_i h^2 (ties go to 0).

Single-node flips only move a straight front when its slope leaves (1/2, 2), so the
sweeps start from a front already placed near |grad u| = 1: harmonic extension on a
coarse grid, collective front moves checked against the exact energy, then
prolongation level by level. A second start is the one-homogeneous extension of the
trace, which is the sampled cone itself for cone data; the cheaper of the two wins.

Sweeps visit the nodes in red-black order, alternating which colour goes first. Each
colour class is updated in one vectorized step; a lexicographic Gauss-Seidel order
reaches the same fixed points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from aclab.solvers.cone_builder import SymmetrySplit, ball_volume, section_constant
from aclab.solvers.errors import SweepLimitExceeded
from utils.logger import log_event

Mode = Literal["planar", "double_polar"]
Shape = Literal["disk", "box"]
Trace = Callable[[np.ndarray, np.ndarray], np.ndarray]

# coarsest level of the nested initial guess, in cells per extent
COARSEST_CELLS = 32


@dataclass(frozen=True)
class GridGeometry:
    mode: Mode = "planar"
    extent: float = 1.0
    h: float = 1.0 / 64
    split: Optional[SymmetrySplit] = None
    shape: Shape = "disk"

    def __post_init__(self):
        if self.h <= 0 or self.extent <= 0:
            raise ValueError("grid spacing and extent must be positive")
        if self.mode == "double_polar" and self.split is None:
            raise ValueError("double_polar geometry needs a split")
        if self.mode not in ("planar", "double_polar"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def d(self) -> int:
        """Represented dimension."""
        return 2 if self.mode == "planar" else self.split.d

    @property
    def measure_constant(self) -> float:
        return 1.0 if self.mode == "planar" else section_constant(self.split)

    @property
    def flat_density(self) -> float:
        """|B_1|/2 in the represented dimension."""
        return 0.5 * ball_volume(self.d)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "extent": self.extent,
            "h": self.h,
            "split": [self.split.m, self.split.k] if self.split else None,
            "shape": self.shape,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridGeometry":
        split = data.get("split")
        return cls(
            mode=data["mode"],
            extent=float(data["extent"]),
            h=float(data["h"]),
            split=SymmetrySplit(*split) if split else None,
            shape=data.get("shape", "disk"),
        )

    def scaled(self, factor: float) -> "GridGeometry":
        """Geometry of Omega / factor with spacing h / factor."""
        return replace(self, extent=self.extent / factor, h=self.h / factor)

    @cached_property
    def grid(self) -> "Grid":
        return Grid(self)


class Grid:
    """Node coordinates, masks and weights for a geometry."""

    def __init__(self, geometry: GridGeometry):
        g = geometry
        self.geometry = geometry
        self.split = g.split if g.mode == "double_polar" else None
        h, R = g.h, g.extent
        if g.mode == "planar":
            n = 2 * int(math.ceil(R / h - 1e-9)) + 3
            centre = (n - 1) / 2.0
            axis = (np.arange(n) - centre) * h
            self.x = axis
            self.y = axis.copy()
        else:
            n = int(math.ceil(R / h - 1e-9)) + 2
            axis = (np.arange(n) + 0.5) * h
            self.x = axis
            self.y = axis.copy()
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        self.X, self.Y = X, Y
        eps = 1e-9 * h
        if g.mode == "planar" and g.shape == "box":
            active = (np.abs(X) < R - eps) & (np.abs(Y) < R - eps)
        else:
            active = np.hypot(X, Y) < R - eps
        near = np.zeros_like(active)
        near[1:, :] |= active[:-1, :]
        near[:-1, :] |= active[1:, :]
        near[:, 1:] |= active[:, :-1]
        near[:, :-1] |= active[:, 1:]
        self.active = active
        self.fixed = near & ~active
        self.used = active | self.fixed

        self.node_w = self._weight(X, Y) * active
        mid_x = 0.5 * (X[1:, :] + X[:-1, :])
        mid_y = 0.5 * (Y[:, 1:] + Y[:, :-1])
        link_x = (self.used[1:, :] & self.used[:-1, :]) & (active[1:, :] | active[:-1, :])
        link_y = (self.used[:, 1:] & self.used[:, :-1]) & (active[:, 1:] | active[:, :-1])
        self.wx = self._weight(mid_x, Y[1:, :]) * link_x
        self.wy = self._weight(X[:, 1:], mid_y) * link_y
        self.degree = self.neighbour_sum(np.ones_like(X), weights_only=True)
        self.colour = (np.add.outer(np.arange(len(self.x)), np.arange(len(self.y))) % 2).astype(np.int8)
        self._laplacian = None

    def _weight(self, X, Y):
        return _node_weight(X, Y, self.split)

    def neighbour_sum(self, u: np.ndarray, weights_only: bool = False) -> np.ndarray:
        """sum_j w_ij u_j (or sum_j w_ij when weights_only)."""
        out = np.zeros_like(u, dtype=float)
        a = np.ones_like(u) if weights_only else u
        out[:-1, :] += self.wx * a[1:, :]
        out[1:, :] += self.wx * a[:-1, :]
        out[:, :-1] += self.wy * a[:, 1:]
        out[:, 1:] += self.wy * a[:, :-1]
        return out

    def laplacian(self) -> sparse.csr_matrix:
        """Weighted graph Laplacian over active nodes (rows) and all used nodes (columns)."""
        if self._laplacian is not None:
            return self._laplacian
        shape = self.X.shape
        idx = np.arange(self.X.size).reshape(shape)
        rows, cols, vals = [], [], []
        for w, a, b in (
            (self.wx, idx[:-1, :], idx[1:, :]),
            (self.wy, idx[:, :-1], idx[:, 1:]),
        ):
            keep = w > 0
            ia, ib, wv = a[keep], b[keep], w[keep]
            rows += [ia, ib, ia, ib]
            cols += [ia, ib, ib, ia]
            vals += [wv, wv, -wv, -wv]
        rows_a = np.concatenate(rows)
        cols_a = np.concatenate(cols)
        vals_a = np.concatenate(vals)
        mat = sparse.coo_matrix((vals_a, (rows_a, cols_a)), shape=(self.X.size, self.X.size)).tocsr()
        self._laplacian = mat
        return mat


def _node_weight(X, Y, split: Optional[SymmetrySplit]):
    if split is None:
        return np.ones_like(np.asarray(X, dtype=float))
    return np.abs(X) ** (split.m - 1) * np.abs(Y) ** (split.k - 1)


@dataclass(frozen=True, eq=False)
class GridField:
    geometry: GridGeometry
    u: np.ndarray
    boundary_trace: np.ndarray
    energy: float
    sweeps: int = 0
    converged: bool = True
    energies: Tuple[float, ...] = ()

    @property
    def h(self) -> float:
        return self.geometry.h

    @property
    def grid(self) -> Grid:
        return self.geometry.grid

    @property
    def theta_cut(self) -> float:
        return self.geometry.h**2

    @property
    def positive(self) -> np.ndarray:
        return (self.u > self.theta_cut) & self.grid.used

    def value_at(self, p) -> float:
        """Nearest-node value."""
        i, j = self.nearest_node(p)
        return float(self.u[i, j])

    def nearest_node(self, p) -> Tuple[int, int]:
        grid = self.grid
        i = int(np.clip(np.rint((p[0] - grid.x[0]) / self.h), 0, len(grid.x) - 1))
        j = int(np.clip(np.rint((p[1] - grid.y[0]) / self.h), 0, len(grid.y) - 1))
        return i, j


@dataclass(frozen=True)
class MinimizeOptions:
    max_sweeps: int = 20000
    energy_tol: float = 1e-12
    resolve_every: int = 10
    polish_passes: int = 8
    seed: int = 0


def discrete_energy(grid: Grid, u: np.ndarray, h: float, constant: float = 1.0) -> float:
    dx = np.diff(u, axis=0)
    dy = np.diff(u, axis=1)
    dirichlet = float(np.sum(grid.wx * dx * dx) + np.sum(grid.wy * dy * dy))
    volume = float(h * h * np.sum(grid.node_w * (u > 0.0)))
    return constant * (dirichlet + volume)


def _relax(grid: Grid, u: np.ndarray, colour: int, h: float) -> None:
    """Exact nodewise minimization on one colour class (in place)."""
    sel = grid.active & (grid.colour == colour)
    num = grid.neighbour_sum(u)
    S = grid.degree
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(S > 0, num / S, 0.0)
    positive = S * mu * mu > grid.node_w * h * h
    u[sel] = np.where(positive[sel], mu[sel], 0.0)


def _harmonic_on(grid: Grid, u: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Weighted-harmonic function on ``support`` (active nodes) with the current fixed values, 0 elsewhere."""
    out = np.where(grid.fixed, u, 0.0)
    flat_support = np.flatnonzero(support & grid.active)
    if flat_support.size == 0:
        return out
    L = grid.laplacian()
    A = L[flat_support][:, flat_support]
    fixed_idx = np.flatnonzero(grid.fixed)
    rhs = -(L[flat_support][:, fixed_idx] @ u.ravel()[fixed_idx])
    sol = spsolve(A.tocsc(), rhs)
    sol = np.where(sol > 1e-14 * max(1.0, float(np.max(np.abs(sol)))), sol, 0.0)
    out.ravel()[flat_support] = sol
    return out


def _polish(grid: Grid, u: np.ndarray, h: float, rng: np.random.Generator, passes: int) -> int:
    """Randomized nodewise sweeps over the free-boundary band; returns the number of flips."""
    flips = 0
    wx, wy, W, S = grid.wx, grid.wy, grid.node_w, grid.degree
    nx, ny = u.shape
    for _ in range(passes):
        pos = u > 0
        band = np.zeros_like(pos)
        band[1:, :] |= pos[1:, :] != pos[:-1, :]
        band[:-1, :] |= pos[1:, :] != pos[:-1, :]
        band[:, 1:] |= pos[:, 1:] != pos[:, :-1]
        band[:, :-1] |= pos[:, 1:] != pos[:, :-1]
        nodes = np.argwhere(band & grid.active)
        if len(nodes) == 0:
            break
        changed = 0
        for i, j in nodes[rng.permutation(len(nodes))]:
            num = 0.0
            if i > 0:
                num += wx[i - 1, j] * u[i - 1, j]
            if i < nx - 1:
                num += wx[i, j] * u[i + 1, j]
            if j > 0:
                num += wy[i, j - 1] * u[i, j - 1]
            if j < ny - 1:
                num += wy[i, j] * u[i, j + 1]
            mu = num / S[i, j] if S[i, j] > 0 else 0.0
            new = mu if S[i, j] * mu * mu > W[i, j] * h * h else 0.0
            if (new > 0) != (u[i, j] > 0):
                changed += 1
            u[i, j] = new
        flips += changed
        if changed == 0:
            break
    return flips


def _check_descent(previous: float, current: float, where: str) -> None:
    if current > previous + 1e-10 * max(1.0, abs(previous)):
        raise AssertionError(f"energy increased during {where}: {previous:.15g} -> {current:.15g}")


def _shift(a: np.ndarray, step: int, axis: int, fill) -> np.ndarray:
    """a[i + step] along ``axis``, ``fill`` past the edge."""
    out = np.full_like(a, fill)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, None), slice(None, -step)
    else:
        src[axis], dst[axis] = slice(None, step), slice(-step, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _front_slopes(u: np.ndarray, h: float) -> np.ndarray:
    """|grad u| at positive nodes from differences that stay inside the positive set."""
    pos = u > 0
    parts = []
    for axis in (0, 1):
        up, um = _shift(u, 1, axis, 0.0), _shift(u, -1, axis, 0.0)
        pp, pm = _shift(pos, 1, axis, False), _shift(pos, -1, axis, False)
        g = np.where(pp & pm, (up - um) / (2 * h), np.where(pp, (up - u) / h, np.where(pm, (u - um) / h, 0.0)))
        parts.append(g)
    return np.where(pos, np.hypot(*parts), 0.0)


def _front_proposal(grid: Grid, u: np.ndarray, h: float) -> np.ndarray:
    """Front nodes to drop (slope < 1) and zero neighbours to add (neighbour slope > 1)."""
    pos = u > 0
    slopes = _front_slopes(u, h)
    zero_nb = np.zeros_like(pos)
    pos_nb = np.zeros_like(pos)
    nb_slope = np.zeros_like(u)
    for axis in (0, 1):
        for step in (1, -1):
            zero_nb |= _shift(~pos & grid.used, step, axis, False)
            other = _shift(pos, step, axis, False)
            pos_nb |= other
            nb_slope = np.maximum(nb_slope, np.where(other, _shift(slopes, step, axis, 0.0), 0.0))
    drop = pos & grid.active & zero_nb & (slopes < 1.0)
    add = ~pos & grid.active & pos_nb & (nb_slope > 1.0)
    return drop | add


def _trial_sets(flip: np.ndarray, depth: int = 3):
    """The whole proposal, then recursive halves split along the longer extent."""
    yield flip
    parts = [np.argwhere(flip)]
    for _ in range(depth):
        halves = []
        for part in parts:
            if len(part) < 2:
                continue
            axis = int(np.argmax(np.ptp(part, axis=0)))
            order = np.argsort(part[:, axis], kind="stable")
            mid = len(part) // 2
            halves += [part[order[:mid]], part[order[mid:]]]
        parts = halves
        for part in parts:
            chosen = np.zeros_like(flip)
            chosen[part[:, 0], part[:, 1]] = True
            yield chosen


def _front_phase(grid: Grid, u: np.ndarray, h: float, constant: float, max_moves: int) -> Tuple[np.ndarray, int]:
    """Move the discrete front toward |grad u| = 1 with exact re-solves; only energy-decreasing moves are kept."""
    energy = discrete_energy(grid, u, h, constant)
    moves = 0
    for _ in range(max_moves):
        flip = _front_proposal(grid, u, h)
        if not flip.any():
            break
        accepted = False
        for chosen in _trial_sets(flip):
            candidate = _harmonic_on(grid, u, (u > 0) ^ chosen)
            cand_energy = discrete_energy(grid, candidate, h, constant)
            if cand_energy < energy - 1e-13 * max(1.0, abs(energy)):
                u, energy, accepted = candidate, cand_energy, True
                break
        if not accepted:
            break
        moves += 1
    return u, moves


def _nested_guess(geometry: "GridGeometry", trace: Trace, boundary: np.ndarray) -> Tuple[np.ndarray, int]:
    """Harmonic extension on the coarsest level, front-corrected and carried to finer grids."""
    grid = geometry.grid
    h = geometry.h
    coarse_h = 2.0 * h
    if geometry.extent / coarse_h >= COARSEST_CELLS:
        coarse = replace(geometry, h=coarse_h)
        coarse_u, _ = _nested_guess(coarse, trace, sample_trace(coarse, trace))
        cg = coarse.grid
        interp = RegularGridInterpolator(
            (cg.x, cg.y), np.where(cg.used, coarse_u, 0.0), bounds_error=False, fill_value=None
        )
        guess = interp(np.column_stack([grid.X.ravel(), grid.Y.ravel()])).reshape(grid.X.shape)
        support = grid.active & (guess > 0)
    else:
        support = grid.active
    u = _harmonic_on(grid, boundary, support)
    max_moves = 8 * int(math.ceil(geometry.extent / h)) + 20
    return _front_phase(grid, u, h, geometry.measure_constant, max_moves)


def _homogeneous_guess(geometry: "GridGeometry", trace: Trace, boundary: np.ndarray) -> np.ndarray:
    """(|x| / R) g(R x / |x|): exact for one-homogeneous traces."""
    grid = geometry.grid
    R = geometry.extent
    u = np.where(grid.fixed, boundary, 0.0)
    sel = grid.active & (np.hypot(grid.X, grid.Y) > 0)
    r = np.hypot(grid.X[sel], grid.Y[sel])
    vals = np.asarray(trace(R * grid.X[sel] / r, R * grid.Y[sel] / r), dtype=float)
    u[sel] = np.maximum((r / R) * vals, 0.0)
    return u


def _settle(grid: Grid, u: np.ndarray, h: float, constant: float, max_moves: int) -> Tuple[np.ndarray, int]:
    """Harmonic re-solve on the current support if it lowers the energy, then front moves."""
    candidate = _harmonic_on(grid, u, u > 0)
    if discrete_energy(grid, candidate, h, constant) <= discrete_energy(grid, u, h, constant):
        u = candidate
    return _front_phase(grid, u, h, constant, max_moves)


def _initial_guess(
    geometry: "GridGeometry", trace: Trace, boundary: np.ndarray, warm_support: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, int, str]:
    """Lowest-energy start among the nested guess, the homogeneous extension and an optional warm support."""
    grid = geometry.grid
    h, C = geometry.h, geometry.measure_constant
    max_moves = 8 * int(math.ceil(geometry.extent / h)) + 20
    starts = {
        "nested": _nested_guess(geometry, trace, boundary),
        "homogeneous": _settle(grid, _homogeneous_guess(geometry, trace, boundary), h, C, max_moves),
    }
    if warm_support is not None:
        if warm_support.shape != grid.X.shape:
            raise ValueError(f"warm support has shape {warm_support.shape}, grid is {grid.X.shape}")
        warm = _harmonic_on(grid, boundary, warm_support & grid.active)
        starts["warm"] = _settle(grid, warm, h, C, max_moves)
    name = min(starts, key=lambda key: discrete_energy(grid, starts[key][0], h, C))
    u, moves = starts[name]
    return u, moves, name


def sample_trace(geometry: GridGeometry, trace: Trace) -> np.ndarray:
    grid = geometry.grid
    values = np.zeros_like(grid.X)
    vals = np.asarray(trace(grid.X[grid.fixed], grid.Y[grid.fixed]), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("boundary trace must be finite")
    values[grid.fixed] = np.maximum(vals, 0.0)
    return values


def minimize(
    geometry: GridGeometry,
    trace: Trace,
    opts: Optional[MinimizeOptions] = None,
    warm_support: Optional[np.ndarray] = None,
) -> GridField:
    """Relax the discrete energy from the lowest-energy initial guess.

    Candidates are the nested front-corrected harmonic extension, the one-homogeneous
    extension of the trace (the sampled cone itself for cone data) and, when given, the
    harmonic extension on ``warm_support``. Every later step is a descent step, so the
    result never has more energy than the chosen start.
    """
    opts = opts or MinimizeOptions()
    grid = geometry.grid
    h, C = geometry.h, geometry.measure_constant
    boundary = sample_trace(geometry, trace)

    u, front_moves, start = _initial_guess(geometry, trace, boundary, warm_support)
    energy = discrete_energy(grid, u, h, C)
    energies: List[float] = [energy]
    checkpoint_energy = energy
    checkpoint_support = u > 0
    converged = False
    sweep = 0
    for sweep in range(1, opts.max_sweeps + 1):
        order = (0, 1) if sweep % 2 else (1, 0)
        for colour in order:
            _relax(grid, u, colour, h)
        current = discrete_energy(grid, u, h, C)
        _check_descent(energy, current, f"sweep {sweep}")
        energy = current
        if sweep % opts.resolve_every == 0:
            candidate = _harmonic_on(grid, u, u > 0)
            cand_energy = discrete_energy(grid, candidate, h, C)
            if cand_energy <= energy:
                u, energy = candidate, cand_energy
            support = u > 0
            stalled = checkpoint_energy - energy <= opts.energy_tol * max(1.0, abs(energy))
            if stalled and np.array_equal(support, checkpoint_support):
                converged = True
            checkpoint_energy, checkpoint_support = energy, support
        energies.append(energy)
        if converged:
            break

    rng = np.random.default_rng(opts.seed)
    flips = _polish(grid, u, h, rng, opts.polish_passes)
    if flips:
        candidate = _harmonic_on(grid, u, u > 0)
        polished = discrete_energy(grid, u, h, C)
        cand_energy = discrete_energy(grid, candidate, h, C)
        if cand_energy <= polished:
            u, polished = candidate, cand_energy
        _check_descent(energy, polished, "polish")
        energy = polished
        energies.append(energy)

    result = GridField(
        geometry=geometry,
        u=u,
        boundary_trace=boundary,
        energy=energy,
        sweeps=sweep,
        converged=converged,
        energies=tuple(energies),
    )
    log_event(
        "solve",
        "minimization finished" if converged else "sweep limit reached",
        {"mode": geometry.mode, "h": h, "extent": geometry.extent},
        energy=energy,
        sweeps=sweep,
        polish_flips=flips,
        front_moves=front_moves,
        start=start,
    )
    if not converged:
        raise SweepLimitExceeded(f"no convergence within {opts.max_sweeps} sweeps", field=result)
    return result


def field_from_function(geometry: GridGeometry, fn: Trace) -> GridField:
    """Sample an analytic function on the used nodes (exact or synthetic fields)."""
    grid = geometry.grid
    u = np.zeros_like(grid.X)
    u[grid.used] = np.maximum(np.asarray(fn(grid.X[grid.used], grid.Y[grid.used]), dtype=float), 0.0)
    boundary = np.where(grid.fixed, u, 0.0)
    energy = discrete_energy(grid, u, geometry.h, geometry.measure_constant)
    return GridField(geometry=geometry, u=u, boundary_trace=boundary, energy=energy, energies=(energy,))


def flat_trace(c: float, direction: Tuple[float, float] = (1.0, 0.0)) -> Trace:
    """x . e - c, signed; sampling clamps it at zero."""
    ex, ey = direction
    norm = math.hypot(ex, ey)
    ex, ey = ex / norm, ey / norm
    return lambda X, Y: ex * X + ey * Y - c


def lifted(trace: Trace, t: float) -> Trace:
    """g_t = (g + t)_+."""
    return lambda X, Y: np.maximum(np.asarray(trace(X, Y), dtype=float) + t, 0.0)


__all__ = [
    "GridGeometry",
    "Grid",
    "GridField",
    "MinimizeOptions",
    "discrete_energy",
    "sample_trace",
    "minimize",
    "field_from_function",
    "flat_trace",
    "lifted",
]
