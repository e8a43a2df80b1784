from __future__ import annotations

import math

import numpy as np
import pytest

from aclab.solvers.cone_builder import SymmetrySplit, ball_volume, evaluate_cone
from aclab.solvers.errors import SweepLimitExceeded
from aclab.solvers.grid_analysis import classify_point, free_boundary, growth_bounds, weiss_series
from aclab.solvers.grid_solver import (
    GridGeometry,
    MinimizeOptions,
    _homogeneous_guess,
    discrete_energy,
    field_from_function,
    flat_trace,
    lifted,
    minimize,
    sample_trace,
)
from aclab.test.testcase.cases import FLAT_OFFSET


@pytest.fixture(scope="module")
def flat_solution():
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 64)
    return minimize(geo, flat_trace(FLAT_OFFSET))


def test_geometry_round_trip_and_densities():
    geo = GridGeometry(mode="double_polar", extent=1.0, h=1.0 / 32, split=SymmetrySplit(4, 3))
    assert GridGeometry.from_dict(geo.to_dict()) == geo
    assert geo.d == 7
    assert geo.flat_density == pytest.approx(0.5 * ball_volume(7))
    assert GridGeometry().flat_density == pytest.approx(math.pi / 2)


def test_geometry_validation():
    with pytest.raises(ValueError):
        GridGeometry(h=0.0)
    with pytest.raises(ValueError):
        GridGeometry(mode="double_polar")


def test_grid_masks():
    grid = GridGeometry(mode="planar", extent=1.0, h=1.0 / 16).grid
    assert not np.any(grid.active & grid.fixed)
    assert np.all(np.hypot(grid.X[grid.active], grid.Y[grid.active]) < 1.0)
    # active nodes see four used neighbours
    assert np.all(grid.degree[grid.active] == 4)


def test_zero_trace_gives_zero_field():
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 16)
    result = minimize(geo, lambda X, Y: np.zeros_like(X))
    assert result.converged
    assert np.all(result.u == 0.0)
    assert result.energy == 0.0


def test_signed_trace_is_clamped_when_sampled():
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 16)
    grid = geo.grid
    values = sample_trace(geo, flat_trace(FLAT_OFFSET))
    np.testing.assert_allclose(values[grid.fixed], np.maximum(grid.X[grid.fixed] - FLAT_OFFSET, 0.0))
    assert np.all(values[~grid.fixed] == 0.0)


def test_non_finite_trace_is_rejected():
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 16)
    with pytest.raises(ValueError):
        minimize(geo, lambda X, Y: np.where(X > 0, np.nan, 0.0))


def test_flat_trace_reproduces_line(flat_solution):
    h = flat_solution.h
    assert flat_solution.converged
    pts = free_boundary(flat_solution, with_deficit=False).points
    inner = pts[np.hypot(pts[:, 0], pts[:, 1]) < 0.85]
    assert len(inner) > 10
    assert np.max(np.abs(inner[:, 0] - FLAT_OFFSET)) <= 2 * h


def test_energy_never_increases(flat_solution):
    energies = np.asarray(flat_solution.energies)
    assert np.all(np.diff(energies) <= 1e-10 * max(1.0, energies[0]))
    assert flat_solution.energy == pytest.approx(
        discrete_energy(flat_solution.grid, flat_solution.u, flat_solution.h), rel=1e-12
    )


def test_minimizer_beats_sampled_exact_solution(flat_solution):
    exact = field_from_function(flat_solution.geometry, flat_trace(FLAT_OFFSET))
    assert flat_solution.energy <= exact.energy * (1 + 5e-3)


def test_solution_keeps_boundary_values(flat_solution):
    grid = flat_solution.grid
    expected = np.maximum(grid.X[grid.fixed] - FLAT_OFFSET, 0.0)
    np.testing.assert_allclose(flat_solution.u[grid.fixed], expected)
    assert np.all(flat_solution.u >= 0.0)


def test_lift_is_monotone():
    base = flat_trace(FLAT_OFFSET)
    X = np.linspace(-1, 1, 11)
    Y = np.zeros_like(X)
    np.testing.assert_allclose(lifted(base, 0.1)(X, Y), np.maximum(X - FLAT_OFFSET + 0.1, 0.0))
    assert np.all(lifted(base, 0.1)(X, Y) >= np.maximum(base(X, Y), 0.0))
    # the lift acts on the signed trace: nodes just behind the front turn positive
    behind = FLAT_OFFSET - 0.05
    assert lifted(base, 0.1)(np.array([behind]), np.array([0.0]))[0] == pytest.approx(0.05)
    assert base(np.array([behind]), np.array([0.0]))[0] < 0.0


def test_sweep_limit_carries_best_field():
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 16)
    opts = MinimizeOptions(max_sweeps=1, resolve_every=10)
    with pytest.raises(SweepLimitExceeded) as info:
        minimize(geo, flat_trace(FLAT_OFFSET), opts)
    assert info.value.field is not None
    assert not info.value.field.converged


@pytest.fixture(scope="module", params=["cone16", "cone7"])
def cone_solution(request):
    profile = request.getfixturevalue(request.param)
    geo = GridGeometry(mode="double_polar", extent=1.0, h=1.0 / 128, split=profile.split)
    data = lambda X, Y: evaluate_cone(profile, X, Y)
    return profile, minimize(geo, data), field_from_function(geo, data)


def test_cone_data_never_ends_above_the_sampled_cone(cone_solution):
    _, result, exact = cone_solution
    assert result.converged
    assert result.energy <= exact.energy * (1 + 1e-9)


def test_cone_vertex_stays_singular(cone_solution):
    _, result, _ = cone_solution
    assert result.u[result.grid.active].max() > 0
    assert classify_point(result, (0.0, 0.0)) == "singular"


def test_cone_weiss_series_tracks_the_sampled_cone(cone_solution):
    profile, result, exact = cone_solution
    h = result.h
    radii = np.geomspace(16 * h, 0.85, 6)
    solved = weiss_series(result, (0.0, 0.0), radii)
    sampled = weiss_series(exact, (0.0, 0.0), radii)
    np.testing.assert_allclose(solved.values, sampled.values, atol=10 * h)
    assert solved.is_monotone(10 * h)
    outer = weiss_series(result, (0.0, 0.0), [0.25, 0.4, 0.55, 0.7, 0.85])
    assert np.ptp(outer.values) <= 10 * h
    assert outer.values[-1] == pytest.approx(profile.weiss_density, rel=0.05)


def test_homogeneous_start_is_exact_for_cone_data(cone16):
    geo = GridGeometry(mode="double_polar", extent=1.0, h=1.0 / 32, split=cone16.split)
    data = lambda X, Y: evaluate_cone(cone16, X, Y)
    grid = geo.grid
    start = _homogeneous_guess(geo, data, sample_trace(geo, data))
    exact = field_from_function(geo, data)
    np.testing.assert_allclose(start[grid.used], exact.u[grid.used], atol=1e-12)


def test_warm_support_must_match_the_grid():
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 32)
    with pytest.raises(ValueError):
        minimize(geo, flat_trace(FLAT_OFFSET), warm_support=np.ones((3, 3), dtype=bool))


def test_warm_support_never_raises_the_energy(flat_solution):
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 64)
    trace = flat_trace(FLAT_OFFSET - 0.1)
    cold = minimize(geo, trace)
    warm = minimize(geo, trace, warm_support=flat_solution.u > 0)
    assert warm.converged
    assert warm.energy <= cold.energy * (1 + 5e-3)


@pytest.fixture(scope="module")
def flat_ladder():
    return {n: minimize(GridGeometry(mode="planar", extent=1.0, h=1.0 / n), flat_trace(FLAT_OFFSET)) for n in (16, 32, 64)}


def _front_error(result) -> float:
    pts = free_boundary(result, with_deficit=False).points
    inner = pts[np.hypot(pts[:, 0], pts[:, 1]) < 0.85]
    return float(np.max(np.abs(inner[:, 0] - FLAT_OFFSET)))


def test_repeated_solves_are_identical():
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 32)
    first = minimize(geo, flat_trace(FLAT_OFFSET))
    second = minimize(geo, flat_trace(FLAT_OFFSET))
    np.testing.assert_array_equal(first.u, second.u)
    assert first.energies == second.energies


def test_flat_front_stays_within_two_cells_on_each_mesh(flat_ladder):
    errors = {n: _front_error(result) for n, result in flat_ladder.items()}
    for n, err in errors.items():
        assert err <= 2.0 / n


def test_growth_bounds_are_stable_under_refinement(flat_ladder):
    radii = [0.2, 0.3, 0.4]
    bounds = [growth_bounds(flat_ladder[n], (FLAT_OFFSET, 0.0), radii) for n in (32, 64)]
    for key in ("lower", "upper"):
        assert bounds[1][key] == pytest.approx(bounds[0][key], rel=0.2)
    assert bounds[1]["lower"] == pytest.approx(1.0, rel=0.2)
