from __future__ import annotations

import math

import numpy as np
import pytest

from aclab.solvers.cone_builder import evaluate_cone
from aclab.solvers.errors import EmptyBoundary, RadiusOutOfDomain, TooCoarse
from aclab.solvers.grid_analysis import (
    classify_point,
    default_density_gap,
    free_boundary,
    growth_bounds,
    hessian_norm,
    regularity_scale,
    weiss_series,
    weiss_value,
)
from aclab.solvers.grid_solver import GridGeometry, field_from_function, flat_trace
from aclab.test.testcase.cases import FLAT_OFFSET


@pytest.fixture(scope="module")
def flat_field():
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 64)
    return field_from_function(geo, flat_trace(FLAT_OFFSET))


@pytest.fixture(scope="module")
def fine_flat_field():
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 128)
    return field_from_function(geo, flat_trace(FLAT_OFFSET))


@pytest.fixture(scope="module")
def cone_field(cone7):
    geo = GridGeometry(mode="double_polar", extent=1.0, h=1.0 / 128, split=cone7.split)
    return field_from_function(geo, lambda X, Y: evaluate_cone(cone7, X, Y))


def test_free_boundary_of_flat_field(flat_field):
    curve = free_boundary(flat_field)
    pts = curve.points
    assert np.all(np.abs(pts[:, 0] - FLAT_OFFSET) <= flat_field.h)
    assert curve.max_deficit <= 2 * flat_field.h


def test_free_boundary_requires_a_sign_change():
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 16)
    with pytest.raises(EmptyBoundary):
        free_boundary(field_from_function(geo, lambda X, Y: np.zeros_like(X)))
    with pytest.raises(EmptyBoundary):
        free_boundary(field_from_function(geo, lambda X, Y: 2.0 + X))


def test_flat_weiss_density(fine_flat_field):
    h = fine_flat_field.h
    series = weiss_series(fine_flat_field, (FLAT_OFFSET, 0.0), [0.45, 0.55, 0.65])
    assert series.dimension == 2
    np.testing.assert_allclose(series.values, math.pi / 2, atol=5 * h)
    assert series.is_monotone(10 * h)


def test_weiss_radius_must_fit(flat_field):
    with pytest.raises(RadiusOutOfDomain):
        weiss_series(flat_field, (FLAT_OFFSET, 0.0), [0.9])
    with pytest.raises(ValueError):
        weiss_series(flat_field, (FLAT_OFFSET, 0.0), [])


def test_cone_weiss_density_at_origin(cone7, cone_field):
    h = cone_field.h
    series = weiss_series(cone_field, (0.0, 0.0), [0.4, 0.55, 0.7, 0.85])
    assert series.dimension == 7
    assert np.ptp(series.values) <= 10 * h
    np.testing.assert_allclose(series.values, cone7.weiss_density, rtol=0.05)


def test_weighted_series_only_at_origin(cone_field):
    with pytest.raises(ValueError):
        weiss_series(cone_field, (0.3, 0.3), [0.1], cross_section=False)


def test_flat_field_has_vanishing_hessian(flat_field):
    assert np.max(hessian_norm(flat_field)) == pytest.approx(0.0, abs=1e-8)
    p = (0.6, 0.0)
    assert regularity_scale(flat_field, p) == pytest.approx(1.0 - 0.6)


@pytest.mark.parametrize("factor", [2.0, 4.0])
@pytest.mark.parametrize("p", [(0.0, 0.0), (0.2, 0.1)])
def test_regularity_scale_under_rescaling(factor, p):
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 64)
    u = field_from_function(geo, lambda X, Y: 1.0 + 2.0 * (X**2 + Y**2))
    scaled_geo = geo.scaled(factor)
    u_r = field_from_function(scaled_geo, lambda X, Y: (1.0 + 2.0 * ((factor * X) ** 2 + (factor * Y) ** 2)) / factor)
    q = (p[0] / factor, p[1] / factor)
    assert regularity_scale(u_r, q) == pytest.approx(regularity_scale(u, p) / factor, abs=2 * scaled_geo.h)
    assert regularity_scale(u, p) == pytest.approx(1.0 / math.sqrt(32.0), abs=2 * geo.h)


def test_regularity_scale_shrinks_toward_cone_vertex(cone7, cone_field):
    h = cone_field.h
    direction = np.array([math.cos(cone7.theta_fb), math.sin(cone7.theta_fb)])
    scales = []
    for dist in (0.1, 0.2, 0.4):
        p = dist * direction
        scale = regularity_scale(cone_field, p)
        assert scale <= 1.2 * dist + 2 * h
        scales.append(scale)
    assert scales[0] <= scales[-1]


def test_classify_flat_points(flat_field):
    assert classify_point(flat_field, (0.6, 0.0)) == "interior"
    assert classify_point(flat_field, (-0.5, 0.0)) == "contact"
    assert classify_point(flat_field, (FLAT_OFFSET, 0.0)) == "regular"
    with pytest.raises(TooCoarse):
        classify_point(flat_field, (FLAT_OFFSET, 0.94))


def test_planar_gap_falls_back_to_fraction_of_flat_density():
    assert default_density_gap(2) == pytest.approx(0.1 * math.pi / 2)


def test_growth_bounds_of_flat_field(flat_field):
    radii = [8 * flat_field.h, 0.1, 0.2]
    bounds = growth_bounds(flat_field, (FLAT_OFFSET, 0.0), radii)
    assert bounds["lower"] > 0.5
    assert bounds["upper"] <= 1.0 + 1e-12


def test_cached_samplers_follow_in_place_edits():
    geo = GridGeometry(mode="planar", extent=1.0, h=1.0 / 64)
    field = field_from_function(geo, flat_trace(FLAT_OFFSET))
    before = weiss_value(field, (FLAT_OFFSET, 0.0), 0.4)[0]
    assert regularity_scale(field, (0.6, 0.0)) == pytest.approx(0.4)

    field.u *= 2.0
    doubled = field_from_function(geo, lambda X, Y: 2.0 * (X - FLAT_OFFSET))
    after = weiss_value(field, (FLAT_OFFSET, 0.0), 0.4)[0]
    assert after != pytest.approx(before)
    assert after == pytest.approx(weiss_value(doubled, (FLAT_OFFSET, 0.0), 0.4)[0], rel=1e-12)

    grid = geo.grid
    field.u[grid.used] = 1.0 + 2.0 * (grid.X[grid.used] ** 2 + grid.Y[grid.used] ** 2)
    assert regularity_scale(field, (0.0, 0.0)) == pytest.approx(1.0 / math.sqrt(32.0), abs=2 * geo.h)
