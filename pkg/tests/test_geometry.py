"""Signed-distance oracles: exactness, Lipschitz property, sign consistency."""

import math

import numpy as np
import numpy.testing as npt
import pytest

from brownflight import KOCH_DIMENSION, make_domain, r_omega
from brownflight.errors import ConfigurationError
from brownflight.geometry import distance_interval_on_cube, koch_snowflake_vertices
from brownflight.whitney import DyadicCube, decompose


def brute_polygon_distance(points, vertices):
    """Independent reference: min distance over every edge, plain loops in numpy."""
    a = vertices
    b = np.roll(vertices, -1, axis=0)
    ab = b - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    out = np.empty(len(points))
    for i, p in enumerate(points):
        ap = p - a
        tt = np.clip(np.einsum("ij,ij->i", ap, ab) / ab2, 0.0, 1.0)
        diff = ap - tt[:, None] * ab
        out[i] = np.sqrt(np.einsum("ij,ij->i", diff, diff).min())
    return out


def test_square_center_value(square_domain):
    center = np.array([1.0 / 3.0, 1.0 / 3.0])
    npt.assert_allclose(square_domain.signed_distance(center), 0.5, atol=1e-15)


def test_disk_center_value(disk_domain):
    npt.assert_allclose(disk_domain.signed_distance(np.array([1 / 3, 1 / 3])), 1.0, atol=1e-15)


def test_rectangle_and_box_values():
    rect = make_domain({"type": "rectangle", "a": 2.0, "b": 1.0})
    c = np.array([1 / 3, 1 / 3])
    npt.assert_allclose(rect.signed_distance(c), 0.5, atol=1e-15)
    box = make_domain({"type": "box3d", "a": 1.0, "b": 1.0, "c": 4.0})
    npt.assert_allclose(box.signed_distance(np.array([1 / 3, 1 / 3, 1 / 3])), 0.5, atol=1e-15)


def test_square_sign_matches_analytic_inside(square_domain, rng):
    pts = rng.uniform(-0.6, 1.2, size=(4000, 2))
    inside = np.all(np.abs(pts - 1 / 3) < 0.5, axis=1)
    s = square_domain.signed_distance(pts)
    on_edge = np.any(np.isclose(np.abs(pts - 1 / 3), 0.5), axis=1)
    assert np.array_equal(s[~on_edge] > 0, inside[~on_edge])


def test_disk_sign_matches_analytic_inside(disk_domain, rng):
    pts = rng.uniform(-1.0, 1.8, size=(4000, 2))
    inside = np.linalg.norm(pts - 1 / 3, axis=1) < 1.0
    s = disk_domain.signed_distance(pts)
    assert np.array_equal(s > 0, inside)


@pytest.mark.parametrize("spec", [
    {"type": "square", "side": 1.0},
    {"type": "disk", "radius": 1.0},
    {"type": "koch_snowflake", "generation": 4, "side": 1.0},
    {"type": "box3d", "a": 1.0, "b": 2.0, "c": 0.5},
])
def test_lipschitz_property(spec, rng):
    dom = make_domain(spec)
    lo, hi = dom.bounding_box
    lo, hi = lo - 0.2, hi + 0.2
    x = rng.uniform(lo, hi, size=(10000, dom.dimension))
    y = rng.uniform(lo, hi, size=(10000, dom.dimension))
    ds = np.abs(dom.signed_distance(x) - dom.signed_distance(y))
    assert np.all(ds <= np.linalg.norm(x - y, axis=1) + 1e-12)


def test_koch_edge_count():
    for g in (0, 1, 3):
        assert len(koch_snowflake_vertices(g)) == 3 * 4**g


def test_koch_matches_bruteforce(rng):
    dom = make_domain({"type": "koch_snowflake", "generation": 4, "side": 1.0})
    verts = koch_snowflake_vertices(4, side=1.0)
    pts = rng.uniform(-0.4, 1.1, size=(1000, 2))
    expected = brute_polygon_distance(pts, verts)
    npt.assert_allclose(np.abs(dom.signed_distance(pts)), expected, atol=1e-12)


def test_koch_fast_grid_stays_exact(rng):
    dom = make_domain({"type": "koch_snowflake", "generation": 4, "side": 1.0})
    dom.prepare_fast_queries()
    verts = koch_snowflake_vertices(4, side=1.0)
    pts = rng.uniform(-0.4, 1.1, size=(1000, 2))
    expected = brute_polygon_distance(pts, verts)
    npt.assert_allclose(dom.unsigned_distance(pts), expected, atol=1e-12)
    lower = dom.distance_lower_bound(pts)
    assert np.all(lower <= expected + 1e-12)


def test_koch_prefractal_refinement(rng):
    probes = rng.uniform(0.0, 0.7, size=(200, 2))
    prev = make_domain({"type": "koch_snowflake", "generation": 2, "side": 1.0})
    for g in (3, 4, 5):
        cur = make_domain({"type": "koch_snowflake", "generation": g, "side": 1.0})
        delta = np.abs(cur.signed_distance(probes) - prev.signed_distance(probes))
        assert delta.max() <= (1.0 / 3.0) ** (g - 1)
        prev = cur


def test_koch_dimension_metadata():
    dom = make_domain({"type": "koch_snowflake", "generation": 5, "side": 1.0})
    npt.assert_allclose(dom.known_boundary_dimension, KOCH_DIMENSION, atol=1e-12)
    assert make_domain({"type": "square", "side": 2.0}).known_boundary_dimension == 1.0
    assert make_domain({"type": "box3d", "a": 1, "b": 1, "c": 1}).known_boundary_dimension == 2.0


def test_make_domain_rejects_bad_specs():
    for bad in [
        {"type": "square", "side": -1.0},
        {"type": "square"},
        {"type": "koch_snowflake", "generation": -2, "side": 1.0},
        {"type": "koch_snowflake", "generation": 1.5, "side": 1.0},
        {"type": "nonagon", "side": 1.0},
        {"side": 1.0},
    ]:
        with pytest.raises(ConfigurationError):
            make_domain(bad)


def test_boundary_projection_lands_on_boundary(rng):
    for spec in ({"type": "square", "side": 1.0},
                 {"type": "disk", "radius": 1.0},
                 {"type": "koch_snowflake", "generation": 3, "side": 1.0}):
        dom = make_domain(spec)
        lo, hi = dom.bounding_box
        pts = rng.uniform(lo - 0.1, hi + 0.1, size=(300, dom.dimension))
        proj = dom.boundary_projection(pts)
        npt.assert_allclose(dom.signed_distance(proj), 0.0, atol=1e-9)


# -- r_omega ----------------------------------------------------------------

def test_r_omega_unit_square(square_domain, square_dec8):
    npt.assert_allclose(r_omega(square_domain, square_dec8), 0.5, atol=1e-8)


def test_r_omega_disk_capped():
    dom = make_domain({"type": "disk", "radius": 3.0})
    dec = decompose(dom, -6)
    assert r_omega(dom, dec) == 1.0


def test_r_omega_koch_value_and_stability():
    dom = make_domain({"type": "koch_snowflake", "generation": 6, "side": 1.0})
    vals = []
    for mg in (-7, -8):
        dec = decompose(dom, mg)
        vals.append(r_omega(dom, dec))
    assert 0.2 < vals[0] < 0.5
    assert abs(vals[1] - vals[0]) <= 2.0**-7


# -- distance_interval_on_cube ----------------------------------------------

def test_interval_contains_center_value(square_domain, rng):
    for _ in range(50):
        k = int(rng.integers(-6, -2))
        idx = tuple(int(i) for i in rng.integers(-2, 2, size=2))
        cube = DyadicCube(k, idx)
        lo, hi = distance_interval_on_cube(square_domain, cube)
        center_dist = abs(square_domain.signed_distance(cube.center))
        assert lo <= center_dist + 1e-12
        assert center_dist <= hi + 1e-12


def test_interval_square_concrete(square_domain):
    cube = DyadicCube(-2, (1, 1))  # [0.25, 0.5]^2, inside the offset square
    lo, hi = distance_interval_on_cube(square_domain, cube)
    corners = cube.corners
    exact_min = float(np.min(square_domain.signed_distance(corners)))  # concave on convex domain
    assert lo <= exact_min <= hi
    assert hi <= exact_min + 2.0 * cube.half_diagonal + 1e-12


def test_interval_montecarlo_containment(koch5_domain, koch5_dec8, rng):
    gens = koch5_dec8.generations
    checked = 0
    for k in gens:
        idx = koch5_dec8.by_generation[k]
        take = idx[rng.choice(len(idx), size=min(20, len(idx)), replace=False)]
        for row in take:
            cube = DyadicCube(k, tuple(int(i) for i in row))
            lo, hi = distance_interval_on_cube(koch5_domain, cube)
            samples = cube.corners[0] + rng.random((50, 2)) * cube.side
            d = np.abs(koch5_domain.signed_distance(samples))
            assert np.all(lo <= d + 1e-12) and np.all(d <= hi + 1e-12)
            checked += 1
    assert checked >= 60
