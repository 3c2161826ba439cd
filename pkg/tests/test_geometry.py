import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.optimize import brentq

from coxsat.geometry import (
    GeometryDomainError,
    GeometryParams,
    apex_distance,
    cap_angle_of_distance,
    distance_of_cap_angle,
    distance_to_typical,
    interference_angle_bounds,
    orbit_cap_half_angle,
    satellite_position,
)

G = GeometryParams.from_orbit_radius(6950.0)
NORTH = np.array([0.0, 0.0, G.r_e])

altitudes = st.floats(200.0, 20000.0)
angles = st.floats(0.0, 2 * math.pi, exclude_max=True)
half_turn = st.floats(0.0, math.pi, exclude_max=True)


def polar_angle(p):
    return math.acos(p[2] / np.linalg.norm(p))


@given(altitudes)
def test_params_invariants(r_a):
    g = GeometryParams(6400.0, r_a)
    assert g.r_s == 6400.0 + r_a
    assert g.d_max ** 2 + g.r_e ** 2 == pytest.approx(g.r_s ** 2, rel=1e-14)
    assert 0.0 < g.phi_bar < 0.5 * math.pi


def test_params_reject_nonpositive():
    with pytest.raises(GeometryDomainError):
        GeometryParams(6400.0, 0.0)
    with pytest.raises(GeometryDomainError):
        GeometryParams(-1.0, 500.0)


def test_cap_angle_endpoints():
    assert cap_angle_of_distance(G.r_s - G.r_e, G) == 0.0
    assert cap_angle_of_distance(G.d_max, G) == pytest.approx(G.phi_bar, rel=1e-14)


def test_cap_angle_triangle_oracle():
    # place a point on the orbit sphere at polar angle t and solve |P - n| = 1000 for t
    def dist(t):
        p = G.r_s * np.array([math.sin(t), 0.0, math.cos(t)])
        return np.linalg.norm(p - NORTH) - 1000.0

    t = brentq(dist, 0.0, G.phi_bar, xtol=1e-15)
    assert cap_angle_of_distance(1000.0, G) == pytest.approx(t, abs=1e-12)


def test_cap_angle_domain_error():
    with pytest.raises(GeometryDomainError, match=r"\[550"):
        cap_angle_of_distance(100.0, G)
    with pytest.raises(GeometryDomainError):
        cap_angle_of_distance(G.d_max * 1.01, G)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_cap_angle_monotone_and_inverse(a, b):
    assume(a != b)
    lo, hi = sorted((a, b))
    d1 = G.d_min + lo * (G.d_max - G.d_min)
    d2 = G.d_min + hi * (G.d_max - G.d_min)
    assume(d2 - d1 > 1e-6)
    x1, x2 = cap_angle_of_distance(d1, G), cap_angle_of_distance(d2, G)
    assert x1 < x2
    assert float(distance_of_cap_angle(x1, G)) == pytest.approx(d1, rel=1e-12)


def test_orbit_cap_half_angle_trivial_cases():
    assert orbit_cap_half_angle(0.3, 0.5 * math.pi) == pytest.approx(0.3, abs=1e-15)
    assert orbit_cap_half_angle(0.3, 0.5 * math.pi - 0.3) == pytest.approx(0.0, abs=1e-7)
    assert orbit_cap_half_angle(0.3, 0.2) == 0.0


def test_orbit_cap_half_angle_sampling_oracle():
    xi, phi = 0.3, 1.4
    rng = np.random.default_rng(12)
    w = rng.uniform(0.0, 2 * math.pi, 10 ** 6)
    pos = satellite_position(0.0, phi, w, r_s=1.0)
    inside = np.arccos(np.clip(pos.z, -1, 1)) < xi
    frac = inside.mean()
    se = math.sqrt(frac * (1 - frac) / w.size)
    assert abs(orbit_cap_half_angle(xi, phi) - math.pi * frac) < 3 * math.pi * se


def test_orbit_cap_half_angle_bulk_oracle():
    # 10^3 random (xi, phi) pairs against a stratified orbit scan; the midpoint
    # indicator rule is off by at most two cells per arc
    rng = np.random.default_rng(3)
    xi = rng.uniform(0.01, 0.5 * math.pi, 1000)
    phi = 0.5 * math.pi + rng.uniform(-1, 1, 1000) * xi
    n = 20000
    w = (np.arange(n) + 0.5) * 2 * math.pi / n
    z = np.sin(w)[None, :] * np.sin(phi)[:, None]
    frac = (z > np.cos(xi)[:, None]).mean(axis=1)
    np.testing.assert_allclose(orbit_cap_half_angle(xi, phi), math.pi * frac,
                               atol=2 * math.pi / n)


@given(st.floats(0.05, 1.5), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_orbit_cap_half_angle_nonincreasing(xi, a, b):
    o1, o2 = sorted((a * xi, b * xi))
    v1 = orbit_cap_half_angle(xi, 0.5 * math.pi - o1)
    v2 = orbit_cap_half_angle(xi, 0.5 * math.pi - o2)
    assert v1 >= v2 - 1e-12
    assert 0.0 <= v2 <= xi + 1e-15


def test_satellite_position_trivial():
    p = satellite_position(0.0, 0.5 * math.pi, 0.5 * math.pi, G)
    np.testing.assert_allclose([p.x, p.y, p.z], [0.0, 0.0, G.r_s], atol=1e-9)
    q = satellite_position(0.7, 1.1, 0.0, G)
    assert q.z == 0.0
    np.testing.assert_allclose([q.x, q.y], [G.r_s * math.cos(0.7), G.r_s * math.sin(0.7)])


@given(half_turn, half_turn, angles)
def test_position_radius_and_distance_duality(theta, phi, omega):
    p = satellite_position(theta, phi, omega, G)
    r = math.sqrt(p.x ** 2 + p.y ** 2 + p.z ** 2)
    assert r == pytest.approx(G.r_s, rel=1e-12)
    d = np.linalg.norm(np.array([p.x, p.y, p.z]) - NORTH)
    assert distance_to_typical(phi, omega, G) == pytest.approx(d, rel=1e-12)


def test_position_distance_duality_bulk():
    rng = np.random.default_rng(5)
    th = rng.uniform(0, math.pi, 10 ** 4)
    ph = rng.uniform(0, math.pi, 10 ** 4)
    om = rng.uniform(0, 2 * math.pi, 10 ** 4)
    p = satellite_position(th, ph, om, G)
    d = np.sqrt(p.x ** 2 + p.y ** 2 + (p.z - G.r_e) ** 2)
    np.testing.assert_allclose(distance_to_typical(ph, om, G), d, rtol=1e-12)


@given(half_turn, st.floats(0.0, math.pi), st.floats(-0.5 * math.pi + 1e-3, 0.5 * math.pi - 1e-3))
def test_position_matches_node_offset_formula(theta, phi, omega):
    # closed-form coordinates with the arctan longitude offset, valid for cos(omega) > 0
    rho = G.r_s * math.sqrt(math.cos(omega) ** 2 + math.sin(omega) ** 2 * math.cos(phi) ** 2)
    off = math.atan(math.tan(omega) * math.cos(phi))
    p = satellite_position(theta, phi, omega, G)
    np.testing.assert_allclose([p.x, p.y, p.z],
                               [rho * math.cos(off + theta), rho * math.sin(off + theta),
                                G.r_s * math.sin(omega) * math.sin(phi)],
                               atol=1e-8)


def test_distance_extremes():
    assert distance_to_typical(0.5 * math.pi, 0.5 * math.pi, G) == pytest.approx(G.r_s - G.r_e)
    assert distance_to_typical(0.5 * math.pi, 1.5 * math.pi, G) == pytest.approx(G.r_s + G.r_e)


@given(st.floats(math.asin(G.r_e / G.r_s) + 1e-6, math.pi - math.asin(G.r_e / G.r_s) - 1e-6))
def test_visibility_boundary(phi):
    w = math.asin(min(1.0, G.r_e / G.r_s / math.sin(phi)))
    assert distance_to_typical(phi, w, G) == pytest.approx(G.d_max, rel=1e-10)


@given(half_turn, angles)
def test_distance_symmetries(phi, omega):
    d = distance_to_typical(phi, omega, G)
    assert distance_to_typical(math.pi - phi, omega, G) == pytest.approx(d, rel=1e-12)
    assert distance_to_typical(phi, math.pi - omega, G) == pytest.approx(d, rel=1e-12)
    assert G.d_min - 1e-9 <= d <= G.r_s + G.r_e + 1e-9


def test_interference_bounds_trivial():
    w1, w2 = interference_angle_bounds(0.0, G.d_max, G)
    assert w1 == pytest.approx(G.phi_bar, rel=1e-12)
    assert w2 == pytest.approx(G.phi_bar, rel=1e-12)
    xi = cap_angle_of_distance(1500.0, G)
    w1, _ = interference_angle_bounds(xi * (1 - 1e-12), 1500.0, G)
    assert 0.0 <= w1 < 1e-5
    assert interference_angle_bounds(G.phi_bar + 0.01, 1500.0, G) == (0.0, 0.0)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_interference_bounds_distance_inverse(a, b):
    z = G.d_min + 1.0 + a * (G.d_max - G.d_min - 2.0)
    xi = cap_angle_of_distance(z, G)
    colat = b * xi * 0.999
    w1, w2 = interference_angle_bounds(colat, z, G)
    assert 0.0 <= w1 <= w2 <= 0.5 * math.pi
    assert float(apex_distance(colat, w1, G)) == pytest.approx(z, abs=1e-9)
    # same point through the inclination parametrisation
    assert distance_to_typical(0.5 * math.pi - colat, 0.5 * math.pi + w1, G) == pytest.approx(z, abs=1e-9)
