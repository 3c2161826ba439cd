import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from coxsat.analytic import (
    CoverageCurve,
    LinkBudget,
    coverage_curve,
    coverage_nakagami,
    coverage_rayleigh,
    coverage_with_noise,
    db_to_linear,
    ergodic_rate,
    integrate_rate,
    laplace_derivatives,
    linear_to_db,
    mean_intersecting_orbits,
    mean_total,
    mean_visible,
    mean_visible_orbits,
    nearest_ccdf,
    nosat_asymptotic,
    nosat_probability,
    visibility_constant,
    visible_orbit_fraction,
)
from coxsat.constellation import CoxModel, CoxParams
from coxsat.geometry import GeometryParams
from coxsat.montecarlo import SimPlan, run_sinr_ccdf
from coxsat.quadrature import QuadratureSpec

G = GeometryParams(6400.0, 550.0)
G2 = GeometryParams.from_orbit_radius(6950.0)
LB = LinkBudget.table1()


def void_exponent_oracle(lam, mu, g):
    # orbit density lam cos(v) dv over co-latitudes; chord half-angle as an arccos
    def f(v):
        w = math.acos(min(1.0, math.cos(g.phi_bar) / math.cos(v)))
        return math.cos(v) * (1.0 - math.exp(-mu / math.pi * w))

    val, _ = quad(f, 0.0, g.phi_bar, epsabs=1e-13, epsrel=1e-12, limit=200)
    return lam * val


# --- units and link budget --------------------------------------------------

def test_db_roundtrip():
    x = np.array([-10.0, 0.0, 3.0, 47.5])
    np.testing.assert_allclose(linear_to_db(db_to_linear(x)), x, atol=1e-12)
    assert db_to_linear(20.0) == pytest.approx(100.0)


def test_table1_link_budget():
    assert LB.p == pytest.approx(1000.0)
    assert LB.g == pytest.approx(100.0)
    assert LB.eirp_dbm == pytest.approx(80.0)
    assert LB.noise_dbw == pytest.approx(-228.6 + 10 * math.log10(290 * 30e6), abs=1e-9)
    assert LB.noise_dbw == pytest.approx(-129.2, abs=0.05)


def test_link_budget_validation():
    with pytest.raises(ValueError):
        LinkBudget(m=1.5)
    with pytest.raises(ValueError):
        LinkBudget(p=0.0)
    with pytest.raises(ValueError):
        LinkBudget(noise_power=-1.0)


def test_coverage_curve_validation_and_crossing():
    with pytest.raises(ValueError):
        CoverageCurve(np.array([1.0, 2.0]), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        CoverageCurve(np.array([2.0, 1.0]), np.array([0.6, 0.5]))
    with pytest.raises(ValueError):
        CoverageCurve(np.array([1.0]), np.array([1.2]))
    c = CoverageCurve(db_to_linear(np.array([0.0, 10.0])), np.array([0.8, 0.4]))
    assert c.threshold_at(0.6) == pytest.approx(5.0)
    assert c.at_db(5.0) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        c.threshold_at(0.9)


# --- moments ------------------------------------------------------------------

@given(st.floats(0, 500), st.floats(0, 500))
def test_mean_total(lam, mu):
    assert mean_total(CoxParams(lam, mu)) == lam * mu


@given(st.floats(200.0, 30000.0))
def test_visibility_constant_closed_form(r_a):
    g = GeometryParams(6400.0, r_a)
    assert visibility_constant(g) == pytest.approx(0.5 * (1 - g.r_e / g.r_s), rel=1e-8)


@given(st.floats(0.1, 200), st.floats(0.1, 200))
def test_mean_visible_is_scale_free(lam, mu):
    c = visibility_constant(G)
    assert mean_visible(CoxParams(lam, mu), G) == pytest.approx(lam * mu * c, rel=1e-12)


@given(st.floats(0.1, 200), st.floats(0.1, 200))
def test_visible_orbit_bounds(lam, mu):
    p = CoxParams(lam, mu)
    o = mean_visible_orbits(p, G)
    assert 0 < o <= mean_intersecting_orbits(lam, G) * (1 + 1e-12)
    assert o <= mean_visible(p, G) * (1 + 1e-9)


def test_visible_orbit_fraction_limits():
    s = math.sin(G.phi_bar)
    assert visible_orbit_fraction(0.0, G) == 0.0
    assert visible_orbit_fraction(1e6, G) == pytest.approx(s, rel=1e-3)
    vals = [visible_orbit_fraction(mu, G) for mu in (1, 10, 100, 1000)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


# --- void probabilities -------------------------------------------------------

@pytest.mark.parametrize("lam,mu", [(10, 10), (20, 5), (100, 1), (10, 20), (3, 300)])
def test_nosat_against_quadrature_oracle(lam, mu):
    expect = math.exp(-void_exponent_oracle(lam, mu, G))
    assert nosat_probability(CoxParams(lam, mu), G) == pytest.approx(expect, rel=1e-8)


def test_nosat_trivial():
    assert nosat_probability(CoxParams(0, 50), G) == 1.0
    assert nosat_probability(CoxParams(50, 0), G) == 1.0


@given(st.floats(1, 100), st.floats(1, 100), st.floats(0.01, 0.5))
def test_nosat_monotone(lam, mu, bump):
    base = nosat_probability(CoxParams(lam, mu), G)
    assert nosat_probability(CoxParams(lam * (1 + bump), mu), G) <= base
    assert nosat_probability(CoxParams(lam, mu * (1 + bump)), G) <= base


@given(st.floats(1, 100), st.floats(1, 100))
def test_nosat_is_void_of_visible_orbits(lam, mu):
    p = CoxParams(lam, mu)
    assert nosat_probability(p, G) == pytest.approx(math.exp(-mean_visible_orbits(p, G)), rel=1e-10)


def test_nosat_asymptote_converges_in_mu():
    g = GeometryParams.from_orbit_radius(7000.0)
    errs = []
    for mu in (1e2, 1e3, 1e4):
        exact = nosat_probability(CoxParams(20.0, mu), g)
        errs.append(abs(exact / nosat_asymptotic(20.0, g) - 1))
    assert errs[0] > errs[1] > errs[2]
    assert nosat_asymptotic(20.0, g) == pytest.approx(math.exp(-20 * math.sin(g.phi_bar)))


def test_nearest_ccdf_boundaries():
    p = CoxParams(20, 20)
    assert nearest_ccdf(G.d_min * 0.99, p, G) == 1.0
    assert nearest_ccdf(G.d_min, p, G) == pytest.approx(1.0)
    assert nearest_ccdf(G.d_max, p, G) == nosat_probability(p, G)
    assert nearest_ccdf(G.d_max * (1 - 1e-9), p, G) == pytest.approx(nosat_probability(p, G), rel=1e-5)
    ds = np.linspace(G.d_min, G.d_max, 25)
    vals = [nearest_ccdf(d, p, G) for d in ds]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


# --- coverage -------------------------------------------------------------------

def test_coverage_at_zero_threshold_is_visibility():
    for lam, mu in [(10, 10), (50, 50)]:
        p = CoxParams(lam, mu)
        assert coverage_rayleigh(0.0, p, G2, LB) == pytest.approx(1 - nosat_probability(p, G2), abs=1e-6)


def test_coverage_trivial_and_domain():
    assert coverage_rayleigh(1.0, CoxParams(0, 10), G2, LB) == 0.0
    with pytest.raises(ValueError):
        coverage_rayleigh(-1.0, CoxParams(5, 5), G2, LB)
    with pytest.raises(ValueError):
        coverage_rayleigh(1.0, CoxParams(5, 5), G2, LinkBudget(m=2))


def test_coverage_nonincreasing_in_threshold():
    p = CoxParams(30, 30)
    vals = [coverage_rayleigh(t, p, G2, LB) for t in db_to_linear(np.arange(-10, 21, 5.0))]
    assert all(b <= a + 1e-7 for a, b in zip(vals, vals[1:]))


@pytest.mark.slow
def test_coverage_rayleigh_against_simulation():
    p = CoxParams(20, 20)
    plan = SimPlan(CoxModel(p, G2), LB, (-5.0, 0.0, 5.0), replicates=40_000, master_seed=3)
    mc = run_sinr_ccdf(plan)
    for tau, v, lo, hi in zip(mc.thresholds, mc.values, mc.ci_low, mc.ci_high):
        exact = coverage_rayleigh(tau, p, G2, LB)
        assert abs(exact - v) <= 1.5 * (hi - lo) + 1e-6


def test_noise_identity():
    noisy = LinkBudget(noise_power=5e4, with_noise=True)
    p = CoxParams(20, 20)
    for tau in (0.1, 1.0, 10.0):
        ratio = coverage_with_noise(tau, p, G2, noisy) / coverage_rayleigh(tau, p, G2, noisy)
        assert ratio == pytest.approx(math.exp(-5e4 * tau / (noisy.p * noisy.g)), rel=1e-12)


def test_hybrid_matches_rayleigh_for_m1():
    p = CoxParams(20, 20)
    est = coverage_nakagami(1.0, p, G2, LB, n_orbit_samples=400, seed=1)
    exact = coverage_rayleigh(1.0, p, G2, LB)
    assert est.agrees_with(exact, n_sigma=3.0, extra_se=1e-4)


def test_hybrid_guards():
    with pytest.raises(ValueError):
        coverage_nakagami(1.0, CoxParams(5, 5), G2, LB, n_orbit_samples=50)
    assert coverage_nakagami(1.0, CoxParams(0, 5), G2, LB).value == 0.0


def test_hybrid_seed_reproducible():
    lb = LinkBudget(m=2)
    a = coverage_nakagami(1.0, CoxParams(10, 10), G2, lb, n_orbit_samples=100, seed=4)
    b = coverage_nakagami(1.0, CoxParams(10, 10), G2, lb, n_orbit_samples=100, seed=4)
    assert a.value == b.value


def test_curve_dispatch():
    p = CoxParams(10, 10)
    taus = db_to_linear(np.array([0.0, 5.0]))
    c = coverage_curve(taus, p, G2, LB)
    assert c.ci_low is None
    assert c.values[0] == pytest.approx(coverage_rayleigh(1.0, p, G2, LB))
    c2 = coverage_curve(taus, p, G2, LinkBudget(m=2), n_orbit_samples=100)
    assert c2.ci_low is not None and np.all(c2.ci_low <= c2.values)
    with pytest.raises(ValueError):
        coverage_curve([], p, G2, LB)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_bell_derivatives_against_mpmath(m):
    lb = LinkBudget(m=m)
    colats = np.array([0.05, 0.12, 0.2])
    los = np.array([0.02, 0.0, 0.01])
    his = np.array([0.3, 0.28, 0.2])
    mu = 25.0
    x = 3e5
    spec = QuadratureSpec(abs_tol=1e-13, rel_tol=1e-12)
    got = laplace_derivatives(x, colats, los, his, mu, G2, lb, order=m - 1, spec=spec)
    mpmath.mp.dps = 30
    rs, re_ = mpmath.mpf(G2.r_s), mpmath.mpf(G2.r_e)

    def log_laplace(xx):
        total = 0
        for c, lo, hi in zip(colats, los, his):
            def f(w):
                d2 = rs ** 2 + re_ ** 2 - 2 * rs * re_ * mpmath.cos(w) * mpmath.cos(c)
                y = xx * d2 ** (-mpmath.mpf(lb.alpha) / 2)
                return 1 - (1 + y / m) ** (-m)
            # arcs on both sides of the apex
            total -= 2 * mpmath.quad(f, [lo, hi])
        # satellites have density mu / (2 pi) per radian of orbit
        return mu / (2 * mpmath.pi) * total

    for k in range(m):
        ref = mpmath.diff(lambda xx: mpmath.exp(log_laplace(xx)), x, k)
        assert float(got[k]) == pytest.approx(float(ref), rel=1e-5)


# --- rate -------------------------------------------------------------------------

def test_integrate_rate_trivial():
    assert integrate_rate(lambda u: 0.0) == 0.0
    r = integrate_rate(lambda u: 1.0, max_bits=10.0, full_output=True)
    assert r.value == pytest.approx(10.0) and r.truncation == 10.0 and r.residual == 1.0
    r = integrate_rate(lambda u: math.exp(-u), full_output=True)
    assert r.truncation == 32.0 and r.value == pytest.approx(1 - math.exp(-32.0), abs=1e-8)


@pytest.mark.slow
def test_rate_matches_trapezoid():
    p = CoxParams(30, 30)
    res = ergodic_rate(p, G2, LB, full_output=True)
    us = np.linspace(0.0, res.truncation, 801)
    cov = np.array([coverage_rayleigh(2.0 ** u - 1, p, G2, LB) for u in us])
    trap = float(np.sum(0.5 * (cov[1:] + cov[:-1]) * np.diff(us)))
    assert res.value == pytest.approx(trap, rel=2e-4)
    assert ergodic_rate(CoxParams(0, 10), G2, LB) == 0.0
