import math

import pytest
from hypothesis import given, settings, strategies as st

from coxsat.constellation import CoxModel, CoxParams, RegularModel
from coxsat.fitting import FitError, LocalMoments, fit_cox, measure_local, model_moments
from coxsat.geometry import GeometryParams

G = GeometryParams(6400.0, 550.0)


def test_rejects_empty_and_impossible_targets():
    with pytest.raises(FitError):
        fit_cox(LocalMoments(0.0, 0.0, 0.0), G)
    with pytest.raises(FitError):
        fit_cox(LocalMoments(5.0, 5.0, 0.0), G)
    with pytest.raises(FitError):
        fit_cox(LocalMoments(3.0, 4.0, 0.0), G)
    with pytest.raises(ValueError):
        LocalMoments(-1.0, 0.0, 0.0)


def test_measure_local_needs_replicates():
    with pytest.raises(ValueError):
        measure_local(CoxModel(CoxParams(1, 1), G), 0.0, replicates=10)


def test_single_polar_orbit_at_the_pole():
    m = measure_local(RegularModel(1, 0.5 * math.pi, 30, G), 0.5 * math.pi, replicates=2000)
    assert m.mean_visible_orbits == 1.0
    assert m.orbits_std_error == 0.0
    assert m.mean_visible_sats > 1.0


@settings(max_examples=25)
@given(st.floats(2.0, 300.0), st.floats(2.0, 300.0))
def test_exact_moments_recover_parameters(lam, mu):
    s, o = model_moments(CoxParams(lam, mu), G)
    rep = fit_cox(LocalMoments(s, o, 0.0), G, full_output=True)
    assert rep.params.lam == pytest.approx(lam, rel=1e-4)
    assert rep.params.mu == pytest.approx(mu, rel=1e-4)
    assert abs(rep.residual_sats) < 1e-6 and abs(rep.residual_orbits) < 1e-5


def test_stage_one_depends_only_on_orbits():
    a = fit_cox(LocalMoments(50.0, 10.0, 0.0), G, full_output=True)
    b = fit_cox(LocalMoments(80.0, 10.0, 0.0), G, full_output=True)
    assert a.stage1.lam == b.stage1.lam == pytest.approx(10.0 / math.sin(G.phi_bar))
    assert a.stage1.mu < b.stage1.mu


def test_more_orbits_per_satellite_means_more_planes():
    lo = fit_cox(LocalMoments(60.0, 10.0, 0.0), G)
    hi = fit_cox(LocalMoments(60.0, 20.0, 0.0), G)
    assert hi.lam > lo.lam and hi.mu < lo.mu


def test_round_trip_through_simulation():
    p = CoxParams(30.0, 40.0)
    target = measure_local(CoxModel(p, G), 0.3, replicates=20_000, seed=9)
    got = fit_cox(target, G)
    assert got.lam == pytest.approx(p.lam, rel=0.05)
    assert got.mu == pytest.approx(p.mu, rel=0.05)


def test_report_dict():
    s, o = model_moments(CoxParams(20, 20), G)
    d = fit_cox(LocalMoments(s, o, 0.1), G, full_output=True).to_dict()
    assert set(d) >= {"lambda", "mu", "stage1", "residuals", "iterations", "method", "target"}
    assert d["target"]["latitude"] == 0.1
