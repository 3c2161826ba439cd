"""Moment matching of Cox parameters to a target constellation seen from one latitude.

The Cox model is matched on two local moments: the mean number of visible
co-channel satellites and the mean number of distinct orbits carrying at
least one visible satellite.  For given ``(lambda, mu)`` they are

    S = lambda mu c,      O = lambda f(mu),

with ``c`` the visibility constant and
``f(mu) = ∫_0^phi_bar cos v (1 - exp(-(mu/pi) w(v))) dv``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy.optimize import brentq

from .analytic import mean_intersecting_orbits, visibility_constant, visible_orbit_fraction
from .constellation import CoxParams
from .montecarlo import SimPlan, simulate
from .quadrature import DEFAULT_SPEC


class FitError(ValueError):
    """The target moments cannot be produced by any Cox model."""


@dataclass(frozen=True)
class LocalMoments:
    mean_visible_sats: float
    mean_visible_orbits: float
    latitude: float
    replicates: int = 0
    sats_std_error: float = 0.0
    orbits_std_error: float = 0.0

    def __post_init__(self):
        if self.mean_visible_sats < 0 or self.mean_visible_orbits < 0:
            raise ValueError("local moments must be non-negative")


def _se(total, total_sq, n):
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return math.sqrt(var / n)


def measure_local(model, latitude, replicates=10_000, seed=0, threads=1):
    """Monte Carlo means of visible satellites and of orbits with a visible satellite.

    The observer sits at ``latitude`` (radians); longitude is randomised per
    replicate for models that are not isotropic.
    """
    if replicates < 1000:
        raise ValueError("measure_local needs at least 1000 replicates")
    s = simulate(SimPlan(model, replicates=replicates, master_seed=seed,
                         observer_latitude=latitude, threads=threads))
    return LocalMoments(s.visible_sum / s.n, s.orbits_sum / s.n, float(latitude), s.n,
                        _se(s.visible_sum, s.visible_sq, s.n),
                        _se(s.orbits_sum, s.orbits_sq, s.n))


@dataclass(frozen=True)
class FitReport:
    target: LocalMoments
    params: CoxParams
    stage1: CoxParams
    residual_sats: float
    residual_orbits: float
    iterations: int
    method: str

    def to_dict(self):
        return {
            "target": asdict(self.target),
            "lambda": self.params.lam, "mu": self.params.mu,
            "stage1": {"lambda": self.stage1.lam, "mu": self.stage1.mu},
            "residuals": {"visible_sats": self.residual_sats,
                          "visible_orbits": self.residual_orbits},
            "iterations": self.iterations, "method": self.method,
        }


def model_moments(p, g, spec=DEFAULT_SPEC):
    """``(visible satellites, orbits with a visible satellite)`` of a Cox model."""
    c = visibility_constant(g, spec)
    return p.lam * p.mu * c, p.lam * visible_orbit_fraction(p.mu, g, spec)


def fit_cox(target, g, spec=DEFAULT_SPEC, *, max_iter=100, tol=1e-6, full_output=False):
    """Cox parameters reproducing ``target``'s two local moments.

    A first stage counts every orbit crossing the cap, which fixes
    ``lambda = O / sin(phi_bar)`` without reference to ``mu``.  The joint
    solution then alternates ``mu = S / (lambda c)`` and ``lambda = O / f(mu)``;
    if that has not settled within ``max_iter`` steps, ``mu`` is found by
    bracketed root finding on ``f(mu) / mu = O c / S``, which is decreasing
    in ``mu``.  Requires ``O < S``, since ``f(mu) / mu < c`` for every ``mu``.
    """
    S, O = target.mean_visible_sats, target.mean_visible_orbits
    if not (S > 0 and O > 0):
        raise FitError(f"target moments must be positive (satellites={S}, orbits={O})")
    if O >= S:
        raise FitError(
            f"visible orbits ({O:.4g}) must be fewer than visible satellites ({S:.4g}); "
            "no Cox model has at most one visible satellite per visible orbit on average")
    c = visibility_constant(g, spec)

    def f(mu):
        return visible_orbit_fraction(mu, g, spec)

    lam = O / mean_intersecting_orbits(1.0, g)
    stage1 = CoxParams(lam, S / (lam * c))
    mu = stage1.mu
    method = "fixed-point"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        lam_new = O / f(mu)
        mu_new = S / (lam_new * c)
        done = abs(mu_new - mu) <= tol * mu and abs(lam_new - lam) <= tol * lam
        lam, mu = lam_new, mu_new
        if done:
            converged = True
            break
    if not converged:
        method = "bracketed"
        goal = O * c / S

        def h(m):
            return f(m) / m - goal

        hi = max(mu, 1.0)
        while h(hi) > 0:
            hi *= 2.0
            if hi > 1e12:
                raise FitError("could not bracket mu for the target moments")
        lo = hi / 2.0
        while h(lo) < 0:
            lo /= 2.0
        mu = brentq(h, lo, hi, rtol=tol, xtol=1e-12)
        lam = S / (mu * c)
    params = CoxParams(lam, mu)
    s_fit, o_fit = model_moments(params, g, spec)
    report = FitReport(target, params, stage1, (s_fit - S) / S, (o_fit - O) / O, it, method)
    return report if full_output else params
