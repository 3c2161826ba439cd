"""Numerical evaluation of the Cox-constellation performance formulas.

Every evaluator reduces to nested one-dimensional integrals handled by
:mod:`coxsat.quadrature`.  Orbits are parametrised by their co-latitude
(angular distance from the user's zenith to the orbit's apex); by isotropy the
orbit density in co-latitude is ``lambda * cos(v) dv`` on ``[0, pi/2]`` and
satellites are spread along each orbit with density ``mu / (2 pi)``.

Endpoint square-root singularities, which appear wherever an orbit is tangent
to a cap, are removed with quadratic substitutions that also hand the
cancellation-prone difference ``cap - colat`` to the geometry kernels exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constellation import CoxParams
from .geometry import (
    GeometryParams,
    apex_distance,
    cap_angle_of_distance,
    chord_half_angle,
    chord_sine,
    distance_of_cap_angle,
)
from .quadrature import DEFAULT_SPEC, QuadratureError, QuadratureSpec, integrate, integrate_batch
from .rng import stream
from .stats import EstimateWithCI

BOLTZMANN_DBW = -228.6


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LinkBudget:
    """Downlink parameters in linear units.

    ``p`` is the transmit-referenced power at 1 m and ``g`` the gain of the
    aligned serving link; interferers are received with unit gain.  The
    beamwidth of the transmit lobe plays no numerical role once the serving
    beam is aligned, so it is not represented.
    """

    p: float = 1000.0
    g: float = 100.0
    g_r: float = 1.0
    alpha: float = 2.0
    m: int = 1
    noise_power: float = 0.0
    with_noise: bool = False

    def __post_init__(self):
        for name in ("p", "g", "g_r", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"link budget field {name} must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("Nakagami shape m must be an integer >= 1")
        if self.noise_power < 0:
            raise ValueError("noise power must be non-negative")
        object.__setattr__(self, "m", int(self.m))

    @classmethod
    def from_db(cls, p_db=30.0, g_db=20.0, g_r_db=0.0, alpha=2.0, m=1,
                temperature_k=290.0, bandwidth_hz=30e6, with_noise=False,
                boltzmann_dbw=BOLTZMANN_DBW):
        """Build from dB inputs; powers in dBW, noise as ``k T B``."""
        noise_dbw = boltzmann_dbw + 10.0 * math.log10(temperature_k) + 10.0 * math.log10(bandwidth_hz)
        return cls(p=float(db_to_linear(p_db)), g=float(db_to_linear(g_db)),
                   g_r=float(db_to_linear(g_r_db)), alpha=alpha, m=m,
                   noise_power=float(db_to_linear(noise_dbw)), with_noise=with_noise)

    @classmethod
    def table1(cls, **overrides):
        """Default downlink: 30 dBW, 20 dB gain, 290 K over 30 MHz, free-space loss."""
        return cls.from_db(**overrides)

    @property
    def serving_gain(self):
        """Gain of the aligned serving link relative to an interferer."""
        return self.g

    @property
    def eirp_dbm(self):
        return float(linear_to_db(self.p * self.g)) + 30.0

    @property
    def noise_dbw(self):
        return float(linear_to_db(self.noise_power)) if self.noise_power > 0 else -math.inf

    def noise_scaling(self, tau):
        """Multiplicative noise penalty ``exp(-N tau / (p g))`` applied to SIR coverage."""
        return np.exp(-self.noise_power * np.asarray(tau, dtype=float) / (self.p * self.g))


@dataclass(frozen=True)
class CoverageCurve:
    """Coverage probability against a threshold grid (linear SIR)."""

    thresholds: np.ndarray
    values: np.ndarray
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("thresholds and values must be 1-D arrays of equal length")
        if np.any(np.diff(t) < 0):
            raise ValueError("thresholds must be sorted")
        if np.any(v < -1e-9) or np.any(v > 1 + 1e-9):
            raise ValueError("coverage values must lie in [0, 1]")
        if np.any(np.diff(v) > 1e-6):
            raise ValueError("coverage must be non-increasing in the threshold")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))
        for name in ("ci_low", "ci_high"):
            arr = getattr(self, name)
            if arr is not None:
                object.__setattr__(self, name, np.asarray(arr, dtype=float))

    @property
    def thresholds_db(self):
        return linear_to_db(self.thresholds)

    def at_db(self, tau_db):
        """Linear interpolation of the curve at a threshold in dB."""
        return float(np.interp(tau_db, self.thresholds_db, self.values))

    def threshold_at(self, level):
        """Threshold (dB) where the curve crosses ``level``, interpolated in dB."""
        v = self.values
        db = self.thresholds_db
        idx = np.nonzero((v[:-1] >= level) & (v[1:] <= level))[0]
        if idx.size == 0:
            raise ValueError(f"curve does not cross {level}")
        i = idx[0]
        if v[i] == v[i + 1]:
            return float(db[i])
        return float(db[i] + (v[i] - level) * (db[i + 1] - db[i]) / (v[i] - v[i + 1]))


def mean_total(p: CoxParams):
    return p.lam * p.mu


def _cap_substitution(cap):
    """Map ``t in [0, 1]`` to co-latitudes ``cap (1 - t²)`` with exact gap and Jacobian."""
    def nodes(t):
        gap = cap * t * t
        return cap - gap, gap, 2.0 * cap * t
    return nodes


def _void_exponent(cap, mu, spec):
    """``∫_0^cap cos v (1 - exp(-(mu/pi) w(cap, v))) dv`` for the cap of angular radius ``cap``.

    Equals the mean number of orbits (per unit orbit intensity) carrying at
    least one satellite inside the cap, and is the exponent of the cap's void
    probability.
    """
    if cap <= 0 or mu == 0:
        return 0.0
    nodes = _cap_substitution(cap)

    def f(t):
        v, gap, jac = nodes(t)
        w = chord_half_angle(cap, v, gap)
        return np.cos(v) * -np.expm1(-mu / math.pi * w) * jac

    return integrate(f, 0.0, 1.0, spec)


def visibility_constant(g: GeometryParams, spec=DEFAULT_SPEC):
    """``(1/pi) ∫_0^phi_bar cos v w(phi_bar, v) dv``: mean visible satellites per unit ``lambda mu``."""
    nodes = _cap_substitution(g.phi_bar)

    def f(t):
        v, gap, jac = nodes(t)
        return np.cos(v) * chord_half_angle(g.phi_bar, v, gap) * jac

    return integrate(f, 0.0, 1.0, spec) / math.pi


def mean_visible(p: CoxParams, g: GeometryParams, spec=DEFAULT_SPEC):
    """Mean number of satellites above the typical user's horizon."""
    return p.lam * p.mu * visibility_constant(g, spec)


def mean_intersecting_orbits(lam, g: GeometryParams):
    """Mean number of orbits that pass through the visible cap."""
    return lam * math.sin(g.phi_bar)


def visible_orbit_fraction(mu, g: GeometryParams, spec=DEFAULT_SPEC):
    """Mean number of orbits with a visible satellite per unit ``lambda``; increasing and concave in ``mu``."""
    return _void_exponent(g.phi_bar, mu, spec)


def mean_visible_orbits(p: CoxParams, g: GeometryParams, spec=DEFAULT_SPEC):
    """Mean number of orbits with at least one visible satellite."""
    return p.lam * visible_orbit_fraction(p.mu, g, spec)


def nosat_probability(p: CoxParams, g: GeometryParams, spec=DEFAULT_SPEC):
    """Probability that no satellite is visible."""
    return _cap_void(g.phi_bar, p, spec)


def _cap_void(cap, p, spec):
    if p.lam == 0:
        return 1.0
    return math.exp(-p.lam * _void_exponent(cap, p.mu, spec))


def nosat_asymptotic(lam, g: GeometryParams):
    """Large-``mu`` limit of :func:`nosat_probability`: ``exp(-lambda sin(phi_bar))``."""
    return math.exp(-mean_intersecting_orbits(lam, g))


def nearest_ccdf(d, p: CoxParams, g: GeometryParams, spec=DEFAULT_SPEC):
    """``P(D > d)`` for the distance ``D`` to the nearest visible satellite."""
    if d < 0:
        raise ValueError("distance must be non-negative")
    if d < g.d_min:
        return 1.0
    if d >= g.d_max:
        return nosat_probability(p, g, spec)
    return _cap_void(cap_angle_of_distance(d, g), p, spec)


# --- interference -----------------------------------------------------------

def _one_minus_laplace(y, m):
    """``1 - (1 + y/m)^(-m)``, accurate for small ``y``."""
    if m == 1:
        return y / (1.0 + y)
    return -np.expm1(-m * np.log1p(y / m))


def _orbit_terms(x, colat, lo, hi, g, alpha, m, order, spec):
    """Per-orbit log-Laplace terms of the interference on the arc ``[lo, hi]`` from the apex.

    Returns an array of shape ``(order + 1, k)``: row 0 is
    ``-∫(1 - L_H(y)) dω`` and row ``j`` is ``∫ y^j L_H^(j)(y) dω`` with
    ``y = x K^-alpha``.  The caller applies ``mu/pi``, which is the density
    ``mu/(2 pi)`` times the two mirror-image arcs on either side of the apex.
    Row ``j`` equals ``x^j`` times the ``j``-th derivative of row 0 in ``x``.
    """
    colat = np.atleast_1d(np.asarray(colat, dtype=float))
    lo = np.broadcast_to(np.asarray(lo, dtype=float), colat.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), colat.shape)
    out = np.zeros((order + 1, colat.size))
    live = hi > lo
    if x == 0 or not np.any(live):
        return out
    c = colat[live]
    rising = np.cumprod(m + np.arange(order)) if order else np.array([])

    def f(w):
        y = x * apex_distance(c[:, None], w, g) ** (-alpha)
        rows = [-_one_minus_laplace(y, m)]
        if order:
            base = (1.0 + y / m) ** (-m)
            ratio = y / (1.0 + y / m)
            for j in range(1, order + 1):
                rows.append((-1.0) ** j * rising[j - 1] / m ** j * ratio ** j * base)
        return np.stack(rows)

    out[:, live] = integrate_batch(f, lo[live], hi[live], spec)
    return out


def _bell_series(terms):
    """``exp(T_0) * Σ_{k<=K} (-1)^k / k! * B_k(T_1, ..., T_k)`` along axis 0 of ``terms``.

    ``B_k`` are complete Bell polynomials, so with ``T_j = x^j G^(j)(x)`` this
    is ``Σ_k (-x)^k / k! d^k/dx^k exp(G)(x)``.
    """
    order = terms.shape[0] - 1
    bell = [np.ones_like(terms[0])]
    for n in range(order):
        nxt = np.zeros_like(terms[0])
        for i in range(n + 1):
            nxt = nxt + math.comb(n, i) * bell[n - i] * terms[i + 1]
        bell.append(nxt)
    total = np.zeros_like(terms[0])
    for k in range(order + 1):
        total = total + (-1.0) ** k / math.factorial(k) * bell[k]
    return np.exp(terms[0]) * total


def laplace_derivatives(x, colats, los, his, mu, g, lb, order, spec=DEFAULT_SPEC):
    """``d^k/dx^k`` of the conditional interference Laplace transform for ``k <= order``.

    ``colats``/``los``/``his`` list interfering arcs.  Exposed for testing the
    Bell-polynomial assembly against finite differences; returns an array of
    length ``order + 1``.
    """
    t = _orbit_terms(x, colats, los, his, g, lb.alpha, lb.m, order, spec).sum(axis=1) * mu / math.pi
    bell = [1.0]
    for n in range(order):
        bell.append(sum(math.comb(n, i) * bell[n - i] * t[i + 1] for i in range(n + 1)))
    return np.array([math.exp(t[0]) * bell[k] / x ** k for k in range(order + 1)])


def _check_tau(tau):
    if not tau >= 0 or not math.isfinite(tau):
        raise ValueError("SIR threshold must be a finite non-negative linear value")


def _sir_coverage_rayleigh(tau, p, g, lb, spec):
    lam, mu = p.lam, p.mu
    if lam == 0 or mu == 0:
        return 0.0
    phib = g.phi_bar
    k = mu / math.pi
    inner = spec.tightened(10.0)
    leaf = spec.tightened(100.0)

    def interference(x, colat, lo, hi):
        return -_orbit_terms(x, colat, lo, hi, g, lb.alpha, 1, 0, leaf)[0]

    def at_cap(xi):
        z = float(distance_of_cap_angle(xi, g))
        x = tau * z ** lb.alpha / lb.serving_gain
        # orbits outside the exclusion cap, co-latitudes in [xi, phi_bar]
        width = phib - xi

        def far(t):
            gap = width * t * t
            nu = phib - gap
            w2 = chord_half_angle(phib, nu, gap)
            j = interference(x, nu, 0.0, w2)
            return np.cos(nu) * -np.expm1(-k * j) * (2.0 * width * t)

        a = integrate(far, 0.0, 1.0, inner) if width > 0 else 0.0
        nodes = _cap_substitution(xi)

        # orbits crossing the exclusion cap: void exponent and the serving-orbit density
        def near(t):
            nu, gap, jac = nodes(t)
            w1 = chord_half_angle(xi, nu, gap)
            w2 = chord_half_angle(phib, nu)
            e = np.exp(-k * (w1 + interference(x, nu, w1, w2)))
            return np.stack([np.cos(nu) * (1.0 - e) * jac,
                             e / chord_sine(xi, nu, gap) * jac])

        b, c = integrate(near, 0.0, 1.0, inner)
        return lam * k * math.sin(xi) * math.exp(-lam * (a + b)) * c

    def outer(xis):
        return np.array([at_cap(float(xi)) for xi in xis])

    return integrate(outer, 0.0, phib, spec)


def coverage_rayleigh(tau, p: CoxParams, g: GeometryParams, lb: LinkBudget, spec=DEFAULT_SPEC):
    """``P(SIR > tau)`` under Rayleigh fading with nearest-satellite association.

    ``tau`` is linear.  At ``tau = 0`` the result is the probability that some
    satellite is visible.
    """
    if lb.m != 1:
        raise ValueError("coverage_rayleigh requires m = 1; use coverage_nakagami for m > 1")
    _check_tau(tau)
    return _sir_coverage_rayleigh(float(tau), p, g, lb, spec)


def coverage_with_noise(tau, p: CoxParams, g: GeometryParams, lb: LinkBudget, spec=DEFAULT_SPEC):
    """SINR coverage: SIR coverage times the noise penalty ``exp(-N tau / (p g))``."""
    return float(lb.noise_scaling(tau)) * coverage_rayleigh(tau, p, g, lb, spec)


def sample_orbit_colatitudes(lam, g, n_samples, seed):
    """Co-latitudes of the orbits meeting the visible cap, for ``n_samples`` independent draws.

    Returns ``(colat, owner)`` with ``owner[i]`` the draw index of orbit ``i``.
    """
    rng = stream(seed, 0, "orbits")
    s = math.sin(g.phi_bar)
    counts = rng.poisson(lam * s, size=n_samples)
    colat = np.arcsin(rng.random(int(counts.sum())) * s)
    owner = np.repeat(np.arange(n_samples), counts)
    return colat, owner


def coverage_nakagami(tau, p: CoxParams, g: GeometryParams, lb: LinkBudget,
                      n_orbit_samples=400, seed=0, spec=DEFAULT_SPEC, *,
                      grid_tol=1e-4, max_grid=4096):
    """``P(SIR > tau)`` under Nakagami-``m`` fading, integer ``m >= 1``.

    The set of orbits crossing the visible cap is drawn ``n_orbit_samples``
    times.  Given a draw, satellites are Poisson along each orbit, so the
    nearest-satellite cap angle has the exact CDF
    ``F(xi) = 1 - exp(-(mu/pi) Σ omega_1)`` and coverage is the Stieltjes
    integral of the conditional success probability against ``dF``.  That
    probability is ``Σ_{k<m} (-x)^k/k! d^k/dx^k L(x)`` for the conditional
    interference Laplace transform ``L``; its derivatives are assembled from
    per-orbit integrals with complete Bell polynomials.

    The ``xi`` grid is shared by all draws and doubled until the mean moves by
    less than ``grid_tol``.  The estimate is the mean of the per-draw
    conditional probabilities with a normal-approximation interval.
    """
    _check_tau(tau)
    if n_orbit_samples < 100:
        raise ValueError("n_orbit_samples must be at least 100")
    n = int(n_orbit_samples)
    lam, mu, m = p.lam, p.mu, lb.m
    if lam == 0 or mu == 0:
        return EstimateWithCI(0.0, 0.0, n)
    phib = g.phi_bar
    k = mu / math.pi
    leaf = spec.tightened(100.0)
    colat, owner = sample_orbit_colatitudes(lam, g, n, seed)
    w2 = chord_half_angle(phib, colat)

    def exclusion(xi):
        return np.where(colat < xi, chord_half_angle(xi, colat), 0.0)

    def cdf(xi):
        return -np.expm1(-k * np.bincount(owner, weights=exclusion(xi), minlength=n))

    def success(xi):
        z = float(distance_of_cap_angle(xi, g))
        x = m * tau * z ** lb.alpha / lb.serving_gain
        terms = _orbit_terms(x, colat, exclusion(xi), w2, g, lb.alpha, m, m - 1, leaf) * k
        sums = np.stack([np.bincount(owner, weights=row, minlength=n) for row in terms])
        return _bell_series(sums)

    def columns(xis):
        return (np.stack([cdf(x) for x in xis], axis=1),
                np.stack([success(x) for x in xis], axis=1))

    size = 64
    F, S = columns(np.linspace(0.0, phib, size + 1))
    prev = None
    while True:
        per_draw = 0.5 * ((S[:, 1:] + S[:, :-1]) * np.diff(F, axis=1)).sum(axis=1)
        est = per_draw.mean()
        if prev is not None and abs(est - prev) <= grid_tol:
            break
        if size >= max_grid:
            raise QuadratureError(
                f"coverage grid did not settle within {max_grid} cells", estimate=est,
                error=abs(est - prev))
        mids = (np.arange(size) + 0.5) * phib / size
        Fm, Sm = columns(mids)
        F = _interleave(F, Fm)
        S = _interleave(S, Sm)
        size *= 2
        prev = est
    return EstimateWithCI.from_moments(per_draw.sum(), (per_draw ** 2).sum(), n)


def _interleave(coarse, mids):
    out = np.empty((coarse.shape[0], coarse.shape[1] + mids.shape[1]))
    out[:, 0::2] = coarse
    out[:, 1::2] = mids
    return out


def coverage_curve(thresholds, p, g, lb, spec=DEFAULT_SPEC, *, n_orbit_samples=400, seed=0):
    """Analytic coverage over a grid of linear thresholds.

    Rayleigh links use the exact evaluator (with the noise penalty when
    ``lb.with_noise``); other ``m`` use the hybrid estimator with common orbit
    draws across thresholds.
    """
    taus = np.asarray(thresholds, dtype=float)
    if taus.size == 0:
        raise ValueError("threshold grid is empty")
    if lb.m == 1:
        fn = coverage_with_noise if lb.with_noise else coverage_rayleigh
        vals = np.array([fn(t, p, g, lb, spec) for t in taus])
        return CoverageCurve(taus, vals)
    est = [coverage_nakagami(t, p, g, lb, n_orbit_samples, seed, spec) for t in taus]
    scale = lb.noise_scaling(taus) if lb.with_noise else np.ones_like(taus)
    return CoverageCurve(taus, np.array([e.value for e in est]) * scale,
                         np.array([e.ci_low for e in est]) * scale,
                         np.array([e.ci_high for e in est]) * scale)


class RateResult(NamedTuple):
    value: float
    truncation: float
    residual: float


def ergodic_rate(p: CoxParams, g: GeometryParams, lb: LinkBudget, spec=DEFAULT_SPEC,
                 *, max_bits=64.0, full_output=False):
    """Mean spectral efficiency ``∫_0^U P(SINR > 2^u - 1) du`` in bit/s/Hz.

    ``U`` is the first power of two at which coverage falls below
    ``spec.abs_tol``, capped at ``max_bits``.  The cap matters: a user whose
    only visible satellite is the serving one sees no interference, so in the
    interference-limited model coverage levels off at the probability of that
    event and the untruncated integral diverges.  The result therefore equals
    ``E[min(log2(1 + SINR), U)]``; ``full_output`` also returns ``U`` and the
    coverage left at ``U`` (the integrand where the integral was cut).
    """
    fn = coverage_with_noise if lb.with_noise else coverage_rayleigh

    def cov(u):
        return fn(2.0 ** u - 1.0, p, g, lb, spec)

    return integrate_rate(cov, spec, max_bits=max_bits, full_output=full_output)


def integrate_rate(cov, spec=DEFAULT_SPEC, *, max_bits=64.0, full_output=False):
    """``∫_0^U cov(u) du`` with ``U`` doubled from 4 until ``cov(U) < spec.abs_tol`` or ``U >= max_bits``."""
    if cov(0.0) == 0.0:
        res = RateResult(0.0, 0.0, 0.0)
        return res if full_output else 0.0
    upper = min(4.0, max_bits)
    while True:
        edge = cov(upper)
        if edge < spec.abs_tol or upper >= max_bits:
            break
        upper = min(2.0 * upper, max_bits)
    value = integrate(lambda us: np.array([cov(float(u)) for u in us]), 0.0, upper, spec)
    res = RateResult(float(value), upper, float(edge))
    return res if full_output else res.value


__all__ = [
    "LinkBudget", "CoverageCurve", "QuadratureSpec", "RateResult",
    "db_to_linear", "linear_to_db",
    "mean_total", "mean_visible", "visibility_constant", "mean_intersecting_orbits",
    "mean_visible_orbits", "visible_orbit_fraction", "nosat_probability", "nosat_asymptotic", "nearest_ccdf",
    "coverage_rayleigh", "coverage_nakagami", "coverage_with_noise", "coverage_curve",
    "laplace_derivatives", "sample_orbit_colatitudes", "ergodic_rate", "integrate_rate",
]
