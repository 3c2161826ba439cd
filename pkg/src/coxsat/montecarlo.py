"""Monte Carlo estimates of the typical user's downlink metrics.

Replicates are simulated in fixed-size blocks.  Each block draws its
constellations, observer longitudes and fading from its own counter-based
streams keyed by ``(master_seed, block, tag)``, so the outcome depends only on
the plan and never on how many worker threads run the blocks.  Per-block
results are sufficient statistics (counts and sums) reduced in block order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import CoverageCurve, LinkBudget, db_to_linear
from .constellation import BinomialModel, CoxModel, RegularModel, ShellsModel, visible_mask
from .geometry import observer_position
from .rng import stream
from .stats import EstimateWithCI

__all__ = [
    "EstimateWithCI", "SimPlan", "SimStats", "simulate", "run_nosat", "run_nearest_ccdf",
    "run_sinr_ccdf", "run_rate", "nearest_samples", "expected_satellites",
]

_SATS_PER_BLOCK = 1_000_000


def expected_satellites(model):
    if isinstance(model, CoxModel):
        return model.params.lam * model.params.mu
    if isinstance(model, BinomialModel):
        return model.n
    if isinstance(model, RegularModel):
        return model.n_orbits * model.sats_per_orbit
    if isinstance(model, ShellsModel):
        return sum(s.planes * s.co_channel for s in model.shells)
    raise TypeError(f"unsupported model {type(model).__name__}")


@dataclass(frozen=True)
class SimPlan:
    """What to simulate.

    ``thresholds_db`` are SIR/SINR thresholds in dB.  ``observer_latitude`` is
    in radians; the default is the north point.  Models that are only
    longitudinally invariant get a fresh uniform observer longitude per
    replicate.  ``rate_bits`` caps the per-replicate spectral efficiency (a
    user with no interferer has infinite SIR).
    """

    model: object
    link: LinkBudget = field(default_factory=LinkBudget)
    thresholds_db: tuple = ()
    replicates: int = 10_000
    master_seed: int = 0
    observer_latitude: float = 0.5 * math.pi
    block_size: int | None = None
    threads: int = 1
    rate_bits: float = 64.0

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        t = tuple(float(x) for x in self.thresholds_db)
        if any(b < a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be sorted")
        object.__setattr__(self, "thresholds_db", t)
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.block_size is not None and self.block_size < 1:
            raise ValueError("block_size must be positive")

    @property
    def geometry(self):
        return self.model.geometry

    @property
    def resolved_block_size(self):
        if self.block_size is not None:
            return int(self.block_size)
        per_rep = max(expected_satellites(self.model), 1.0)
        return int(max(1, min(self.replicates, _SATS_PER_BLOCK // per_rep)))

    def describe(self):
        return {
            "model": self.model.kind, "model_params": self.model.describe(),
            "r_e": self.geometry.r_e, "r_a": self.geometry.r_a,
            "link": self.link.__dict__.copy(), "thresholds_db": list(self.thresholds_db),
            "replicates": self.replicates, "master_seed": self.master_seed,
            "observer_latitude": self.observer_latitude,
            "block_size": self.resolved_block_size, "rate_bits": self.rate_bits,
        }


@dataclass
class SimStats:
    """Sufficient statistics accumulated over replicates."""

    n: int = 0
    nosat: int = 0
    covered: np.ndarray | None = None
    beyond: np.ndarray | None = None
    rate_sum: float = 0.0
    rate_sq: float = 0.0
    visible_sum: float = 0.0
    visible_sq: float = 0.0
    orbits_sum: float = 0.0
    orbits_sq: float = 0.0
    nearest: list | None = None

    def merge(self, other):
        self.n += other.n
        self.nosat += other.nosat
        self.covered = other.covered if self.covered is None else self.covered + other.covered
        self.beyond = other.beyond if self.beyond is None else self.beyond + other.beyond
        for name in ("rate_sum", "rate_sq", "visible_sum", "visible_sq", "orbits_sum", "orbits_sq"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        if other.nearest is not None:
            self.nearest = (self.nearest or []) + other.nearest
        return self


def _block(plan, block, n_rep, taus, distances, keep_nearest):
    model = plan.model
    g = plan.geometry
    lb = plan.link
    batch = model.draw(stream(plan.master_seed, block, "constellation"), n_rep)
    if model.isotropic:
        lon = np.zeros(n_rep)
    else:
        lon = stream(plan.master_seed, block, "observer").uniform(0.0, 2.0 * math.pi, n_rep)
    ux, uy, uz = np.broadcast_arrays(*observer_position(plan.observer_latitude, lon, g))
    rep = batch.rep
    # fading for every satellite, drawn before any geometry-dependent selection
    fade = stream(plan.master_seed, block, "fading").gamma(lb.m, 1.0 / lb.m, rep.size)

    vis = visible_mask(batch.x, batch.y, batch.z, ux[rep], uy[rep], uz[rep], g.r_e)
    idx = np.flatnonzero(vis)
    rv = rep[idx]
    d = np.sqrt((batch.x[idx] - ux[rv]) ** 2 + (batch.y[idx] - uy[rv]) ** 2
                + (batch.z[idx] - uz[rv]) ** 2)
    order = np.lexsort((d, rv))
    rv, d, idx = rv[order], d[order], idx[order]
    first = np.ones(rv.size, dtype=bool)
    first[1:] = rv[1:] != rv[:-1]

    n_vis = np.bincount(rv, minlength=n_rep).astype(float)
    orbit_keys = np.unique(batch.orbit[idx])
    n_orb = np.bincount(batch.orbit_rep[orbit_keys], minlength=n_rep).astype(float)
    has = n_vis > 0

    nearest = np.full(n_rep, np.inf)
    nearest[rv[first]] = d[first]

    # powers in km units, normalised by p * 1000**-alpha
    power = fade[idx] * d ** (-lb.alpha)
    signal = np.zeros(n_rep)
    signal[rv[first]] = lb.serving_gain * power[first]
    interference = np.bincount(rv, weights=np.where(first, 0.0, power), minlength=n_rep)
    noise = lb.noise_power * 1000.0 ** lb.alpha / lb.p if lb.with_noise else 0.0
    denom = interference + noise
    # a lone visible satellite without noise has infinite SIR: always covered
    sinr = np.where(has, np.inf, 0.0)
    finite = has & (denom > 0)
    sinr[finite] = signal[finite] / denom[finite]

    covered = np.array([np.count_nonzero(has & (sinr > t)) for t in taus], dtype=np.int64)
    beyond = np.array([np.count_nonzero(nearest > dd) for dd in distances], dtype=np.int64)
    rate = np.where(has, np.minimum(np.log2(1.0 + sinr), plan.rate_bits), 0.0)
    return SimStats(
        n=n_rep, nosat=int(np.count_nonzero(~has)), covered=covered, beyond=beyond,
        rate_sum=float(rate.sum()), rate_sq=float((rate * rate).sum()),
        visible_sum=float(n_vis.sum()), visible_sq=float((n_vis * n_vis).sum()),
        orbits_sum=float(n_orb.sum()), orbits_sq=float((n_orb * n_orb).sum()),
        nearest=[nearest] if keep_nearest else None)


def simulate(plan, distances=(), *, keep_nearest=False):
    """Run every block of ``plan`` and return merged :class:`SimStats`."""
    taus = db_to_linear(np.asarray(plan.thresholds_db, dtype=float))
    distances = np.asarray(distances, dtype=float)
    size = plan.resolved_block_size
    blocks = [(b, min(size, plan.replicates - b * size))
              for b in range(math.ceil(plan.replicates / size))]

    def work(item):
        return _block(plan, item[0], item[1], taus, distances, keep_nearest)

    if plan.threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=plan.threads) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(item) for item in blocks]
    total = SimStats()
    for r in results:
        total.merge(r)
    if keep_nearest:
        total.nearest = np.concatenate(total.nearest)
    return total


def run_nosat(plan):
    """Fraction of replicates with no satellite above the horizon."""
    s = simulate(plan)
    return EstimateWithCI.from_proportion(s.nosat, s.n)


def run_nearest_ccdf(plan, distances):
    """Empirical ``P(D > d)`` for each distance in km (``D`` infinite when nothing is visible)."""
    s = simulate(plan, distances)
    return [EstimateWithCI.from_proportion(int(k), s.n) for k in s.beyond]


def run_sinr_ccdf(plan):
    """Empirical coverage curve over ``plan.thresholds_db`` with confidence bands."""
    if not plan.thresholds_db:
        raise ValueError("at least one threshold is required")
    s = simulate(plan)
    est = [EstimateWithCI.from_proportion(int(k), s.n) for k in s.covered]
    return CoverageCurve(db_to_linear(np.asarray(plan.thresholds_db)),
                         np.array([e.value for e in est]),
                         np.array([e.ci_low for e in est]),
                         np.array([e.ci_high for e in est]))


def run_rate(plan):
    """Mean of ``min(log2(1 + SINR), rate_bits)``; replicates with no satellite contribute 0."""
    s = simulate(plan)
    return EstimateWithCI.from_moments(s.rate_sum, s.rate_sq, s.n)


def nearest_samples(plan):
    """Nearest-satellite distance per replicate (``inf`` when nothing is visible)."""
    return simulate(plan, keep_nearest=True).nearest
