"""Point patterns of satellites: the Cox orbit/satellite process and its baselines.

Every generator exists in two shapes sharing one code path: ``draw`` produces a
flat batch of satellites for many independent replicates (used by the Monte
Carlo engine), and the ``sample_*`` / ``build_*`` functions wrap a one-replicate
draw into an immutable :class:`Constellation`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import GeometryParams, observer_position, satellite_position
from .rng import stream

TWO_PI = 2.0 * math.pi


class MixedAltitudeError(ValueError):
    """An analytic evaluator was handed a constellation with several orbit radii."""


@dataclass(frozen=True)
class CoxParams:
    lam: float
    mu: float

    def __post_init__(self):
        if not (self.lam >= 0 and self.mu >= 0):
            raise ValueError(f"Cox parameters must be non-negative, got lam={self.lam}, mu={self.mu}")

    @property
    def mean_total(self):
        return self.lam * self.mu


@dataclass(frozen=True)
class Orbit:
    theta: float
    phi: float
    omegas: tuple
    altitude: float | None = None


@dataclass(frozen=True)
class ShellSpec:
    planes: int
    sats_per_plane: int
    altitude: float
    inclination: float
    co_channel_per_plane: int | None = None

    def __post_init__(self):
        if self.planes < 1 or self.sats_per_plane < 1:
            raise ValueError("a shell needs at least one plane and one satellite per plane")
        if self.co_channel_per_plane is not None and not (
                1 <= self.co_channel_per_plane <= self.sats_per_plane):
            raise ValueError("co_channel_per_plane must lie in [1, sats_per_plane]")

    @property
    def co_channel(self):
        return self.sats_per_plane if self.co_channel_per_plane is None else self.co_channel_per_plane


class SatBatch(NamedTuple):
    """Satellites of many replicates, flattened.

    ``rep`` gives each satellite's replicate, ``orbit`` a batch-wide orbit id,
    and ``r_s`` its orbit radius (scalar when the model has one altitude).
    Orbit-level arrays are indexed by the batch-wide orbit id.
    """

    n_rep: int
    rep: np.ndarray
    orbit: np.ndarray
    omega: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    r_s: object
    orbit_rep: np.ndarray
    orbit_theta: np.ndarray
    orbit_phi: np.ndarray
    orbit_radius: np.ndarray


def _batch(n_rep, orbit_rep, theta, phi, radius, sats_per_orbit, omega):
    orbit = np.repeat(np.arange(theta.size), sats_per_orbit)
    r_sat = radius[orbit]
    pos = satellite_position(theta[orbit], phi[orbit], omega, r_s=r_sat)
    r_s = float(radius[0]) if radius.size and np.all(radius == radius[0]) else r_sat
    return SatBatch(n_rep, orbit_rep[orbit], orbit, omega, pos.x, pos.y, pos.z, r_s,
                    orbit_rep, theta, phi, radius)


def canonical_orbit(raan, inclination, omega):
    """Map ascending nodes in ``[0, 2pi)`` to the undirected ``(theta, phi)`` in ``[0, pi)²``.

    ``l(theta + pi, phi)`` and ``l(theta, pi - phi)`` are the same circle with
    ``omega`` mapped to ``pi - omega``; ``l(theta, pi)`` is ``l(theta, 0)`` with
    ``omega`` mapped to ``-omega``.  ``omega`` has one row per node and is
    returned remapped into ``[0, 2pi)``.
    """
    raan = np.mod(raan, TWO_PI)
    omega = np.asarray(omega, dtype=float)
    flip = raan >= math.pi
    theta = np.where(flip, raan - math.pi, raan)
    phi = np.where(flip, math.pi - inclination, inclination)
    omega = np.where(flip[:, None], math.pi - omega, omega)
    polar = phi >= math.pi
    phi = np.where(polar, 0.0, phi)
    omega = np.where(polar[:, None], -omega, omega)
    return theta, phi, np.mod(omega, TWO_PI)


# --------------------------------------------------------------------------- models

@dataclass(frozen=True)
class CoxModel:
    params: CoxParams
    geometry: GeometryParams = field(default_factory=GeometryParams)
    kind = "cox"
    isotropic = True

    def draw(self, rng, n_rep):
        lam, mu = self.params.lam, self.params.mu
        n_orbits = rng.poisson(lam, n_rep)
        k = int(n_orbits.sum())
        theta = rng.uniform(0.0, math.pi, k)
        # inverse of the inclination CDF (1 - cos x)/2
        phi = np.arccos(1.0 - 2.0 * rng.random(k))
        per_orbit = rng.poisson(mu, k)
        omega = rng.uniform(0.0, TWO_PI, int(per_orbit.sum()))
        radius = np.full(k, self.geometry.r_s)
        return _batch(n_rep, np.repeat(np.arange(n_rep), n_orbits), theta, phi, radius,
                      per_orbit, omega)

    def describe(self):
        return {"lambda": self.params.lam, "mu": self.params.mu}


@dataclass(frozen=True)
class BinomialModel:
    n: int
    geometry: GeometryParams = field(default_factory=GeometryParams)
    kind = "binomial"
    isotropic = True

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("binomial satellite count must be non-negative")

    def draw(self, rng, n_rep):
        total = self.n * n_rep
        v = rng.uniform(-1.0, 1.0, total)
        big_theta = rng.uniform(0.0, TWO_PI, total)
        rho = np.sqrt(1.0 - v * v)
        theta, phi, omega = orbit_angles_of_direction(rho * np.cos(big_theta),
                                                      rho * np.sin(big_theta), v)
        radius = np.full(total, self.geometry.r_s)
        orbit_rep = np.repeat(np.arange(n_rep), self.n)
        return _batch(n_rep, orbit_rep, theta, phi, radius, np.ones(total, dtype=int), omega)

    def describe(self):
        return {"n": self.n}


def orbit_angles_of_direction(ux, uy, uz):
    """A degenerate orbit ``(theta, phi, omega)`` passing through the unit direction ``u``.

    Uses ``omega = pi/2`` in the northern hemisphere and ``3pi/2`` in the southern
    one, where ``sin(phi) = |u_z|``.
    """
    ux, uy, uz = (np.asarray(a, dtype=float) for a in (ux, uy, uz))
    south = uz < 0
    sgn = np.where(south, -1.0, 1.0)
    # omega = pi/2: (-sinθ cosφ, cosθ cosφ, sinφ); omega = 3pi/2 negates all three
    px, py = sgn * ux, sgn * uy
    phi = np.arcsin(np.clip(np.abs(uz), 0.0, 1.0))
    theta = np.arctan2(-px, py)
    # fold into [0, pi): theta -> theta ± pi pairs with phi -> pi - phi
    fold = (theta < 0) | (theta >= math.pi)
    theta = np.where(theta < 0, theta + math.pi, np.where(fold, theta - math.pi, theta))
    phi = np.mod(np.where(fold, math.pi - phi, phi), math.pi)
    omega = np.where(south, 1.5 * math.pi, 0.5 * math.pi)
    return theta, phi, omega


@dataclass(frozen=True)
class RegularModel:
    """``n_orbits`` evenly spaced planes at one inclination with evenly spaced satellites.

    ``raan_span`` is the longitude range the nodes are spread over: ``pi``
    reproduces the direct orbit representation (nodes ``(i-1) pi/N + U``),
    ``2pi`` gives physical Walker-delta planes, which are then folded into the
    undirected ``[0, pi)²`` parametrisation.
    """

    n_orbits: int
    inclination: float
    sats_per_orbit: int
    geometry: GeometryParams = field(default_factory=GeometryParams)
    raan_span: float = math.pi
    kind = "regular"
    isotropic = False

    def __post_init__(self):
        if self.n_orbits < 1 or self.sats_per_orbit < 1:
            raise ValueError("regular constellation needs n_orbits >= 1 and sats_per_orbit >= 1")

    def _draw_planes(self, rng, n_rep, keep=None):
        n, s = self.n_orbits, self.sats_per_orbit
        spacing = self.raan_span / n
        shift = rng.uniform(0.0, spacing, n_rep)
        raan = (np.arange(n)[None, :] * spacing + shift[:, None]).ravel()
        phase = rng.uniform(0.0, TWO_PI / s, n_rep * n)
        slots = np.arange(s) if keep is None else np.asarray(keep)
        omega = (slots[None, :] * (TWO_PI / s) + phase[:, None])
        theta, phi, omega = canonical_orbit(raan, self.inclination, omega)
        omega = omega.ravel()
        orbit_rep = np.repeat(np.arange(n_rep), n)
        radius = np.full(theta.size, self.geometry.r_s)
        return orbit_rep, theta, phi, radius, np.full(theta.size, slots.size), omega

    def draw(self, rng, n_rep):
        return _batch(n_rep, *self._draw_planes(rng, n_rep))

    def describe(self):
        return {"n_orbits": self.n_orbits, "inclination": self.inclination,
                "sats_per_orbit": self.sats_per_orbit, "raan_span": self.raan_span}


def decimation_slots(sats_per_plane, co_channel):
    """Indices of the co-channel satellites on a plane: a regular stride."""
    return (np.arange(co_channel) * sats_per_plane) // co_channel


@dataclass(frozen=True)
class ShellsModel:
    """Union of regular shells, possibly at several altitudes.

    Planes of each shell are spread over the full node circle, and only the
    co-channel satellites of each plane are kept.
    """

    shells: tuple
    r_e: float = 6400.0
    kind = "shells"
    isotropic = False

    @property
    def geometry(self):
        return GeometryParams(self.r_e, self.shells[0].altitude)

    @property
    def mixed_altitude(self):
        return len({s.altitude for s in self.shells}) > 1

    def draw(self, rng, n_rep):
        parts = []
        for spec in self.shells:
            reg = RegularModel(spec.planes, spec.inclination, spec.sats_per_plane,
                               GeometryParams(self.r_e, spec.altitude), raan_span=TWO_PI)
            keep = decimation_slots(spec.sats_per_plane, spec.co_channel)
            parts.append(reg._draw_planes(rng, n_rep, keep))
        orbit_rep, theta, phi, radius, counts, omega = (
            np.concatenate([p[k] for p in parts]) for k in range(6))
        # regroup orbits (and their satellites) by replicate
        order = np.argsort(orbit_rep, kind="stable")
        new_id = np.empty_like(order)
        new_id[order] = np.arange(order.size)
        sat_order = np.argsort(new_id[np.repeat(np.arange(order.size), counts)], kind="stable")
        return _batch(n_rep, orbit_rep[order], theta[order], phi[order], radius[order],
                      counts[order], omega[sat_order])

    def describe(self):
        return {"shells": [s.__dict__.copy() for s in self.shells], "r_e": self.r_e,
                "mixed_altitude": self.mixed_altitude}


# --------------------------------------------------------------------------- snapshots

class VisibleSatellite(NamedTuple):
    distance: float
    orbit: int
    omega: float


@dataclass(frozen=True, eq=False)
class Constellation:
    geometry: GeometryParams
    orbit_theta: np.ndarray
    orbit_phi: np.ndarray
    orbit_radius: np.ndarray
    sat_orbit: np.ndarray
    sat_omega: np.ndarray
    provenance: str
    params: dict

    def __post_init__(self):
        for name in ("orbit_theta", "orbit_phi", "orbit_radius", "sat_orbit", "sat_omega"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_batch(cls, batch, geometry, provenance, params):
        return cls(geometry, batch.orbit_theta.copy(), batch.orbit_phi.copy(),
                   batch.orbit_radius.copy(), batch.orbit.copy(), batch.omega.copy(),
                   provenance, dict(params))

    @property
    def n_orbits(self):
        return int(self.orbit_theta.size)

    @property
    def n_satellites(self):
        return int(self.sat_omega.size)

    @property
    def mixed_altitude(self):
        return bool(self.orbit_radius.size and np.ptp(self.orbit_radius) > 0)

    @property
    def orbits(self):
        out = []
        for i in range(self.n_orbits):
            om = self.sat_omega[self.sat_orbit == i]
            alt = float(self.orbit_radius[i] - self.geometry.r_e)
            out.append(Orbit(float(self.orbit_theta[i]), float(self.orbit_phi[i]),
                             tuple(float(w) for w in om), alt))
        return tuple(out)

    def require_single_altitude(self):
        if self.mixed_altitude:
            raise MixedAltitudeError(
                "analytic evaluators assume one orbit radius; this constellation mixes altitudes")
        return self.geometry

    def positions(self):
        o = self.sat_orbit
        return satellite_position(self.orbit_theta[o], self.orbit_phi[o], self.sat_omega,
                                  r_s=self.orbit_radius[o])

    def identical(self, other):
        """Bit-for-bit equality of the realised pattern."""
        return (self.provenance == other.provenance and self.geometry == other.geometry
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("orbit_theta", "orbit_phi", "orbit_radius",
                                  "sat_orbit", "sat_omega")))

    def to_csv(self, fh=None):
        """Snapshot export; returns the text when ``fh`` is None."""
        sink = io.StringIO() if fh is None else fh
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["orbit_id", "theta_rad", "phi_rad", "omega_rad", "x_km", "y_km", "z_km"])
        pos = self.positions()
        o = self.sat_orbit
        for k in range(self.n_satellites):
            w.writerow([int(o[k]), repr(float(self.orbit_theta[o[k]])),
                        repr(float(self.orbit_phi[o[k]])), repr(float(self.sat_omega[k])),
                        repr(float(pos.x[k])), repr(float(pos.y[k])), repr(float(pos.z[k]))])
        return sink.getvalue() if fh is None else None


def realize(model, seed, provenance=None):
    """One replicate of ``model`` as a :class:`Constellation`, from stream ``(seed, 0)``."""
    batch = model.draw(stream(seed, 0, "constellation"), 1)
    return Constellation.from_batch(batch, model.geometry, provenance or model.kind,
                                    model.describe())


def sample_cox(p, g, seed):
    return realize(CoxModel(p, g), seed)


def sample_binomial(n, g, seed):
    return realize(BinomialModel(n, g), seed)


def build_regular(n_orbits, inclination, sats_per_orbit, seed, g=None, raan_span=math.pi):
    g = GeometryParams() if g is None else g
    return realize(RegularModel(n_orbits, inclination, sats_per_orbit, g, raan_span), seed)


def build_walker(n_orbits, sats_per_orbit, seed, g=None):
    """Simple Walker star: ``n_orbits`` polar planes."""
    g = GeometryParams() if g is None else g
    return realize(RegularModel(n_orbits, 0.5 * math.pi, sats_per_orbit, g), seed, "walker")


def build_shells(specs, seed, r_e=6400.0):
    return realize(ShellsModel(tuple(specs), r_e), seed)


STARLINK_2A = (
    ShellSpec(28, 120, 525.0, math.radians(43.0), 30),
    ShellSpec(28, 120, 530.0, math.radians(53.0), 30),
    ShellSpec(28, 120, 535.0, math.radians(33.0), 30),
)


# --------------------------------------------------------------------------- queries

def visible_mask(x, y, z, ux, uy, uz, r_e):
    """A satellite is above the user's horizon iff ``<u, X> >= r_e²``, whatever its radius."""
    return ux * x + uy * y + uz * z >= r_e * r_e


def visible_satellites(c, observer_latitude, observer_longitude=0.0):
    """Satellites above the horizon of a ground observer, nearest first.

    Isotropic models are usually queried at the north point
    (``observer_latitude = pi/2``); for regular and shell models the caller
    picks the longitude, which the Monte Carlo engine randomises.
    """
    if c.n_satellites == 0:
        return []
    g = c.geometry
    u = observer_position(observer_latitude, observer_longitude, g)
    pos = c.positions()
    vis = visible_mask(pos.x, pos.y, pos.z, u.x, u.y, u.z, g.r_e)
    idx = np.flatnonzero(vis)
    d = np.sqrt((pos.x[idx] - u.x) ** 2 + (pos.y[idx] - u.y) ** 2 + (pos.z[idx] - u.z) ** 2)
    order = np.argsort(d, kind="stable")
    return [VisibleSatellite(float(d[k]), int(c.sat_orbit[idx[k]]), float(c.sat_omega[idx[k]]))
            for k in order]


def nearest_distance(c, observer_latitude, observer_longitude=0.0):
    """Distance to the nearest visible satellite, or None when nothing is above the horizon."""
    vis = visible_satellites(c, observer_latitude, observer_longitude)
    return vis[0].distance if vis else None
