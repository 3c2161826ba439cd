"""Spherical and orbital geometry of a single-altitude constellation.

Conventions: lengths in km, angles in radians.  An orbit ``l(theta, phi)`` is
the great circle of radius ``r_s`` whose ascending node lies at longitude
``theta`` and whose plane is inclined by ``phi``; ``omega`` is the orbital
angle measured from the ascending node.  The typical user sits at the north
point ``(0, 0, r_e)``.

Several formulas are written in terms of the *co-latitude* of an orbit,
``colat = pi/2 - phi``, which is the angular distance from the north point
to the orbit's apex (its closest point to the user).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

EARTH_RADIUS_KM = 6400.0


class GeometryDomainError(ValueError):
    pass


@dataclass(frozen=True)
class GeometryParams:
    """Earth radius and satellite altitude, with the derived visibility constants."""

    r_e: float = EARTH_RADIUS_KM
    r_a: float = 550.0

    def __post_init__(self):
        if not (self.r_e > 0 and self.r_a > 0):
            raise GeometryDomainError(
                f"earth radius and altitude must be positive (r_e={self.r_e}, r_a={self.r_a})")

    @classmethod
    def from_orbit_radius(cls, r_s, r_e=EARTH_RADIUS_KM):
        return cls(r_e=r_e, r_a=r_s - r_e)

    @property
    def r_s(self):
        return self.r_e + self.r_a

    @property
    def d_min(self):
        return self.r_a

    @property
    def d_max(self):
        """Largest distance at which a satellite is above the horizon."""
        # (r_s - r_e)(r_s + r_e) avoids cancellation in r_s**2 - r_e**2
        return float(np.sqrt(self.r_a * (self.r_s + self.r_e)))

    @property
    def phi_bar(self):
        """Angular radius (seen from Earth's centre) of the visible cap."""
        return float(np.arccos(self.r_e / self.r_s))

    @property
    def cap_fraction(self):
        """Fraction of the orbit sphere inside the visible cap, (1 - r_e/r_s)/2."""
        return 0.5 * self.r_a / self.r_s


class Point3(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray


def cap_angle_of_distance(d, g):
    """Polar angle of the rim of the cap of points within distance ``d`` of the user.

    Equivalent to ``arccos((r_s² + r_e² - d²) / (2 r_s r_e))`` but written with a
    half-angle sine so that it stays accurate near ``d = r_s - r_e``.
    """
    d = np.asarray(d, dtype=float)
    lo, hi = g.d_min, g.d_max
    slack = 1e-9 * hi
    if np.any(d < lo - slack) or np.any(d > hi + slack):
        raise GeometryDomainError(
            f"distance must lie in [r_s - r_e, d_max] = [{lo}, {hi}] km")
    d = np.clip(d, lo, hi)
    s2 = (d - lo) * (d + lo) / (4.0 * g.r_s * g.r_e)
    xi = 2.0 * np.arcsin(np.sqrt(np.clip(s2, 0.0, 1.0)))
    return float(xi) if xi.ndim == 0 else xi


def distance_of_cap_angle(xi, g):
    """Inverse of :func:`cap_angle_of_distance` (law of cosines, half-angle form)."""
    xi = np.asarray(xi, dtype=float)
    s = np.sin(0.5 * xi)
    return np.sqrt(g.d_min ** 2 + 4.0 * g.r_s * g.r_e * s * s)


def chord_half_angle(cap, colat, gap=None):
    """Half the angle subtended by an orbit's arc inside a cap.

    ``cap`` is the cap's angular radius and ``colat`` the orbit's co-latitude.
    Computes ``arcsin(sqrt(1 - cos²(cap) / cos²(colat)))`` through the product
    form ``sin(cap + colat) sin(cap - colat)`` to avoid cancellation.  ``gap``
    may supply ``cap - colat`` exactly when the caller has it.  Orbits that
    miss the cap (``colat >= cap``) give 0.
    """
    cap = np.asarray(cap, dtype=float)
    colat = np.abs(np.asarray(colat, dtype=float))
    if gap is None:
        gap = cap - colat
    num = np.sin(cap + colat) * np.sin(np.maximum(gap, 0.0))
    ratio = np.sqrt(np.clip(num, 0.0, None)) / np.cos(colat)
    return np.arcsin(np.clip(ratio, 0.0, 1.0))


def chord_sine(cap, colat, gap=None):
    """``sin`` of :func:`chord_half_angle`, i.e. ``sqrt(1 - cos²(cap) sec²(colat))``."""
    cap = np.asarray(cap, dtype=float)
    colat = np.abs(np.asarray(colat, dtype=float))
    if gap is None:
        gap = cap - colat
    num = np.sin(cap + colat) * np.sin(np.maximum(gap, 0.0))
    return np.clip(np.sqrt(np.clip(num, 0.0, None)) / np.cos(colat), 0.0, 1.0)


def orbit_cap_half_angle(xi, phi):
    """Half-angle of the arc of orbit with inclination ``phi`` inside the cap of radius ``xi``.

    The full arc length is ``2 r_s`` times the returned value.  Orbits that do
    not meet the cap (``|phi - pi/2| >= xi``) return 0.
    """
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0) or np.any(xi > 0.5 * np.pi + 1e-15):
        raise GeometryDomainError("cap angle must lie in [0, pi/2]")
    out = chord_half_angle(xi, 0.5 * np.pi - np.asarray(phi, dtype=float))
    return float(out) if out.ndim == 0 else out


def satellite_position(theta, phi, omega, g=None, *, r_s=None):
    """Cartesian position of the satellite at orbital angle ``omega`` on ``l(theta, phi)``.

    The in-plane point ``(r_s cos omega, r_s sin omega, 0)`` is tilted by ``phi``
    about the x-axis (the line of nodes) and then turned by ``theta`` about the
    polar axis.
    """
    if r_s is None:
        r_s = g.r_s
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    omega = np.asarray(omega, dtype=float)
    c_w, s_w = np.cos(omega), np.sin(omega)
    c_t, s_t = np.cos(theta), np.sin(theta)
    s_w_cp = s_w * np.cos(phi)
    x = r_s * (c_t * c_w - s_t * s_w_cp)
    y = r_s * (s_t * c_w + c_t * s_w_cp)
    z = r_s * s_w * np.sin(phi)
    return Point3(x, y, z)


def distance_to_typical(phi, omega, g):
    """Distance from the north-point user to the satellite at ``omega`` on an orbit inclined by ``phi``.

    ``sqrt(r_s² - 2 r_s r_e sin(omega) sin(phi) + r_e²)``, rearranged as
    ``sqrt((r_s - r_e)² + 2 r_s r_e (1 - sin omega sin phi))`` for accuracy near the zenith.
    """
    phi = np.asarray(phi, dtype=float)
    omega = np.asarray(omega, dtype=float)
    c = 1.0 - np.sin(omega) * np.sin(phi)
    out = np.sqrt(g.d_min ** 2 + 2.0 * g.r_s * g.r_e * np.maximum(c, 0.0))
    return float(out) if out.ndim == 0 else out


def apex_distance(colat, omega, g):
    """Distance to the point at angle ``omega`` from the apex of an orbit with co-latitude ``colat``."""
    c = 1.0 - np.cos(omega) * np.cos(colat)
    return np.sqrt(g.d_min ** 2 + 2.0 * g.r_s * g.r_e * np.maximum(c, 0.0))


def interference_angle_bounds(phi_colat, z, g):
    """Exclusion and visibility angles, measured from the apex, on an orbit of co-latitude ``phi_colat``.

    Returns ``(omega_1, omega_2)``: points closer to the apex than ``omega_1``
    lie within distance ``z`` of the user, points beyond ``omega_2`` are below
    the horizon.  ``omega_1`` is 0 for orbits that miss the cap of radius
    ``z``; both are 0 for orbits that are never visible.
    """
    phi_colat = np.asarray(phi_colat, dtype=float)
    xi = cap_angle_of_distance(z, g)
    w2 = chord_half_angle(g.phi_bar, phi_colat)
    w1 = chord_half_angle(xi, phi_colat)
    never = np.abs(phi_colat) >= g.phi_bar
    w1 = np.where(never, 0.0, np.minimum(w1, w2))
    w2 = np.where(never, 0.0, w2)
    if w1.ndim == 0:
        return float(w1), float(w2)
    return w1, w2


def observer_position(latitude, longitude, g):
    """Point on the Earth's surface at the given latitude and longitude."""
    latitude = np.asarray(latitude, dtype=float)
    longitude = np.asarray(longitude, dtype=float)
    c = np.cos(latitude)
    return Point3(g.r_e * c * np.cos(longitude), g.r_e * c * np.sin(longitude),
                  g.r_e * np.sin(latitude))
