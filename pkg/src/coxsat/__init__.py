"""Cox point-process model of satellite constellations.

Analytic (numerical integration) and Monte Carlo evaluation of the typical
ground user's downlink: no-satellite probability, nearest-satellite distance,
SIR/SINR coverage and ergodic rate.
"""

__version__ = "0.1.0"
