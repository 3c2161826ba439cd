"""Run configuration: INI files with one section per concern.

Precedence is command-line flags over file values over built-in defaults.
Link-budget inputs are given in dB and converted to linear units once, by
:meth:`RunConfig.link_budget`.  Floats are written with ``repr`` so a
parse/serialise/parse cycle is the identity.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .analytic import LinkBudget
from .constellation import (
    BinomialModel,
    CoxModel,
    CoxParams,
    RegularModel,
    ShellSpec,
    ShellsModel,
)
from .geometry import GeometryParams
from .quadrature import QuadratureSpec


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (a usage error)."""


MODEL_KINDS = ("cox", "binomial", "regular", "walker", "shells")


@dataclass(frozen=True)
class GeometrySection:
    r_e: float = 6400.0
    r_a: float = 550.0


@dataclass(frozen=True)
class ModelSection:
    kind: str = "cox"
    lam: float = 30.0
    mu: float = 30.0
    n: int = 300
    n_orbits: int = 30
    inclination_deg: float = 43.0
    sats_per_orbit: int = 30
    shells: str = ""


@dataclass(frozen=True)
class LinkSection:
    p_db: float = 30.0
    g_db: float = 20.0
    g_r_db: float = 0.0
    alpha: float = 2.0
    m: int = 1
    temperature_k: float = 290.0
    bandwidth_hz: float = 30e6
    boltzmann_dbw: float = -228.6
    with_noise: bool = False


@dataclass(frozen=True)
class SimSection:
    replicates: int = 10_000
    seed: int = 0
    observer_latitude_deg: float = 90.0
    threads: int = 1
    block_size: int = 0
    rate_bits: float = 64.0
    orbit_samples: int = 400


@dataclass(frozen=True)
class QuadratureSection:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-6
    max_depth: int = 30


@dataclass(frozen=True)
class GridSection:
    thresholds_db: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    lambdas: tuple = (30.0,)
    mus: tuple = (30.0,)
    distances_km: tuple = (600.0, 800.0, 1000.0, 1500.0, 2000.0, 2500.0)


@dataclass(frozen=True)
class FitSection:
    latitude_deg: float = 30.0
    replicates: int = 10_000
    altitude_km: float = 0.0


@dataclass(frozen=True)
class OutputSection:
    path: str = "-"
    format: str = "csv"


SECTIONS = {
    "geometry": GeometrySection, "model": ModelSection, "link": LinkSection,
    "sim": SimSection, "quadrature": QuadratureSection, "grid": GridSection,
    "fit": FitSection, "output": OutputSection,
}


def _parse_value(kind, text, where):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {getattr(kind, '__name__', kind)}") from None


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _field_types(cls):
    hints = {"float": float, "int": int, "bool": bool, "str": str, "tuple": tuple}
    return {f.name: hints[f.type] if isinstance(f.type, str) else f.type for f in fields(cls)}


def parse_shells(text):
    """``planes:sats:altitude_km:inclination_deg[:co_channel]`` entries separated by ``;``."""
    out = []
    for item in (s.strip() for s in text.split(";")):
        if not item:
            continue
        parts = item.split(":")
        if len(parts) not in (4, 5):
            raise ConfigError(f"shell entry {item!r} needs 4 or 5 ':'-separated fields")
        try:
            planes, sats = int(parts[0]), int(parts[1])
            alt, inc = float(parts[2]), math.radians(float(parts[3]))
            co = int(parts[4]) if len(parts) == 5 else None
            out.append(ShellSpec(planes, sats, alt, inc, co))
        except ValueError as exc:
            raise ConfigError(f"shell entry {item!r}: {exc}") from None
    if not out:
        raise ConfigError("model.shells is empty")
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometrySection = field(default_factory=GeometrySection)
    model: ModelSection = field(default_factory=ModelSection)
    link: LinkSection = field(default_factory=LinkSection)
    sim: SimSection = field(default_factory=SimSection)
    quadrature: QuadratureSection = field(default_factory=QuadratureSection)
    grid: GridSection = field(default_factory=GridSection)
    fit: FitSection = field(default_factory=FitSection)
    output: OutputSection = field(default_factory=OutputSection)

    # --- I/O --------------------------------------------------------------

    @classmethod
    def from_ini(cls, text, base=None):
        """Parse INI text on top of ``base`` (defaults when omitted)."""
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed configuration: {exc}") from None
        cfg = cls() if base is None else base
        updates = {}
        for section in cp.sections():
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            updates.update({f"{section}.{k}": v for k, v in cp[section].items()})
        return cfg.with_overrides(updates)

    @classmethod
    def load(cls, path_or_profile, base=None):
        """Read a file path or the name of a bundled profile (``table1``, ``starlink-2a``)."""
        p = Path(path_or_profile)
        if p.is_file():
            text = p.read_text(encoding="utf-8")
        else:
            res = resources.files("coxsat").joinpath("data", f"{path_or_profile}.ini")
            if not res.is_file():
                raise ConfigError(f"no such config file or bundled profile: {path_or_profile}")
            text = res.read_text(encoding="utf-8")
        return cls.from_ini(text, base)

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        for name in SECTIONS:
            sec = getattr(self, name)
            cp[name] = {f.name: _format_value(getattr(sec, f.name)) for f in fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def with_overrides(self, updates):
        """Apply ``{"section.key": value}`` updates; string values are parsed by field type."""
        sections = {name: {} for name in SECTIONS}
        for dotted, value in updates.items():
            if "." not in dotted:
                raise ConfigError(f"override {dotted!r} must look like section.key")
            sec, key = dotted.split(".", 1)
            if sec not in SECTIONS:
                raise ConfigError(f"unknown section {sec!r}")
            types = _field_types(SECTIONS[sec])
            if key not in types:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
            if isinstance(value, str):
                value = _parse_value(types[key], value, dotted)
            elif types[key] is tuple:
                value = tuple(float(v) for v in value)
            elif types[key] is float:
                value = float(value)
            sections[sec][key] = value
        changed = {name: dataclasses.replace(getattr(self, name), **vals)
                   for name, vals in sections.items() if vals}
        cfg = dataclasses.replace(self, **changed)
        cfg.validate()
        return cfg

    # --- validation and construction ---------------------------------------

    def validate(self):
        g = self.geometry
        if not (g.r_e > 0 and g.r_a > 0):
            raise ConfigError("geometry.r_e and geometry.r_a must be positive")
        m = self.model
        if m.kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {', '.join(MODEL_KINDS)}")
        if m.lam < 0 or m.mu < 0 or m.n < 0:
            raise ConfigError("model.lam, model.mu and model.n must be non-negative")
        if m.kind in ("regular", "walker") and (m.n_orbits < 1 or m.sats_per_orbit < 1):
            raise ConfigError("regular models need n_orbits >= 1 and sats_per_orbit >= 1")
        if m.kind == "shells":
            parse_shells(m.shells)
        lk = self.link
        if lk.alpha <= 0 or lk.m < 1 or lk.temperature_k <= 0 or lk.bandwidth_hz <= 0:
            raise ConfigError("link.alpha, temperature_k, bandwidth_hz must be positive and link.m >= 1")
        s = self.sim
        if s.replicates < 0 or s.threads < 1 or s.block_size < 0 or s.orbit_samples < 100:
            raise ConfigError("sim: replicates >= 0, threads >= 1, block_size >= 0, orbit_samples >= 100")
        if not 0 <= s.seed < 2 ** 64:
            raise ConfigError("sim.seed must be an unsigned 64-bit integer")
        if not -90.0 <= s.observer_latitude_deg <= 90.0 or not -90.0 <= self.fit.latitude_deg <= 90.0:
            raise ConfigError("latitudes must lie in [-90, 90] degrees")
        q = self.quadrature
        if q.abs_tol <= 0 or q.rel_tol <= 0 or q.max_depth < 1:
            raise ConfigError("quadrature tolerances must be positive and max_depth >= 1")
        gr = self.grid
        if list(gr.thresholds_db) != sorted(gr.thresholds_db):
            raise ConfigError("grid.thresholds_db must be sorted")
        if any(x < 0 for x in gr.lambdas + gr.mus + gr.distances_km):
            raise ConfigError("grid values must be non-negative")
        if self.output.format not in ("csv", "json"):
            raise ConfigError("output.format must be csv or json")
        if self.fit.replicates < 1000:
            raise ConfigError("fit.replicates must be at least 1000")

    def geometry_params(self):
        return GeometryParams(self.geometry.r_e, self.geometry.r_a)

    def quadrature_spec(self):
        q = self.quadrature
        return QuadratureSpec(q.abs_tol, q.rel_tol, q.max_depth)

    def link_budget(self, with_noise=None):
        lk = self.link
        return LinkBudget.from_db(
            p_db=lk.p_db, g_db=lk.g_db, g_r_db=lk.g_r_db, alpha=lk.alpha, m=lk.m,
            temperature_k=lk.temperature_k, bandwidth_hz=lk.bandwidth_hz,
            with_noise=lk.with_noise if with_noise is None else with_noise,
            boltzmann_dbw=lk.boltzmann_dbw)

    def cox_params(self, lam=None, mu=None):
        return CoxParams(self.model.lam if lam is None else lam,
                         self.model.mu if mu is None else mu)

    def build_model(self, lam=None, mu=None):
        m = self.model
        g = self.geometry_params()
        if m.kind == "cox":
            return CoxModel(self.cox_params(lam, mu), g)
        if m.kind == "binomial":
            return BinomialModel(m.n, g)
        if m.kind == "regular":
            return RegularModel(m.n_orbits, math.radians(m.inclination_deg), m.sats_per_orbit, g)
        if m.kind == "walker":
            return RegularModel(m.n_orbits, 0.5 * math.pi, m.sats_per_orbit, g)
        return ShellsModel(parse_shells(m.shells), g.r_e)
