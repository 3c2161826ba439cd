"""Command-line interface.

    coxsat nosat --config table1 --replicates 100000 --verify
    coxsat coverage --lambda 50 --mu 50 --method both --out cov.csv
    coxsat fit --config starlink-2a --compare --out fit.json
    coxsat sample --lambda 30 --mu 40 --seed 7 --out snapshot.csv

Exit codes: 0 success, 1 computation error (including failed ``--verify``
checks), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
import time
from datetime import datetime, timezone

import numpy as np
import scipy

from . import __version__
from .analytic import (
    coverage_curve,
    db_to_linear,
    ergodic_rate,
    mean_visible,
    nearest_ccdf,
    nosat_probability,
)
from .config import ConfigError, RunConfig
from .constellation import CoxModel, CoxParams, realize
from .fitting import fit_cox, measure_local
from .geometry import GeometryParams
from .montecarlo import SimPlan, run_rate, run_sinr_ccdf, simulate
from .stats import EstimateWithCI

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class VerificationError(ArithmeticError):
    pass


# --------------------------------------------------------------------------- output

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render(rows, columns, fmt):
    if fmt == "json":
        return json.dumps([{c: r.get(c) for c in columns} for r in rows], indent=2,
                          default=float) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


class Run:
    """Collects what a command produced and writes it with its manifest."""

    def __init__(self, command, args, cfg):
        self.command = command
        self.args = args
        self.cfg = cfg
        self.started = time.time()
        self.extra = {}

    def emit(self, text):
        path = self.cfg.output.path
        if path == "-":
            sys.stdout.write(text)
            return
        data = text.encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(data)
        manifest = {
            "tool": "coxsat", "version": __version__, "command": self.command,
            "argv": list(self.args.argv), "config": self.cfg.to_ini(),
            "seed": self.cfg.sim.seed, "replicates": self.cfg.sim.replicates,
            "started_utc": datetime.fromtimestamp(self.started, timezone.utc).isoformat(),
            "wall_time_s": time.time() - self.started,
            "output": {"path": path, "sha256": hashlib.sha256(data).hexdigest(),
                       "format": self.cfg.output.format},
            "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "results": self.extra,
        }
        with open(path + ".manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, default=float)
            fh.write("\n")


# --------------------------------------------------------------------------- helpers

def _plan(cfg, model, thresholds_db=(), replicates=None, latitude_deg=None, link=None):
    s = cfg.sim
    return SimPlan(model, cfg.link_budget() if link is None else link, tuple(thresholds_db),
                   s.replicates if replicates is None else replicates, s.seed,
                   math.radians(s.observer_latitude_deg if latitude_deg is None else latitude_deg),
                   s.block_size or None, s.threads, s.rate_bits)


def _require_cox(cfg, what):
    if cfg.model.kind != "cox":
        raise UsageError(f"{what} has an analytic form only for model.kind = cox")


def _agrees(analytic, est, quad_tol=1e-6):
    """Analytic value inside the 3-sigma band (or the Wilson interval for rare events)."""
    if est.std_error == 0:
        return abs(analytic - est.value) <= quad_tol
    lo = min(est.value - 3 * est.std_error, est.ci_low)
    hi = max(est.value + 3 * est.std_error, est.ci_high)
    return lo - quad_tol <= analytic <= hi + quad_tol


def _check(args, failures):
    if args.verify and failures:
        raise VerificationError("verification failed: " + "; ".join(failures))


def _grid(cfg, args):
    lams = (args.lam,) if args.lam is not None else cfg.grid.lambdas
    mus = (args.mu,) if args.mu is not None else cfg.grid.mus
    return [(float(a), float(b)) for a in lams for b in mus]


# --------------------------------------------------------------------------- commands

def cmd_nosat(args, cfg):
    run = Run("nosat", args, cfg)
    g, spec, n = cfg.geometry_params(), cfg.quadrature_spec(), cfg.sim.replicates
    rows, failures = [], []
    if cfg.model.kind == "cox":
        cases = [(lam, mu, CoxModel(CoxParams(lam, mu), g)) for lam, mu in _grid(cfg, args)]
    else:
        cases = [(None, None, cfg.build_model())]
    for lam, mu, model in cases:
        if lam is not None:
            analytic = nosat_probability(CoxParams(lam, mu), g, spec)
        elif cfg.model.kind == "binomial":
            analytic = (1.0 - g.cap_fraction) ** cfg.model.n
        else:
            analytic = None
        row = {"lambda": lam, "mu": mu, "analytic": analytic}
        if n > 0:
            s = simulate(_plan(cfg, model))
            est = EstimateWithCI.from_proportion(s.nosat, s.n)
            row.update(empirical=est.value, ci_low=est.ci_low, ci_high=est.ci_high)
            if analytic is not None and not _agrees(analytic, est):
                failures.append(f"lambda={lam} mu={mu}: analytic {analytic:.6g} vs {est.value:.6g}")
        rows.append(row)
    run.emit(render(rows, ["lambda", "mu", "analytic", "empirical", "ci_low", "ci_high"],
                    cfg.output.format))
    _check(args, failures)
    return EXIT_OK


def cmd_mean_visible(args, cfg):
    _require_cox(cfg, "mean-visible")
    run = Run("mean-visible", args, cfg)
    g, spec, n = cfg.geometry_params(), cfg.quadrature_spec(), cfg.sim.replicates
    rows, failures = [], []
    for lam, mu in _grid(cfg, args):
        analytic = mean_visible(CoxParams(lam, mu), g, spec)
        row = {"lambda": lam, "mu": mu, "analytic": analytic}
        if n > 0:
            s = simulate(_plan(cfg, CoxModel(CoxParams(lam, mu), g)))
            est = EstimateWithCI.from_moments(s.visible_sum, s.visible_sq, s.n)
            row.update(empirical=est.value, ci_low=est.ci_low, ci_high=est.ci_high)
            if not _agrees(analytic, est):
                failures.append(f"lambda={lam} mu={mu}: analytic {analytic:.6g} vs {est.value:.6g}")
        rows.append(row)
    run.emit(render(rows, ["lambda", "mu", "analytic", "empirical", "ci_low", "ci_high"],
                    cfg.output.format))
    _check(args, failures)
    return EXIT_OK


def cmd_nearest_ccdf(args, cfg):
    _require_cox(cfg, "nearest-ccdf")
    run = Run("nearest-ccdf", args, cfg)
    g, spec, n = cfg.geometry_params(), cfg.quadrature_spec(), cfg.sim.replicates
    p = cfg.cox_params(args.lam, args.mu)
    dists = cfg.grid.distances_km
    if not dists:
        raise UsageError("grid.distances_km is empty")
    rows = [{"distance_km": d, "analytic": nearest_ccdf(d, p, g, spec)} for d in dists]
    failures = []
    if n > 0:
        s = simulate(_plan(cfg, CoxModel(p, g)), dists)
        for row, k in zip(rows, s.beyond):
            est = EstimateWithCI.from_proportion(int(k), s.n)
            row.update(empirical=est.value, ci_low=est.ci_low, ci_high=est.ci_high)
            if not _agrees(row["analytic"], est):
                failures.append(f"d={row['distance_km']}: analytic {row['analytic']:.6g} vs {est.value:.6g}")
    run.emit(render(rows, ["distance_km", "analytic", "empirical", "ci_low", "ci_high"],
                    cfg.output.format))
    _check(args, failures)
    return EXIT_OK


def _analytic_curve(cfg, args, taus_db):
    model = cfg.build_model(args.lam, args.mu)
    if cfg.model.kind != "cox":
        raise UsageError("analytic coverage needs model.kind = cox; use --method mc")
    return coverage_curve(db_to_linear(np.asarray(taus_db)), model.params, model.geometry,
                          cfg.link_budget(), cfg.quadrature_spec(),
                          n_orbit_samples=cfg.sim.orbit_samples, seed=cfg.sim.seed)


def cmd_coverage(args, cfg):
    run = Run("coverage", args, cfg)
    taus_db = cfg.grid.thresholds_db
    if not taus_db:
        raise UsageError("the threshold grid is empty")
    method = args.method or ("analytic" if cfg.model.kind == "cox" else "mc")
    curves = {}
    if method in ("analytic", "both"):
        curves["analytic"] = _analytic_curve(cfg, args, taus_db)
    if method in ("mc", "both"):
        if cfg.sim.replicates < 1:
            raise UsageError("Monte Carlo coverage needs sim.replicates >= 1")
        curves["mc"] = run_sinr_ccdf(_plan(cfg, cfg.build_model(args.lam, args.mu), taus_db))
    rows = []
    for name, c in curves.items():
        for i, t in enumerate(taus_db):
            rows.append({"threshold_db": t, "value": c.values[i],
                         "ci_low": None if c.ci_low is None else c.ci_low[i],
                         "ci_high": None if c.ci_high is None else c.ci_high[i],
                         "method": name})
    failures = []
    if "analytic" in curves and "mc" in curves:
        a, m = curves["analytic"], curves["mc"]
        run.extra["sup_abs_difference"] = float(np.max(np.abs(a.values - m.values)))
        for i, t in enumerate(taus_db):
            est = EstimateWithCI.from_proportion(round(m.values[i] * cfg.sim.replicates),
                                                 cfg.sim.replicates)
            if not _agrees(a.values[i], est, quad_tol=1e-4):
                failures.append(f"tau={t} dB: analytic {a.values[i]:.4f} vs mc {m.values[i]:.4f}")
    if args.rate:
        run.extra["rate"] = _rate_rows(cfg, args, method)
    cols = ["threshold_db", "value", "ci_low", "ci_high"] + (["method"] if len(curves) > 1 else [])
    run.emit(render(rows, cols, cfg.output.format))
    if args.rate:
        for r in run.extra["rate"]:
            print(f"rate[{r['method']}] = {r['value']:.6g} bit/s/Hz", file=sys.stderr)
    _check(args, failures)
    return EXIT_OK


def _rate_rows(cfg, args, method):
    rows = []
    if method in ("analytic", "both"):
        model = cfg.build_model(args.lam, args.mu)
        if cfg.model.kind != "cox" or cfg.link.m != 1:
            raise UsageError("the analytic rate needs model.kind = cox and link.m = 1")
        r = ergodic_rate(model.params, model.geometry, cfg.link_budget(), cfg.quadrature_spec(),
                         max_bits=cfg.sim.rate_bits, full_output=True)
        rows.append({"method": "analytic", "value": r.value, "ci_low": None, "ci_high": None,
                     "truncation_bits": r.truncation})
    if method in ("mc", "both"):
        est = run_rate(_plan(cfg, cfg.build_model(args.lam, args.mu)))
        rows.append({"method": "mc", "value": est.value, "ci_low": est.ci_low,
                     "ci_high": est.ci_high, "truncation_bits": cfg.sim.rate_bits})
    return rows


def cmd_rate(args, cfg):
    run = Run("rate", args, cfg)
    method = args.method or ("analytic" if cfg.model.kind == "cox" else "mc")
    rows = _rate_rows(cfg, args, method)
    failures = []
    if len(rows) == 2:
        a, m = rows
        half = 0.5 * (m["ci_high"] - m["ci_low"])
        if abs(a["value"] - m["value"]) > 1.5 * half + 1e-6:
            failures.append(f"analytic {a['value']:.5g} vs mc {m['value']:.5g}")
    run.emit(render(rows, ["method", "value", "ci_low", "ci_high", "truncation_bits"],
                    cfg.output.format))
    _check(args, failures)
    return EXIT_OK


def cmd_simulate(args, cfg):
    run = Run("simulate", args, cfg)
    if cfg.sim.replicates < 1:
        raise UsageError("simulate needs sim.replicates >= 1")
    taus_db = cfg.grid.thresholds_db
    s = simulate(_plan(cfg, cfg.build_model(args.lam, args.mu), taus_db))
    rows = []

    def add(name, est):
        rows.append({"metric": name, "value": est.value, "std_error": est.std_error,
                     "ci_low": est.ci_low, "ci_high": est.ci_high})

    add("nosat", EstimateWithCI.from_proportion(s.nosat, s.n))
    add("visible_satellites", EstimateWithCI.from_moments(s.visible_sum, s.visible_sq, s.n))
    add("visible_orbits", EstimateWithCI.from_moments(s.orbits_sum, s.orbits_sq, s.n))
    for t, k in zip(taus_db, s.covered):
        add(f"coverage@{t:g}dB", EstimateWithCI.from_proportion(int(k), s.n))
    add("rate", EstimateWithCI.from_moments(s.rate_sum, s.rate_sq, s.n))
    run.emit(render(rows, ["metric", "value", "std_error", "ci_low", "ci_high"], cfg.output.format))
    return EXIT_OK


def cmd_fit(args, cfg):
    run = Run("fit", args, cfg)
    target_model = cfg.build_model()
    lat = math.radians(cfg.fit.latitude_deg)
    target = measure_local(target_model, lat, cfg.fit.replicates, cfg.sim.seed, cfg.sim.threads)
    alt = cfg.fit.altitude_km or cfg.geometry.r_a
    g = GeometryParams(cfg.geometry.r_e, alt)
    report = fit_cox(target, g, cfg.quadrature_spec(), full_output=True).to_dict()
    report["geometry"] = {"r_e": g.r_e, "r_a": g.r_a}
    report["latitude_deg"] = cfg.fit.latitude_deg
    if args.compare:
        taus_db = cfg.grid.thresholds_db
        if not taus_db:
            raise UsageError("the threshold grid is empty")
        fitted = CoxModel(CoxParams(report["lambda"], report["mu"]), g)
        a = run_sinr_ccdf(_plan(cfg, target_model, taus_db, latitude_deg=cfg.fit.latitude_deg))
        b = run_sinr_ccdf(_plan(cfg, fitted, taus_db, latitude_deg=cfg.fit.latitude_deg))
        report["compare"] = {"thresholds_db": list(taus_db), "target": a.values.tolist(),
                             "fitted": b.values.tolist()}
        try:
            report["compare"]["offset_db_at_0.5"] = abs(a.threshold_at(0.5) - b.threshold_at(0.5))
        except ValueError:
            report["compare"]["offset_db_at_0.5"] = None
    run.extra = report
    if cfg.output.format == "json":
        text = json.dumps(report, indent=2, default=float) + "\n"
    else:
        flat = []

        def walk(prefix, obj):
            if isinstance(obj, dict):
                for k, v in obj.items():
                    walk(f"{prefix}.{k}" if prefix else k, v)
            else:
                flat.append({"key": prefix, "value": json.dumps(obj, default=float)
                             if isinstance(obj, list) else obj})

        walk("", report)
        text = render(flat, ["key", "value"], "csv")
    run.emit(text)
    return EXIT_OK


def cmd_sample(args, cfg):
    run = Run("sample", args, cfg)
    c = realize(cfg.build_model(args.lam, args.mu), cfg.sim.seed)
    run.extra = {"orbits": c.n_orbits, "satellites": c.n_satellites}
    run.emit(c.to_csv())
    return EXIT_OK


COMMANDS = {
    "nosat": (cmd_nosat, "no-satellite probability over a (lambda, mu) grid"),
    "mean-visible": (cmd_mean_visible, "mean number of visible satellites"),
    "nearest-ccdf": (cmd_nearest_ccdf, "CCDF of the nearest-satellite distance"),
    "coverage": (cmd_coverage, "SIR/SINR coverage curve"),
    "rate": (cmd_rate, "ergodic spectral efficiency"),
    "simulate": (cmd_simulate, "Monte Carlo summary of every metric"),
    "fit": (cmd_fit, "fit Cox parameters to a target constellation"),
    "sample": (cmd_sample, "export one constellation snapshot as CSV"),
}


# --------------------------------------------------------------------------- parsing

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file or bundled profile name (table1, starlink-2a)")
    common.add_argument("--seed", type=int)
    common.add_argument("--replicates", type=int)
    common.add_argument("--out", help="output path ('-' for stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--verify", action="store_true",
                        help="fail (exit 1) when analytic and Monte Carlo values disagree")
    common.add_argument("--threads", type=int)
    common.add_argument("--model", choices=("cox", "binomial", "regular", "walker", "shells"))
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--mu", type=float)
    common.add_argument("--n", type=int, help="satellite count of the binomial model")
    common.add_argument("--altitude", type=float, help="satellite altitude [km]")
    common.add_argument("--m", type=int, help="Nakagami shape")
    common.add_argument("--with-noise", action="store_true", default=None)
    common.add_argument("--thresholds", help="comma-separated SIR thresholds [dB]")
    common.add_argument("--latitude", type=float, help="observer latitude [deg]")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any configuration value (repeatable)")

    parser = argparse.ArgumentParser(prog="coxsat", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"coxsat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=fn)
        if name in ("coverage", "rate"):
            p.add_argument("--method", choices=("analytic", "mc", "both"))
        if name == "coverage":
            p.add_argument("--rate", action="store_true", help="also compute the ergodic rate")
        if name == "fit":
            p.add_argument("--compare", action="store_true",
                           help="simulate coverage of the target and the fitted model")
    return parser


def resolve_config(args):
    """Defaults, then the config file, then command-line flags."""
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    updates = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        updates[k.strip()] = v
    flag_map = {
        "seed": "sim.seed", "replicates": "sim.replicates", "out": "output.path",
        "format": "output.format", "threads": "sim.threads", "model": "model.kind",
        "n": "model.n", "altitude": "geometry.r_a", "m": "link.m",
        "with_noise": "link.with_noise", "thresholds": "grid.thresholds_db",
        "latitude": "sim.observer_latitude_deg",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr)
        if value is not None:
            updates[key] = value if isinstance(value, str) else str(value)
    if args.lam is not None:
        updates["model.lam"] = str(args.lam)
    if args.mu is not None:
        updates["model.mu"] = str(args.mu)
    if "latitude" in vars(args) and args.latitude is not None and args.command == "fit":
        updates["fit.latitude_deg"] = str(args.latitude)
    return cfg.with_overrides(updates) if updates else cfg


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    args.argv = argv
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"coxsat: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"coxsat: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, ValueError, OSError) as exc:
        print(f"coxsat: error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
