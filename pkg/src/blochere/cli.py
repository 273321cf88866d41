"""Command-line front end: ``blochere {simulate,correlate,ere,validate,sweep}``."""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys

import numpy as np

from . import __version__, ere, validity
from .config import SUBCOMMANDS, ConfigError, parse_config
from .ensemble import estimate_correlations, fit_relaxation, fmt, decorrelation_residual, run_ensemble
from .field import DriveConfig
from .spectrum import LORENTZIAN, SpectrumSpec, analytic_correlation, load_table

SCHEMA_VERSION = 1

COLUMNS = {
    "simulate": "trace.csv: t, n_bar, stderr (ensemble mean inversion and its standard error)",
    "correlate": ("correlations.csv: lag, ReC, ImC, ReCn, ImCn, stderr "
                  "(C(s) = <Omega*(t) Omega(t-s)>, C_n adds n(t-s); stderr from 10 batch means)"),
    "ere": ("ere.csv: t, n (closed-form rate-equation trace). ere.json reports B in SI units "
            "m^3 J^-1 s^-2, acting on spectral energy density per unit angular frequency "
            "(J s m^-3), not per unit ordinary frequency"),
    "validate": ("validate.csv: gamma, delta, R0, R, r, flag, flatness, flatness_flag, "
                 "eps_closure, kappa_closure, kappa_series, S_0..S_pmax "
                 "(deterministic closure-level diagnostics)"),
    "sweep": "sweep.csv: gamma, delta, R0, r, eps_dev, stderr, flatness_flag (Monte Carlo)",
}


def build_spectrum(cfg):
    if cfg["field.backend"] == "off":
        return SpectrumSpec.lorentzian(cfg["spectrum.gamma"], 0.0, cfg["spectrum.omega0"],
                                       cfg["spectrum.b_coef"])
    if cfg["spectrum.shape"] == LORENTZIAN:
        return SpectrumSpec.lorentzian(cfg["spectrum.gamma"], cfg["spectrum.R0"],
                                       cfg["spectrum.omega0"], cfg["spectrum.b_coef"])
    return load_table(cfg["spectrum.table"], cfg["spectrum.b_coef"])


def build_drive(cfg):
    backend = cfg["field.backend"]
    return DriveConfig(backend="colored_noise" if backend == "off" else backend,
                       n_modes=cfg["field.n_modes"], geometry=cfg["field.geometry"],
                       span_width=cfg["field.span_width"], jitter=cfg["field.jitter"],
                       random_amplitudes=cfg["field.random_amplitudes"])


def _dt(cfg):
    return cfg["bloch.dt"] if cfg["bloch.dt"] > 0 else None


def _clean(obj):
    """JSON-safe copy: tuples to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(out, cfg):
    doc = {"schema_version": SCHEMA_VERSION, "package_version": __version__}
    doc.update(cfg.to_manifest())
    write_json(os.path.join(out, "manifest.json"), doc)


def run_simulate(cfg, out):
    spec = build_spectrum(cfg)
    omega21 = cfg["spectrum.omega21"]
    trace = run_ensemble(spec, build_drive(cfg), cfg["ensemble.n_atoms"], cfg["ensemble.t_end"],
                         initial=(cfg["bloch.n0"], 0j), seed=cfg["run.seed"], omega21=omega21,
                         dt=_dt(cfg), n_out=cfg["ensemble.n_out"], A=cfg["bloch.A"],
                         form=cfg["bloch.form"], tolerance=cfg["bloch.tolerance"],
                         workers=cfg.workers)
    trace.to_csv(os.path.join(out, "trace.csv"))
    R = spec.pump_rate(omega21)
    A = cfg["bloch.A"]
    summary = {"schema_version": SCHEMA_VERSION, "dt": trace.dt, "pump_rate": R,
               "n_bar_final": trace.n_bar[-1], "stderr_final": trace.stderr[-1],
               "ere_n_inf": -A / (A + R), "ere_rate": A + R, "fit": None}
    if R > 0:
        try:
            kappa, n_inf, k_err, n_err = fit_relaxation(trace, t_min=3.0 / spec.gamma)
            summary["fit"] = {"kappa": kappa, "n_inf": n_inf, "kappa_err": k_err,
                              "n_inf_err": n_err, "t_min": 3.0 / spec.gamma}
        except (RuntimeError, ValueError) as exc:
            summary["fit"] = {"error": str(exc)}
    write_json(os.path.join(out, "summary.json"), summary)


def run_correlate(cfg, out):
    spec = build_spectrum(cfg)
    omega21 = cfg["spectrum.omega21"]
    lags = np.linspace(0.0, cfg["correlate.lag_max"], cfg["correlate.n_lags"])
    est = estimate_correlations(spec, build_drive(cfg), cfg["ensemble.n_atoms"],
                                cfg["correlate.t_ref"], lags, seed=cfg["run.seed"],
                                omega21=omega21, dt=_dt(cfg),
                                inversion=cfg["correlate.inversion"],
                                initial=(cfg["bloch.n0"], 0j), A=cfg["bloch.A"],
                                form=cfg["bloch.form"], tolerance=cfg["bloch.tolerance"],
                                workers=cfg.workers)
    est.to_csv(os.path.join(out, "correlations.csv"))
    summary = {"schema_version": SCHEMA_VERSION, "t_ref": est.t_ref, "n_atoms": est.n_atoms}
    if spec.shape == LORENTZIAN and spec.peak_pump_rate > 0:
        ref = analytic_correlation(spec, omega21, lags).values
        z = np.abs(est.c_hat - ref) / np.maximum(est.stderr, 1e-300)
        summary["max_z_vs_analytic"] = float(np.max(z))
    if est.cn_hat is not None:
        summary["max_decorrelation_residual"] = decorrelation_residual(est).max_abs
    write_json(os.path.join(out, "summary.json"), summary)


def run_ere(cfg, out):
    params = ere.EREParams(cfg["ere.A"], cfg["ere.R"], cfg["ere.n0"])
    t = np.linspace(0.0, cfg["ere.t_end"], cfg["ere.n_out"])
    n = ere.solve_ere(params, t)
    with open(os.path.join(out, "ere.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "n"])
        for row in zip(t, n):
            w.writerow([fmt(x) for x in row])
    si = ere.SIConstants(mu=cfg["ere.mu"], omega21=cfg["ere.omega21_si"])
    B = ere.b_coefficient(si)
    doc = {"schema_version": SCHEMA_VERSION, "n_inf": params.n_inf, "rate": params.rate,
           "weak_field_steady": -1.0 + params.R / params.A,
           "B_SI": B, "B_units": "m^3 J^-1 s^-2 (per unit angular frequency)",
           "A_implied_SI": ere.a_from_b(si, B)}
    write_json(os.path.join(out, "ere.json"), doc)
    print(json.dumps(_clean(doc), indent=2, sort_keys=True))


def _grid(cfg):
    return list(itertools.product(cfg["grid.gamma"], cfg["grid.delta"], cfg["grid.R0"]))


def run_validate(cfg, out):
    A, p_max, t_end = cfg["bloch.A"], cfg["grid.p_max"], cfg["grid.t_end"]
    header = ["gamma", "delta", "R0", "R", "r", "flag", "flatness", "flatness_flag",
              "eps_closure", "kappa_closure", "kappa_series"] + [f"S_{p}" for p in range(p_max + 1)]
    rows, points = [], []
    for g, d, r0 in _grid(cfg):
        vc = validity.ValidityConfig(g, d, r0, p_max=p_max, A=A)
        r = validity.bound_ratio(vc)
        flat = validity.flatness(vc)
        point = {"gamma": g, "delta": d, "R0": r0, "R": vc.R, "r": r,
                 "flag": validity.ratio_flag(r), "flatness": flat,
                 "flatness_flag": flat > validity.FLATNESS_LIMIT,
                 "eps_closure": validity.closure_deviation(vc, t_end),
                 "kappa_closure": validity.memory_decay_rate(vc),
                 "kappa_series": validity.series_decay_rate(vc),
                 "S": list(validity.sp_magnitudes(vc))}
        points.append(point)
        rows.append([fmt(g), fmt(d), fmt(r0), fmt(vc.R), fmt(r), point["flag"], fmt(flat),
                     str(point["flatness_flag"]).lower(), fmt(point["eps_closure"]),
                     fmt(point["kappa_closure"]), fmt(point["kappa_series"])]
                    + [fmt(s) for s in point["S"]])
    with open(os.path.join(out, "validate.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    write_json(os.path.join(out, "validate.json"),
               {"schema_version": SCHEMA_VERSION, "t_end": t_end, "points": points})


def run_sweep(cfg, out):
    res = validity.sweep_validity(_grid(cfg), n_atoms=cfg["ensemble.n_atoms"],
                                  t_end=cfg["grid.t_end"], seed=cfg["run.seed"], A=cfg["bloch.A"],
                                  drive_config=build_drive(cfg), n_out=cfg["ensemble.n_out"],
                                  workers=cfg.workers, dt=_dt(cfg))
    res.to_csv(os.path.join(out, "sweep.csv"))
    res.to_json(os.path.join(out, "sweep.json"))
    return 1 if any(p.error for p in res.points) else 0


RUNNERS = {"simulate": run_simulate, "correlate": run_correlate, "ere": run_ere,
           "validate": run_validate, "sweep": run_sweep}


def run(cfg, out):
    """Execute one subcommand; returns the process exit status."""
    os.makedirs(out, exist_ok=True)
    write_manifest(out, cfg)
    status = RUNNERS[cfg.subcommand](cfg, out)
    return int(status or 0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blochere",
        description="Bloch-equation ensembles under broadband light versus the rate equation.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=COLUMNS[name].split(":")[0],
                           description=f"Writes {COLUMNS[name]}, plus manifest.json.",
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", metavar="PATH",
                       help="key = value file, or a manifest.json from an earlier run")
        p.add_argument("--seed", type=int, help="master seed (run.seed)")
        p.add_argument("--workers", type=int,
                       help="worker threads; falls back to BLOCH_ERE_WORKERS, then 1")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                       dest="overrides", help="override one config key (repeatable)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.subcommand, args.config, args.overrides, args.seed, args.workers)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"blochere.config: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg, args.out)
    except Exception as exc:
        module = type(exc).__module__
        print(f"{module}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
