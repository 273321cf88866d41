"""Acceptance criteria, one test each, printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` (or plain
``python3 tests/test_acceptance.py``).
"""
import math
import sys
import time
import warnings

import numpy as np
import pytest

from blochere import bloch, cli, ere, field, validity
from blochere.ensemble import estimate_correlations, fit_relaxation, run_ensemble
from blochere.field import MODE_SUM, DriveConfig
from blochere.spectrum import (SpanWarning, SpectrumSpec, analytic_correlation, kernel_integral,
                               kernel_K, kernel_K_limit)

SEED = 20261016


_CAPSYS = [None]


@pytest.fixture(autouse=True)
def _terminal(capsys):
    _CAPSYS[0] = capsys


def report(label, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    with _CAPSYS[0].disabled():
        print("\n" + line)
    assert ok, line


def test_1_correlation_oracle():
    t0 = time.time()
    lags = np.linspace(0.0, 3.0, 31)
    worst = {}
    for delta in (0.0, 2.0):
        spec = SpectrumSpec.lorentzian(1.0, 0.2, omega0=-delta)
        ref = analytic_correlation(spec, 0.0, lags).values
        for name, cfg, dt in (("colored_noise", DriveConfig(), 0.05),
                              ("mode_sum", DriveConfig(MODE_SUM, n_modes=4096), None)):
            est = estimate_correlations(spec, cfg, 10_000, 3.0, lags, seed=SEED, omega21=0.0,
                                        dt=dt, inversion=False)
            worst[(name, delta)] = float(np.max(np.abs(est.c_hat - ref) / est.stderr))
    ok = all(z <= 3.0 for z in worst.values())
    detail = ", ".join(f"{k[0]} delta={k[1]:g}: max|dC|/se={v:.2f}" for k, v in worst.items())
    report("1 correlation oracle (<=3 se, both backends)", ok,
           f"{detail}; {time.time() - t0:.0f}s")


def _weak_config(R):
    return SpectrumSpec.lorentzian(50.0, R)


def test_2_b_coefficient_recovery():
    t0 = time.time()
    R = 0.1
    tr = run_ensemble(_weak_config(R), DriveConfig(), 10_000, 8.0, seed=SEED, n_out=161)
    kappa, n_inf, k_err, _ = fit_relaxation(tr, t_min=3.0 / 50.0)
    dk = abs(kappa - (1 + R)) / (1 + R)
    dn = abs(n_inf + 1 / (1 + R))
    report("2 B-coefficient recovery (kappa within 5%, n_inf within 0.02)",
           dk <= 0.05 and dn <= 0.02,
           f"kappa={kappa:.4f}+-{k_err:.4f} (target 1.1, rel err {dk:.3f}); "
           f"n_inf={n_inf:.5f} (target {-1 / 1.1:.5f}); {time.time() - t0:.0f}s")


def test_3_weak_field_limit():
    R = 0.01
    tr = run_ensemble(_weak_config(R), DriveConfig(), 10_000, 8.0, seed=SEED, n_out=161)
    target = ere.first_order_inversion(ere.EREParams(1.0, R), [np.inf])[0]
    z = (tr.n_bar[-1] - target) / tr.stderr[-1]
    report("3 weak-field steady value -1+R/A (within 3 se)", abs(z) <= 3.0,
           f"n_bar(8)={tr.n_bar[-1]:.6f} se={tr.stderr[-1]:.2e} target={target:.4f} "
           f"z={z:.2f}")


def test_4_kernel_identities():
    beta = np.linspace(-10.0, 10.0, 4001)
    rel = float(np.max(np.abs(kernel_K(beta, 1.0, 50.0) / kernel_K_limit(beta, 1.0) - 1)))
    integ = kernel_integral(1.0, 50.0, 200.0)
    report("4 kernel identities (limit rel err <= 1e-3, integral = pi within 1e-2)",
           rel <= 1e-3 and abs(integ - math.pi) <= 1e-2,
           f"max rel err={rel:.2e}; integral={integ:.6f}")


SWEEP = [(g, 0.0, 2.0) for g in (100.0, 20.0, 8.0, 4.0, 2.0, 1.33)]


def test_5_validity_bound():
    t0 = time.time()
    res = validity.sweep_validity(SWEEP, n_atoms=10_000, t_end=5.0, seed=SEED, n_out=201)
    r = np.array([p.r for p in res.points])
    eps = np.array([p.eps_dev for p in res.points])
    inversions = int(np.sum(np.diff(eps) < 0))
    small = eps[r <= 0.05 + 1e-12]
    big = eps[r >= 1.0 - 1e-12]
    ok = (inversions <= 1 and small.size and big.size and small.max() <= 0.03
          and big.min() >= 3 * small.max())
    pts = ", ".join(f"r={a:.2f}:{b:.3f}" for a, b in zip(r, eps))
    report("5 validity bound (monotone<=1 inversion, eps(r<=0.05)<=0.03, eps(r>=1)>=3x)", ok,
           f"{pts}; inversions={inversions}; {time.time() - t0:.0f}s")


def _random_drive(seed):
    spec = SpectrumSpec.lorentzian(2.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SpanWarning)
        return field.synth_mode_sum(spec, 0.0, 48, (seed, 0), span_width=10)


def test_6_structural_invariants():
    trace_per_step = coh = dual = mem = 0.0
    for seed in range(5):
        p = _random_drive(SEED + seed)
        dt = bloch.max_stable_dt(1.0, p.freq_bound, p.omega_bound)
        dt = 0.01 / math.ceil(0.01 / dt)
        steps = round(10.0 / dt)
        a = bloch.integrate((-1.0, 0j), p, 10.0, dt, form=bloch.INVERSION)
        b = bloch.integrate((-1.0, 0j), p, 10.0, dt, form=bloch.POPULATION)
        trace_per_step = max(trace_per_step, b.max_trace_error / steps)
        rho22, rho11 = 0.5 * (1 + b.n), 0.5 * (1 - b.n)
        coh = max(coh, float(np.max(np.abs(b.rho21) ** 2 - rho22 * rho11)))
        dual = max(dual, float(np.max(np.abs(a.n - b.n))))
        t, n = bloch.integrate_memory_kernel(p, 5.0, 0.01)
        mem = max(mem, float(np.max(np.abs(n - a.n[np.rint(t / dt).astype(int)]))))
    ok = trace_per_step <= 1e-9 and coh <= 1e-7 and dual <= 1e-8 and mem <= 1e-6
    report("6 structural invariants", ok,
           f"trace err/step={trace_per_step:.1e}; max(|rho21|^2-rho22 rho11)={coh:.1e}; "
           f"forms max dn={dual:.1e}; memory-kernel vs Bloch={mem:.1e}")


def test_7_exact_oracles():
    p = ere.EREParams(1.0, 1.0, -1.0)
    errs = []
    for h in (1e-2, 5e-3):
        t = np.arange(0.0, 5.0, h)
        n = ere.solve_ere(p, t)
        d = (n[2:] - n[:-2]) / (2 * h)
        errs.append(float(np.max(np.abs(d + (n[1:-1] + 1) + n[1:-1]))))
    order = math.log2(errs[0] / errs[1])
    s = validity.sp_magnitudes(validity.ValidityConfig(10.0, 3.0, 0.5, p_max=8))
    steps = np.diff(np.log(s))
    loglin = float(np.max(np.abs(steps - steps[0])))
    dev = validity.closure_deviation(validity.ValidityConfig(1e3, 0.0, 1.0), t_end=10.0)
    ok = abs(order - 2) <= 0.1 and loglin <= 1e-13 and dev <= 1e-3
    report("7 exact oracles", ok,
           f"ERE finite-difference order={order:.3f}; S_p log step spread={loglin:.1e}; "
           f"closure vs ERE at gamma=1e3: {dev:.2e}")


CLI_CASES = {
    "simulate": ["--set", "ensemble.n_atoms=500", "--set", "ensemble.t_end=1",
                 "--set", "spectrum.gamma=10", "--set", "spectrum.R0=1"],
    "correlate": ["--set", "ensemble.n_atoms=500", "--set", "correlate.t_ref=1",
                  "--set", "correlate.lag_max=1", "--set", "correlate.n_lags=11",
                  "--set", "spectrum.gamma=10", "--set", "bloch.dt=0.005"],
    "ere": [],
    "validate": ["--set", "grid.gamma=50,4"],
    "sweep": ["--set", "ensemble.n_atoms=300", "--set", "grid.gamma=20,2",
              "--set", "grid.t_end=2"],
}


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_8_reproducibility(tmp_path):
    bad = []
    for cmd, extra in CLI_CASES.items():
        ref = None
        for w in (1, 4, 8):
            d = tmp_path / cmd / f"w{w}"
            assert cli.main([cmd, "--seed", str(SEED), "--workers", str(w), "--out", str(d)]
                            + extra) == 0
            got = _files(d)
            ref = got if ref is None else ref
            if got != ref:
                bad.append(f"{cmd} workers={w}")
        d = tmp_path / cmd / "rerun"
        assert cli.main([cmd, "--config", str(tmp_path / cmd / "w1" / "manifest.json"),
                         "--workers", "4", "--out", str(d)]) == 0
        if _files(d) != ref:
            bad.append(f"{cmd} rerun")
    report("8 reproducibility (manifest rerun, workers 1/4/8, byte-identical)", not bad,
           "all five subcommands identical" if not bad else "differs: " + ", ".join(bad))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
