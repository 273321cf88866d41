"""Ensembles of independently driven atoms.

Atoms are processed in fixed-size blocks. Each block draws all of its
randomness from per-atom substreams, so the per-atom results, and the
reductions over them, do not depend on the number of workers.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import curve_fit

from .bloch import INVERSION, InvariantError, StepSizeError, max_stable_dt, run_kernel
from .field import COLORED_NOISE, MODE_SUM, DriveBlock, DriveConfig, check_colored_noise_dt
from .kernels import mode_sum_fill
from .spectrum import analytic_correlation, default_span

BLOCK_SIZE = 256
N_BATCHES = 10


class EnsembleError(RuntimeError):
    pass


class InsufficientRealizations(EnsembleError):
    pass


class GridMismatch(ValueError):
    pass


def fmt(x):
    """Shortest round-trip decimal representation."""
    return repr(float(x))


@dataclass
class EnsembleTrace:
    time_grid: np.ndarray
    n_bar: np.ndarray
    stderr: np.ndarray
    n_atoms: int
    seed: int
    dt: float = float("nan")
    atoms: Optional[np.ndarray] = field(default=None, repr=False)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "n_bar", "stderr"])
            for row in zip(self.time_grid, self.n_bar, self.stderr):
                w.writerow([fmt(x) for x in row])


@dataclass
class CorrelationEstimate:
    lags: np.ndarray
    c_hat: np.ndarray
    cn_hat: Optional[np.ndarray]
    stderr: np.ndarray
    cn_stderr: Optional[np.ndarray]
    t_ref: float
    n_atoms: int
    trace: Optional[EnsembleTrace] = None

    def to_csv(self, path):
        cn = self.cn_hat if self.cn_hat is not None else np.full(self.lags.size, np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lag", "ReC", "ImC", "ReCn", "ImCn", "stderr"])
            for s, c, x, e in zip(self.lags, self.c_hat, cn, self.stderr):
                w.writerow([fmt(s), fmt(c.real), fmt(c.imag), fmt(np.real(x)), fmt(np.imag(x)),
                            fmt(e)])


def _dt_limit(spec, omega21, cfg, A):
    if spec.peak_pump_rate == 0:
        return max_stable_dt(A)
    if cfg.backend == COLORED_NOISE:
        c0 = float(analytic_correlation(spec, omega21, [0.0]).values[0].real)
        return max_stable_dt(A, abs(spec.detuning(omega21)), 5.0 * math.sqrt(c0), spec.gamma)
    lo, hi = default_span(spec, omega21, cfg.span_width)
    probe = DriveBlock(spec, omega21, cfg, 0, [0], 1.0)
    return max_stable_dt(A, max(abs(lo), abs(hi)), float(probe.amps.sum()))


def auto_dt(spec, omega21, cfg, t_end, A=1.0):
    """Largest step obeying the stability rule that divides ``t_end`` evenly."""
    steps = max(1, math.ceil(t_end / _dt_limit(spec, omega21, cfg, A) - 1e-9))
    return t_end / steps


def _resolve_dt(spec, omega21, cfg, t_end, A, dt):
    if dt is None:
        return auto_dt(spec, omega21, cfg, t_end, A)
    limit = _dt_limit(spec, omega21, cfg, A)
    if not 0 < dt <= limit * (1 + 1e-9):
        raise StepSizeError(f"dt={dt} violates the stability rule (limit {limit:.6g})")
    return dt


def _blocks(n_atoms, size):
    return [range(a, min(a + size, n_atoms)) for a in range(0, n_atoms, size)]


def _map_blocks(fn, blocks, workers):
    if workers <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def _simulate(spec, omega21, cfg, n_atoms, dt, n_steps, rec_idx, initial, seed, A, form,
              tolerance, workers, block_size):
    n0, r0 = initial

    def one(block):
        drive = DriveBlock(spec, omega21, cfg, seed, block, dt)

        def chunks(k0, k1):
            return drive.chunk(k0, k1), drive.held

        B = len(block)
        out = run_kernel(np.full(B, float(n0)), np.full(B, complex(r0)), chunks, n_steps, dt,
                         A, rec_idx, form)
        bad = np.nonzero(out[3] > tolerance)[0]
        if bad.size:
            i = int(bad[0])
            raise InvariantError(f"atom {block[i]}: Bloch invariant violated by "
                                 f"{out[3][i]:.3g} > {tolerance:g}")
        return out

    parts = _map_blocks(one, _blocks(n_atoms, block_size), workers)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(5))


def _mean_stderr(x):
    n = x.shape[0]
    mean = x.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean, dtype=float)
    return mean, x.std(axis=0, ddof=1) / math.sqrt(n)


def run_ensemble(spec, drive_config, n_atoms, t_end, initial=(-1.0, 0j), seed=0, omega21=None,
                 dt=None, n_out=101, A=1.0, form=INVERSION, tolerance=1e-7, workers=1,
                 block_size=BLOCK_SIZE, keep_atoms=False):
    """Mean and standard error of the inversion over ``n_atoms`` realisations.

    ``initial`` is ``(n0, rho21_0)`` for every atom. Outputs are on ``n_out``
    equally spaced grid points in [0, t_end].
    """
    if n_atoms < 2:
        raise ValueError("n_atoms must be >= 2")
    cfg = drive_config or DriveConfig()
    omega21 = spec.omega0 if omega21 is None else omega21
    dt = _resolve_dt(spec, omega21, cfg, t_end, A, dt)
    n_steps = int(round(t_end / dt))
    rec_idx = np.unique(np.rint(np.linspace(0, n_steps, n_out)).astype(np.int64))
    out_n, _, _, _, _ = _simulate(spec, omega21, cfg, n_atoms, dt, n_steps, rec_idx, initial,
                                  seed, A, form, tolerance, workers, block_size)
    mean, se = _mean_stderr(out_n)
    return EnsembleTrace(rec_idx * dt, mean, se, n_atoms, seed, dt,
                         out_n if keep_atoms else None)


def _batch_stderr(samples, n_batches=N_BATCHES):
    n = samples.shape[0]
    if n < 2 * n_batches:
        _, se = _mean_stderr(samples.real)
        _, se_i = _mean_stderr(samples.imag) if np.iscomplexobj(samples) else (0, 0)
        return np.sqrt(se ** 2 + np.square(se_i))
    edges = np.linspace(0, n, n_batches + 1).astype(int)
    means = np.stack([samples[edges[i]:edges[i + 1]].mean(axis=0) for i in range(n_batches)])
    var = means.real.var(axis=0, ddof=1)
    if np.iscomplexobj(means):
        var = var + means.imag.var(axis=0, ddof=1)
    return np.sqrt(var / n_batches)


def _field_samples(spec, omega21, cfg, n_atoms, times, seed, dt, workers, block_size):
    """Omega for every atom at ``times`` (on the ``dt`` grid for colored noise)."""
    def one(block):
        drive = DriveBlock(spec, omega21, cfg, seed, block, dt if dt else 1.0)
        if drive.kind == MODE_SUM:
            out = np.empty((len(block), times.size), dtype=complex)
            mode_sum_fill(drive.amps, drive.freqs, drive.phases, times, out)
            return out
        idx = np.rint(times / dt).astype(np.int64)
        n_steps = int(idx.max())
        out = np.empty((len(block), times.size), dtype=complex)
        for k0 in range(0, n_steps + 1, 4096):
            k1 = min(k0 + 4096, n_steps)
            arr = drive.chunk(k0, k1)
            sel = (idx >= k0) & (idx <= k1)
            out[:, sel] = arr[:, idx[sel] - k0]
            if k1 == n_steps:
                break
        return out

    return np.concatenate(_map_blocks(one, _blocks(n_atoms, block_size), workers))


def estimate_correlations(spec, drive_config, n_atoms, t_ref, lags, seed=0, omega21=None,
                          dt=None, inversion=True, initial=(-1.0, 0j), A=1.0, form=INVERSION,
                          tolerance=1e-7, workers=1, block_size=BLOCK_SIZE, stderr_cap=None):
    """Monte Carlo estimates of C(s) and C_n(s) at ``t = t_ref``.

    ``C(s) = <Omega*(t) Omega(t - s)>`` and
    ``C_n(s) = <Omega*(t) Omega(t - s) n(t - s)>``. Standard errors come from
    10 batch means over atoms (real and imaginary variances combined).
    With ``inversion=False`` only the field is simulated and ``cn_hat`` is
    None; mode-sum fields are then evaluated at the exact lag times.
    """
    cfg = drive_config or DriveConfig()
    omega21 = spec.omega0 if omega21 is None else omega21
    lags = np.asarray(lags, dtype=float)
    if np.any(lags < 0) or np.any(lags > t_ref + 1e-12):
        raise ValueError("lags must lie in [0, t_ref]")
    need_grid = inversion or cfg.backend == COLORED_NOISE
    if need_grid:
        if inversion:
            dt = _resolve_dt(spec, omega21, cfg, t_ref, A, dt)
        elif dt is None:
            dt = auto_dt(spec, omega21, cfg, t_ref, A)
        else:
            # the field alone only needs the colored-noise step bound
            check_colored_noise_dt(spec.gamma, dt)
        n_steps = int(round(t_ref / dt))
        idx = np.rint((t_ref - lags) / dt).astype(np.int64)
        if np.any(np.abs(idx * dt - (t_ref - lags)) > 1e-6 * dt):
            raise GridMismatch(f"lags must be multiples of dt={dt}")
        if abs(n_steps * dt - t_ref) > 1e-9 * max(1.0, t_ref):
            raise GridMismatch(f"t_ref={t_ref} is not a multiple of dt={dt}")
    trace = None
    if inversion:
        rec_idx = np.unique(np.concatenate([idx, [n_steps]]))
        out_n, _, out_o, _, _ = _simulate(spec, omega21, cfg, n_atoms, dt, n_steps, rec_idx,
                                          initial, seed, A, form, tolerance, workers,
                                          block_size)
        pos = np.searchsorted(rec_idx, idx)
        om_ref = out_o[:, -1]
        om_tau = out_o[:, pos]
        n_tau = out_n[:, pos]
        mean_n, se_n = _mean_stderr(out_n)
        trace = EnsembleTrace(rec_idx * dt, mean_n, se_n, n_atoms, seed, dt)
    else:
        times = np.concatenate([[t_ref], t_ref - lags])
        if need_grid:
            times = np.rint(times / dt) * dt
        om = _field_samples(spec, omega21, cfg, n_atoms, times, seed, dt if need_grid else None,
                            workers, block_size)
        om_ref = om[:, 0]
        om_tau = om[:, 1:]
    prod = np.conj(om_ref)[:, None] * om_tau
    c_hat = prod.mean(axis=0)
    se = _batch_stderr(prod)
    cn_hat = cn_se = None
    if inversion:
        prod_n = prod * n_tau
        cn_hat = prod_n.mean(axis=0)
        cn_se = _batch_stderr(prod_n)
    if stderr_cap is not None and np.max(se) > stderr_cap:
        raise InsufficientRealizations(f"max stderr {np.max(se):.3g} exceeds cap {stderr_cap:g};"
                                       " increase n_atoms")
    return CorrelationEstimate(lags, c_hat, cn_hat, se, cn_se, float(t_ref), n_atoms, trace)


@dataclass
class DecorrelationProfile:
    lags: np.ndarray
    residual: np.ndarray

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def decorrelation_residual(est, trace=None):
    """``(C_n(s) - C(s) n_bar(t_ref - s)) / C(0)`` for every estimated lag."""
    if est.cn_hat is None:
        raise ValueError("estimate has no C_n; rerun with inversion=True")
    trace = est.trace if trace is None else trace
    if trace is None:
        raise GridMismatch("no ensemble trace to read n_bar from")
    tau = est.t_ref - est.lags
    tg = np.asarray(trace.time_grid)
    pos = np.searchsorted(tg, tau - 1e-9)
    pos = np.clip(pos, 0, tg.size - 1)
    if np.any(np.abs(tg[pos] - tau) > 1e-9 * max(1.0, est.t_ref)):
        raise GridMismatch("trace time grid does not contain every t_ref - lag")
    nbar = np.asarray(trace.n_bar)[pos]
    zero = np.nonzero(est.lags == 0)[0]
    c0 = float(est.c_hat[zero[0]].real) if zero.size else float(np.abs(est.c_hat).max())
    if c0 == 0:
        return DecorrelationProfile(est.lags, np.zeros(est.lags.size, dtype=complex))
    return DecorrelationProfile(est.lags, (est.cn_hat - est.c_hat * nbar) / c0)


def reconstructed_rate(est, A=1.0):
    """Right-hand side of the ensemble inversion equation built from measured C_n.

    ``-A (n_bar + 1) - 4 Re int_0^{t_ref} C_n(s) e^{-A s / 2} ds``; the lags
    must cover [0, t_ref].
    """
    if est.cn_hat is None or est.trace is None:
        raise ValueError("estimate has no C_n")
    order = np.argsort(est.lags)
    s = est.lags[order]
    if s[0] > 1e-12 or s[-1] < est.t_ref - 1e-9:
        raise GridMismatch("lags must cover [0, t_ref]")
    integral = np.trapezoid(est.cn_hat[order] * np.exp(-0.5 * A * s), s)
    n_ref = float(est.trace.n_bar[-1])
    return -A * (n_ref + 1.0) - 4.0 * float(np.real(integral))


def fit_relaxation(trace, n0=None, t_min=0.0):
    """Fit ``n_inf + (n0 - n_inf) exp(-kappa t)`` to an ensemble trace.

    ``n0`` is fixed when given. Returns ``(kappa, n_inf, kappa_err, n_inf_err)``.
    """
    t = np.asarray(trace.time_grid)
    y = np.asarray(trace.n_bar)
    sig = np.maximum(np.asarray(trace.stderr), 1e-12)
    keep = t >= t_min
    t, y, sig = t[keep], y[keep], sig[keep]
    if n0 is None:
        def model(tt, kappa, n_inf, start):
            return n_inf + (start - n_inf) * np.exp(-kappa * tt)
        p0 = (1.0, y[-1], y[0])
    else:
        def model(tt, kappa, n_inf):
            return n_inf + (n0 - n_inf) * np.exp(-kappa * tt)
        p0 = (1.0, y[-1])
    popt, pcov = curve_fit(model, t, y, p0=p0, sigma=sig, absolute_sigma=True, maxfev=20000)
    err = np.sqrt(np.diag(pcov))
    return float(popt[0]), float(popt[1]), float(err[0]), float(err[1])
