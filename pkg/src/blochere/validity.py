"""Where does the rate-equation picture hold for a Lorentzian spectrum?

Closure-level dynamics (decorrelated ensemble, Lorentzian C(s))::

    dn/dt = -A (n + 1) - gamma R0 Re int_0^t n(tau) exp(-z (t - tau)) dtau,
    z = A/2 + gamma + i delta

plus the term-size estimates of its integration-by-parts series, the
validity ratio ``r = R / sqrt(gamma^2 + delta^2)`` and Monte Carlo sweeps
comparing Bloch ensembles with the rate equation.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import expm

from . import ere
from .ensemble import fmt, run_ensemble
from .field import DriveConfig
from .rng import derive_seed
from .spectrum import SpectrumSpec

SCHEMA_VERSION = 1
GREEN, AMBER, RED = "green", "amber", "red"
FLATNESS_LIMIT = 0.1


@dataclass(frozen=True)
class ValidityConfig:
    gamma: float
    delta: float = 0.0
    R0: float = 0.0
    p_max: int = 4
    A: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.p_max < 1:
            raise ValueError(f"p_max must be >= 1, got {self.p_max}")
        if self.R0 < 0:
            raise ValueError("R0 must be >= 0")

    @property
    def R(self):
        """Pump rate at the transition, ``R0 gamma^2 / (gamma^2 + delta^2)``."""
        g2 = self.gamma ** 2
        return self.R0 * g2 / (g2 + self.delta ** 2)

    @property
    def z(self):
        return 0.5 * self.A + self.gamma + 1j * self.delta

    def spectrum(self):
        return SpectrumSpec.lorentzian(self.gamma, self.R0)


def _segment_weights(h, z):
    """Exact weights of a linear segment against ``exp(-z (h - s))`` on [0, h]."""
    zh = z * h
    E = np.exp(-zh)
    I0 = -np.expm1(-zh) / z
    small = np.abs(zh) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        I1 = np.where(small, h * (0.5 - zh / 6.0 + zh * zh / 24.0),
                      1.0 / z - I0 / np.where(small, 1.0, zh))
    return E, I0 - I1, I1


def memory_ode_rhs(n_history, config, t):
    """Closure-level dn/dt at ``t`` from a history ``(times, n)`` covering [0, t].

    The history is taken as piecewise linear and the memory integral is built
    segment by segment with the one-step recurrence
    ``J_{k+1} = exp(-z h_k) J_k + w0 n_k + w1 n_{k+1}``, exact for that
    interpolant.
    """
    times = np.asarray(n_history[0], dtype=float)
    vals = np.asarray(n_history[1], dtype=float)
    tol = 1e-9 * max(1.0, t)
    if times.size == 0 or abs(times[0]) > 1e-12 or times[-1] < t - tol:
        raise ValueError(f"history must cover [0, {t}]")
    keep = times <= t + tol
    times, vals = times[keep], vals[keep]
    if times[-1] < t - tol:
        times, vals = np.append(times, t), np.append(vals, np.interp(t, *n_history))
    A = config.A
    J = 0j
    if times.size > 1:
        E, w0, w1 = _segment_weights(np.diff(times), config.z)
        for k in range(times.size - 1):
            J = E[k] * J + w0[k] * vals[k] + w1[k] * vals[k + 1]
    return float(-A * (vals[-1] + 1.0) - config.gamma * config.R0 * J.real)


def _memory_generator(config):
    # state (n, Re J, Im J, 1) with J = int_0^t n(tau) e^{-z (t - tau)} dtau
    A, g, R0 = config.A, config.gamma, config.R0
    zr, zi = config.z.real, config.z.imag
    return np.array([[-A, -g * R0, 0.0, -A],
                     [1.0, -zr, zi, 0.0],
                     [0.0, -zi, -zr, 0.0],
                     [0.0, 0.0, 0.0, 0.0]])


def integrate_memory_ode(config, t_end, dt, n0=-1.0):
    """Exact stepping of the closure-level equation; returns ``(t, n)``.

    The memory integral obeys ``dJ/dt = n - z J``, so each step is one
    matrix exponential of the linear system.
    """
    steps = max(1, int(round(t_end / dt)))
    h = t_end / steps
    P = expm(_memory_generator(config) * h)
    y = np.array([n0, 0.0, 0.0, 1.0])
    out = np.empty(steps + 1)
    out[0] = n0
    for k in range(steps):
        y = P @ y
        out[k + 1] = y[0]
    return np.arange(steps + 1) * h, out


def memory_decay_rate(config):
    """Slow relaxation rate of the closure-level equation (eigenvalue nearest A + R)."""
    ev = np.linalg.eigvals(_memory_generator(config)[:3, :3])
    target = config.A + config.R
    return float(-ev[np.argmin(np.abs(-ev - target))].real)


def series_decay_rate(config, p_max=None):
    """Relaxation rate implied by the integration-by-parts series cut at ``p_max``.

    For ``n = n_inf + D exp(-kappa t)`` the truncated series gives
    ``kappa = A + gamma R0 Re sum_{p<=p_max} kappa^p / z^{p+1}``; the real
    root closest to ``A + R`` is returned (nan if none is real).
    """
    p_max = config.p_max if p_max is None else p_max
    g, R0, z = config.gamma, config.R0, config.z
    # polynomial in kappa, highest power first
    coef = np.zeros(p_max + 1)
    for p in range(p_max + 1):
        coef[p_max - p] -= g * R0 * (z ** -(p + 1)).real
    coef[p_max - 1] += 1.0
    coef[p_max] -= config.A
    roots = np.roots(coef)
    real = roots[np.abs(roots.imag) <= 1e-9 * np.maximum(1.0, np.abs(roots.real))].real
    if real.size == 0:
        return float("nan")
    return float(real[np.argmin(np.abs(real - (config.A + config.R)))])


def sp_magnitudes(config):
    """Order-of-magnitude of each series term, p = 0..p_max.

    ``gamma (2A + 2BW(omega21))^p (gamma^2 + delta^2)^(-(p+1)/2)``; the 2A is
    the deliberate overestimate of the derivative sizes, kept as an upper
    bound rather than a tight estimate.
    """
    p = np.arange(config.p_max + 1)
    mod = math.hypot(config.gamma, config.delta)
    return config.gamma * (2.0 * config.A + config.R) ** p / mod ** (p + 1)


def bound_ratio(config):
    """``2BW(omega21) / sqrt(gamma^2 + delta^2)``; the rate equation needs this << 1."""
    return config.R / math.hypot(config.gamma, config.delta)


def ratio_flag(r):
    if r <= 0.1:
        return GREEN
    if r <= 0.5:
        return AMBER
    return RED


def flatness(config):
    """``A |dW/dbeta| / W`` at the transition for the Lorentzian."""
    return config.A * 2.0 * abs(config.delta) / (config.gamma ** 2 + config.delta ** 2)


def deviation_window(t, gamma):
    return t >= 3.0 / gamma - 1e-12


def closure_deviation(config, t_end=10.0, dt=None, n0=-1.0):
    """Max |closure-level n - rate-equation n| over t in [3/gamma, t_end]."""
    dt = min(0.01, 0.05 / config.gamma) if dt is None else dt
    t, n = integrate_memory_ode(config, t_end, dt, n0)
    ref = ere.solve_ere(ere.EREParams(config.A, config.R, n0), t)
    w = deviation_window(t, config.gamma)
    return float(np.max(np.abs(n - ref)[w]))


@dataclass
class SweepPoint:
    gamma: float
    delta: float
    R0: float
    r: float = float("nan")
    eps_dev: float = float("nan")
    stderr: float = float("nan")
    flatness: float = float("nan")
    flatness_flag: bool = False
    flag: str = ""
    error: str = ""


@dataclass
class SweepResult:
    points: list
    settings: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gamma", "delta", "R0", "r", "eps_dev", "stderr", "flatness_flag"])
            for p in self.points:
                w.writerow([fmt(p.gamma), fmt(p.delta), fmt(p.R0), fmt(p.r), fmt(p.eps_dev),
                            fmt(p.stderr), str(bool(p.flatness_flag)).lower()])

    def summary(self):
        points = [{k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                   for k, v in asdict(p).items()} for p in self.points]
        return {"schema_version": SCHEMA_VERSION, "settings": self.settings,
                "points": points,
                "n_failed": sum(1 for p in self.points if p.error)}

    def to_json(self, path, extra=None):
        doc = self.summary()
        if extra:
            doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def sweep_validity(points, n_atoms=2000, t_end=5.0, seed=0, A=1.0, drive_config=None,
                   n_out=201, workers=1, dt=None):
    """Bloch ensemble vs rate equation at each ``(gamma, delta, R0)``.

    ``eps_dev`` is the max |n_bar - n_ERE| over t in [3/gamma, t_end];
    ``stderr`` is the ensemble standard error at that time. A failing point
    is recorded with its error message and the sweep moves on.
    """
    cfg = drive_config or DriveConfig()
    rows = []
    for i, (g, d, r0) in enumerate(points):
        row = SweepPoint(float(g), float(d), float(r0))
        try:
            vc = ValidityConfig(g, d, r0, A=A)
            row.r = bound_ratio(vc)
            row.flag = ratio_flag(row.r)
            row.flatness = flatness(vc)
            row.flatness_flag = row.flatness > FLATNESS_LIMIT
            trace = run_ensemble(vc.spectrum(), cfg, n_atoms, t_end, seed=derive_seed(seed, i),
                                 omega21=d, n_out=n_out, A=A, workers=workers, dt=dt)
            ref = ere.solve_ere(ere.EREParams(A, vc.R, -1.0), trace.time_grid)
            w = deviation_window(trace.time_grid, g)
            if not w.any():
                raise ValueError(f"t_end={t_end} ends before the transient cut 3/gamma")
            dev = np.abs(trace.n_bar - ref)
            j = np.flatnonzero(w)[np.argmax(dev[w])]
            row.eps_dev = float(dev[j])
            row.stderr = float(trace.stderr[j])
        except Exception as exc:  # recorded per point
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    settings = {"n_atoms": n_atoms, "t_end": t_end, "seed": seed, "A": A,
                "backend": cfg.backend}
    return SweepResult(rows, settings)
