"""Spectral energy densities, field correlations and the response kernel.

Reduced units: the spontaneous rate ``A`` sets the time scale, frequencies
are in units of ``A``, and the field strength enters through pump rates
``R = 2 B W``. ``B`` defaults to 1/2 so that ``W`` and ``R`` coincide
numerically; pass another ``b_coef`` to keep W in other units.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.constants as const

REDUCED_B = 0.5

LORENTZIAN = "lorentzian"
TABULATED = "tabulated"


class SpectrumError(ValueError):
    pass


class QuadratureError(RuntimeError):
    """Raised when a spectral integral does not settle under grid doubling."""


class SpanWarning(UserWarning):
    """The beta span drops more than 1% of the spectral weight."""


@dataclass(frozen=True)
class SpectrumSpec:
    """Spectral energy density W(omega).

    Parameters
    ----------
    shape : {"lorentzian", "tabulated"}
    omega0 : float
        Centre of the Lorentzian.
    gamma : float
        Half width at half maximum of the Lorentzian.
    w_peak : float
        W(omega0).
    table : tuple of (omega, W) pairs, optional
        Used when ``shape == "tabulated"``; linear interpolation, zero outside.
    b_coef : float
        Einstein B in the chosen units; pump rate is ``2 * b_coef * W``.
    """

    shape: str = LORENTZIAN
    omega0: float = 0.0
    gamma: float = 1.0
    w_peak: float = 1.0
    table: Optional[tuple] = None
    b_coef: float = REDUCED_B

    def __post_init__(self):
        if self.shape == LORENTZIAN:
            if not self.gamma > 0:
                raise SpectrumError(f"gamma must be > 0, got {self.gamma}")
            if self.w_peak < 0:
                raise SpectrumError(f"w_peak must be >= 0, got {self.w_peak}")
        elif self.shape == TABULATED:
            if self.table is None or len(self.table) < 2:
                raise SpectrumError("tabulated spectrum needs at least two (omega, W) rows")
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2:
                raise SpectrumError("table must be a sequence of (omega, W) pairs")
            if np.any(np.diff(tab[:, 0]) <= 0):
                raise SpectrumError("table omegas must be strictly increasing")
            if np.any(tab[:, 1] < 0):
                raise SpectrumError("tabulated W must be nonnegative")
            object.__setattr__(self, "table", tuple(map(tuple, tab)))
        else:
            raise SpectrumError(f"unknown spectrum shape {self.shape!r}")

    @classmethod
    def lorentzian(cls, gamma, R0, omega0=0.0, b_coef=REDUCED_B):
        """Lorentzian with peak pump rate ``R0 = 2 B W(omega0)``."""
        return cls(LORENTZIAN, omega0=omega0, gamma=gamma, w_peak=R0 / (2.0 * b_coef),
                   b_coef=b_coef)

    @classmethod
    def from_table(cls, omega, w, b_coef=REDUCED_B):
        return cls(TABULATED, table=tuple(zip(np.asarray(omega, float), np.asarray(w, float))),
                   b_coef=b_coef)

    @property
    def table_array(self):
        return None if self.table is None else np.asarray(self.table, dtype=float)

    @property
    def peak_pump_rate(self):
        if self.shape == LORENTZIAN:
            return 2.0 * self.b_coef * self.w_peak
        return 2.0 * self.b_coef * float(self.table_array[:, 1].max())

    def detuning(self, omega21):
        """``omega21 - omega0``."""
        return omega21 - self.omega0

    def pump_rate(self, omega21):
        """Stimulated rate ``2 B W(omega21)``."""
        return 2.0 * self.b_coef * float(eval_W(self, omega21))


def load_table(path, b_coef=REDUCED_B):
    """Read a two-column ``omega W`` text file (``#`` comments allowed)."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise SpectrumError(f"{path}: expected two columns, got {data.shape[1]}")
    return SpectrumSpec.from_table(data[:, 0], data[:, 1], b_coef=b_coef)


def eval_W(spec, omega):
    """Spectral energy density at angular frequency ``omega`` (scalar or array)."""
    omega = np.asarray(omega, dtype=float)
    if spec.shape == LORENTZIAN:
        g2 = spec.gamma ** 2
        out = spec.w_peak * g2 / (g2 + (omega - spec.omega0) ** 2)
    else:
        tab = spec.table_array
        out = np.interp(omega, tab[:, 0], tab[:, 1], left=0.0, right=0.0)
    return out if out.ndim else float(out)


@dataclass
class CorrelationFn:
    """C(s) = <Omega*(t) Omega(t - s)> sampled at lags ``grid``."""

    grid: np.ndarray
    values: np.ndarray
    closed_form: Optional[dict] = field(default=None)

    def extended(self):
        """Lags and values on ``[-s_max, s_max]`` using C(-s) = conj(C(s))."""
        g = np.asarray(self.grid)
        v = np.asarray(self.values)
        keep = g > 0
        return (np.concatenate([-g[keep][::-1], g]),
                np.concatenate([np.conj(v[keep][::-1]), v]))


def _trapz_fourier(spec, omega21, lags, lo, hi, n):
    beta = np.linspace(lo, hi, n)
    w = eval_W(spec, omega21 + beta)
    phase = np.exp(1j * np.outer(lags, beta))
    return np.trapezoid(w[None, :] * phase, beta, axis=1)


def correlation_quadrature(spec, omega21, lags, lo=None, hi=None, n=4097, rtol=1e-3,
                           max_doublings=8):
    """Trapezoidal Fourier integral (B / 2pi) * int W(omega21 + beta) e^{i beta s} dbeta.

    The grid is doubled until successive results agree to ``rtol`` relative
    to C(0).
    """
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    if lo is None or hi is None:
        if spec.shape == LORENTZIAN:
            d = spec.omega0 - omega21
            lo, hi = d - 200.0 * spec.gamma, d + 200.0 * spec.gamma
        else:
            tab = spec.table_array
            lo, hi = tab[0, 0] - omega21, tab[-1, 0] - omega21
    pref = spec.b_coef / (2.0 * math.pi)
    prev = pref * _trapz_fourier(spec, omega21, lags, lo, hi, n)
    for _ in range(max_doublings):
        n = 2 * n - 1
        cur = pref * _trapz_fourier(spec, omega21, lags, lo, hi, n)
        scale = max(abs(cur[0]) if lags[0] == 0 else np.max(np.abs(cur)), 1e-300)
        if np.max(np.abs(cur - prev)) <= rtol * scale:
            return cur
        prev = cur
    raise QuadratureError(f"Fourier quadrature not converged after {max_doublings} doublings")


def analytic_correlation(spec, omega21, lags):
    """Field correlation C(s) for lags s >= 0.

    Lorentzian spectra use the closed form
    ``C(s) = (B/2) gamma W(omega0) exp(-i delta s) exp(-gamma s)``,
    i.e. ``gamma R0 / 4`` at zero lag. Tabulated spectra go through
    :func:`correlation_quadrature`.
    """
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    if np.any(lags < 0):
        raise SpectrumError("lags must be >= 0")
    if spec.shape == LORENTZIAN:
        delta = spec.detuning(omega21)
        amp = 0.5 * spec.b_coef * spec.gamma * spec.w_peak
        vals = amp * np.exp(-(spec.gamma + 1j * delta) * lags)
        tag = {"kind": "LorentzianAnalytic", "gamma": spec.gamma, "delta": delta,
               "amplitude": amp}
        return CorrelationFn(lags, vals, tag)
    return CorrelationFn(lags, correlation_quadrature(spec, omega21, lags))


def kernel_K(beta, A, t):
    """Re[(1 - exp(-(A/2 - i beta) t)) / (A/2 - i beta)].

    Tends to the Lorentzian ``(A/2) / ((A/2)**2 + beta**2)`` for ``A t >> 1``.
    """
    if A <= 0:
        raise ValueError("A must be > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    z = 0.5 * A - 1j * np.asarray(beta, dtype=float)
    out = np.real(-np.expm1(-z * t) / z)
    return out if np.ndim(out) else float(out)


def kernel_K_limit(beta, A):
    h = 0.5 * A
    return h / (h * h + np.asarray(beta, dtype=float) ** 2)


def kernel_integral(A, t, half_span, n=400001, tail_correct=True):
    """Trapezoidal integral of K over [-half_span, half_span].

    With ``tail_correct`` the analytic Lorentzian tail mass beyond the span,
    ``pi - 2 atan(2 half_span / A)``, is added back.
    """
    beta = np.linspace(-half_span, half_span, n)
    val = float(np.trapezoid(kernel_K(beta, A, t), beta))
    if tail_correct:
        val += math.pi - 2.0 * math.atan(2.0 * half_span / A)
    return val


@dataclass(frozen=True)
class ModeGrid:
    beta: np.ndarray    # omega_j - omega21
    weight: np.ndarray  # |a_j|^2
    dbeta: np.ndarray   # cell widths


def default_span(spec, omega21, width=200.0):
    """Beta interval centred on the spectrum, ``width`` half-widths each side."""
    if spec.shape == LORENTZIAN:
        d = spec.omega0 - omega21
        return (d - width * spec.gamma, d + width * spec.gamma)
    tab = spec.table_array
    return (tab[0, 0] - omega21, tab[-1, 0] - omega21)


def _total_weight(spec):
    # (B / 2pi) * int W over all omega
    pref = spec.b_coef / (2.0 * math.pi)
    if spec.shape == LORENTZIAN:
        return pref * math.pi * spec.gamma * spec.w_peak
    tab = spec.table_array
    return pref * float(np.trapezoid(tab[:, 1], tab[:, 0]))


def mode_amplitudes(spec, omega21, n_modes, beta_span=None, jitter_rng=None):
    """Discretise the spectrum into ``n_modes`` cells of equal width.

    Returns a :class:`ModeGrid` with cell midpoints ``beta_j`` (or a uniform
    draw inside each cell when ``jitter_rng`` is given) and weights
    ``(B/2pi) W(omega21 + beta_j) dbeta`` so that
    ``sum_j w_j exp(i beta_j s)`` approximates C(s).
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    lo, hi = beta_span if beta_span is not None else default_span(spec, omega21)
    if not hi > lo:
        raise ValueError("beta_span must satisfy hi > lo")
    edges = np.linspace(lo, hi, n_modes + 1)
    dbeta = np.diff(edges)
    if jitter_rng is None:
        beta = 0.5 * (edges[:-1] + edges[1:])
    else:
        beta = edges[:-1] + dbeta * jitter_rng.random(n_modes)
    weight = spec.b_coef / (2.0 * math.pi) * eval_W(spec, omega21 + beta) * dbeta
    weight = np.atleast_1d(weight)
    total = _total_weight(spec)
    if total > 0 and n_modes > 1:
        captured = truncated_weight(spec, omega21, lo, hi)
        if (total - captured) > 0.01 * total:
            warnings.warn(f"beta span [{lo}, {hi}] drops {100 * (1 - captured / total):.2f}% "
                          "of the spectral weight", SpanWarning, stacklevel=2)
    return ModeGrid(beta, weight, dbeta)


def truncated_weight(spec, omega21, lo, hi):
    """(B/2pi) * int_{lo}^{hi} W(omega21 + beta) dbeta."""
    pref = spec.b_coef / (2.0 * math.pi)
    if spec.shape == LORENTZIAN:
        d = omega21 - spec.omega0
        g = spec.gamma
        return pref * spec.w_peak * g * (math.atan((hi + d) / g) - math.atan((lo + d) / g))
    tab = spec.table_array
    x = tab[:, 0] - omega21
    pts = np.union1d(np.clip(x, lo, hi), [lo, hi])
    return pref * float(np.trapezoid(eval_W(spec, omega21 + pts), pts))


def spectral_energy_density(omega, e_par_sq, volume, eps0=const.epsilon_0, c=const.c):
    """W(omega) = 8 (eps0 / V c^3) (2 pi)^4 omega^2 |E_par(omega)|^2."""
    omega = np.asarray(omega, dtype=float)
    return 8.0 * eps0 / (volume * c ** 3) * (2.0 * math.pi) ** 4 * omega ** 2 * np.asarray(e_par_sq)


def energy_density(modes, volume, eps0=const.epsilon_0, c=const.c):
    """Field energy per unit volume from ``(omega_j, |E_par(omega_j)|^2)`` samples.

    The samples are treated as a tabulated function of omega and integrated
    with the trapezoidal rule. Fewer than two samples give zero.
    """
    if len(modes) < 2:
        return 0.0
    arr = np.asarray(modes, dtype=float)
    order = np.argsort(arr[:, 0])
    om, e2 = arr[order, 0], arr[order, 1]
    return float(np.trapezoid(spectral_energy_density(om, e2, volume, eps0, c), om))
