"""Single-atom optical Bloch equations with phenomenological decay.

Population form::

    d rho22/dt = -A rho22 - i (Omega* rho21 - Omega rho12)
    d rho11/dt = +A rho22 + i (Omega* rho21 - Omega rho12)
    d rho21/dt = -(A/2) rho21 - i Omega (rho22 - rho11)

Inversion form, ``n = rho22 - rho11``::

    dn/dt      = -A (n + 1) - 2 i (Omega* rho21 - Omega rho12)
    d rho21/dt = -(A/2) rho21 - i Omega n

Both are stepped with fixed-step RK4. Mode-sum drives are evaluated at the
RK4 stage times; colored-noise drives are held constant over each step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .field import ColoredNoiseProcess, ModeSumProcess, sample

INVERSION = "inversion"
POPULATION = "population"
DT_FACTOR = 0.05
CHUNK_STEPS = 512


class StepSizeError(ValueError):
    pass


class InvariantError(RuntimeError):
    pass


class HistoryError(ValueError):
    pass


@dataclass(frozen=True)
class AtomState:
    rho22: float = 0.0
    rho11: float = 1.0
    rho21: complex = 0j
    t: float = 0.0

    @property
    def n(self):
        return self.rho22 - self.rho11

    @classmethod
    def from_inversion(cls, n, rho21=0j, t=0.0):
        return cls(0.5 * (1.0 + n), 0.5 * (1.0 - n), complex(rho21), t)

    def check(self, tol=1e-7):
        if abs(self.rho22 + self.rho11 - 1.0) > tol:
            raise InvariantError(f"rho22 + rho11 = {self.rho22 + self.rho11}")
        if abs(self.rho21) ** 2 > self.rho22 * self.rho11 + tol:
            raise InvariantError(f"|rho21|^2 = {abs(self.rho21) ** 2} exceeds "
                                 f"rho22*rho11 = {self.rho22 * self.rho11}")


def max_stable_dt(A=1.0, freq_bound=0.0, omega_bound=0.0, gamma=None):
    """Largest step allowed by the rule dt <= 0.05 / (fastest rate)."""
    rates = [A, freq_bound, omega_bound]
    if gamma is not None:
        rates.append(gamma)
    fastest = max(r for r in rates if r is not None)
    return DT_FACTOR / fastest if fastest > 0 else math.inf


def _process_bounds(drive):
    if isinstance(drive, ModeSumProcess):
        return drive.freq_bound, drive.omega_bound, None
    if isinstance(drive, ColoredNoiseProcess):
        return abs(drive.delta), drive.omega_bound, drive.gamma
    return 0.0, 0.0, None


def check_step(dt, drive=None, A=1.0):
    if not dt > 0:
        raise StepSizeError(f"dt must be > 0, got {dt}")
    fb, ob, g = _process_bounds(drive) if drive is not None else (0.0, 0.0, None)
    limit = max_stable_dt(A, fb, ob, g)
    if dt > limit * (1 + 1e-9):
        raise StepSizeError(f"dt={dt} exceeds the stability rule limit {limit:.6g} "
                            f"(A={A}, max|freq|={fb:.6g}, Omega bound={ob:.6g}, gamma={g})")


def _stages(drive, t, dt):
    if drive is None:
        return 0j, 0j, 0j
    if isinstance(drive, ColoredNoiseProcess):
        o = sample(drive, t)
        return o, o, o
    if isinstance(drive, ModeSumProcess):
        o = drive(np.array([t, t + 0.5 * dt, t + dt]))
        return complex(o[0]), complex(o[1]), complex(o[2])
    if callable(drive):
        return complex(drive(t)), complex(drive(t + 0.5 * dt)), complex(drive(t + dt))
    raise TypeError(f"unsupported drive {drive!r}")


def step_population_form(state, drive, dt, A=1.0):
    """One RK4 step of the population-form equations."""
    check_step(dt, drive, A)
    o1, o2, o3 = _stages(drive, state.t, dt)
    f = kernels._f_pop_np
    p2, p1, r = state.rho22, state.rho11, complex(state.rho21)
    a2, a1, ar = f(p2, p1, r, o1, A)
    b2, b1, br = f(p2 + 0.5 * dt * a2, p1 + 0.5 * dt * a1, r + 0.5 * dt * ar, o2, A)
    c2, c1, cr = f(p2 + 0.5 * dt * b2, p1 + 0.5 * dt * b1, r + 0.5 * dt * br, o2, A)
    d2, d1, dr = f(p2 + dt * c2, p1 + dt * c1, r + dt * cr, o3, A)
    return AtomState(p2 + dt / 6.0 * (a2 + 2 * b2 + 2 * c2 + d2),
                     p1 + dt / 6.0 * (a1 + 2 * b1 + 2 * c1 + d1),
                     r + dt / 6.0 * (ar + 2 * br + 2 * cr + dr),
                     state.t + dt)


def step_inversion_form(state, drive, dt, A=1.0, t=0.0):
    """One RK4 step of ``(n, rho21)``; returns the new pair."""
    check_step(dt, drive, A)
    n, r = float(state[0]), complex(state[1])
    o1, o2, o3 = _stages(drive, t, dt)
    f = kernels._f_inv_np
    k1n, k1r = f(n, r, o1, A)
    k2n, k2r = f(n + 0.5 * dt * k1n, r + 0.5 * dt * k1r, o2, A)
    k3n, k3r = f(n + 0.5 * dt * k2n, r + 0.5 * dt * k2r, o2, A)
    k4n, k4r = f(n + dt * k3n, r + dt * k3r, o3, A)
    return (n + dt / 6.0 * (k1n + 2 * k2n + 2 * k3n + k4n),
            r + dt / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r))


@dataclass
class BlochTrace:
    t: np.ndarray
    n: np.ndarray
    rho21: np.ndarray
    omega: np.ndarray
    max_violation: float
    max_trace_error: float


def n_steps_for(t_end, dt):
    steps = int(round(t_end / dt))
    if steps < 1 or abs(steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise StepSizeError(f"t_end={t_end} is not a whole number of steps dt={dt}")
    return steps


def grid_indices(times, dt, n_steps):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    idx = np.rint(times / dt).astype(np.int64)
    if np.any(np.abs(idx * dt - times) > 1e-6 * dt) or np.any(idx < 0) or np.any(idx > n_steps):
        raise StepSizeError("output times must lie on the integration grid within [0, t_end]")
    return idx


def _drive_array(drive, k0, k1, dt):
    n = k1 - k0
    if drive is None:
        return np.zeros(n + 1, dtype=complex), True
    if isinstance(drive, ColoredNoiseProcess):
        if abs(drive.dt - dt) > 1e-12 * dt:
            raise StepSizeError(f"colored-noise process dt={drive.dt} differs from "
                                f"integrator dt={dt}")
        return np.array([drive.value_at(k * dt) for k in range(k0, k1 + 1)]), True
    times = (k0 + 0.5 * np.arange(2 * n + 1)) * dt
    if isinstance(drive, ModeSumProcess):
        return drive(times), False
    return np.array([complex(drive(x)) for x in times]), False


def run_kernel(n0, rho0, drive_chunks, n_steps, dt, A, rec_idx, form=INVERSION,
               chunk=CHUNK_STEPS):
    """Integrate a block of atoms; ``drive_chunks(k0, k1) -> (array, held)``.

    Returns ``(out_n, out_rho, out_omega, violation, trace_error)`` with one
    column per entry of ``rec_idx``.
    """
    B = n0.shape[0]
    n_rec = len(rec_idx)
    slot_of = np.full(n_steps + 1, -1, dtype=np.int64)
    slot_of[rec_idx] = np.arange(n_rec)
    out_n = np.empty((B, n_rec))
    out_r = np.empty((B, n_rec), dtype=complex)
    out_o = np.empty((B, n_rec), dtype=complex)
    viol = np.zeros(B)
    terr = np.zeros(B)
    n = np.array(n0, dtype=float)
    r = np.array(rho0, dtype=complex)
    if form == POPULATION:
        p2 = 0.5 * (1.0 + n)
        p1 = 0.5 * (1.0 - n)
    elif form != INVERSION:
        raise ValueError(f"unknown Bloch form {form!r}")
    for k0 in range(0, n_steps, chunk):
        k1 = min(k0 + chunk, n_steps)
        arr, held = drive_chunks(k0, k1)
        final = k1 == n_steps
        rec_map = slot_of[k0:k1 + 1]
        if form == INVERSION:
            kernels.rk4_inversion(n, r, arr, held, dt, A, rec_map, final, out_n, out_r, out_o,
                                  viol)
        else:
            kernels.rk4_population(p2, p1, r, arr, held, dt, A, rec_map, final, out_n, out_r,
                                   out_o, viol, terr)
    return out_n, out_r, out_o, viol, terr


def integrate(initial, drive, t_end, dt, sampler=None, form=INVERSION, A=1.0, tolerance=1e-7):
    """Integrate one atom from ``initial`` to ``t_end``.

    ``sampler`` is an array of output times on the step grid; the default is
    every step. Raises :class:`InvariantError` when ``n`` leaves [-1, 1] or
    ``|rho21|^2`` exceeds ``rho22 rho11`` by more than ``tolerance``.
    """
    if isinstance(initial, AtomState):
        initial.check(tolerance)
        n0, r0 = initial.n, complex(initial.rho21)
    else:
        n0, r0 = float(initial[0]), complex(initial[1])
    check_step(dt, drive, A)
    n_steps = n_steps_for(t_end, dt)
    if sampler is None:
        rec_idx = np.arange(n_steps + 1)
    else:
        rec_idx = grid_indices(sampler, dt, n_steps)
    order = np.argsort(rec_idx, kind="stable")
    if isinstance(drive, ColoredNoiseProcess):
        drive.reset()

    def chunks(k0, k1):
        arr, held = _drive_array(drive, k0, k1, dt)
        return arr[None, :], held

    out_n, out_r, out_o, viol, terr = run_kernel(np.array([n0]), np.array([r0]), chunks,
                                                 n_steps, dt, A, rec_idx[order], form)
    if viol[0] > tolerance:
        raise InvariantError(f"Bloch invariant violated by {viol[0]:.3g} > {tolerance:g}")
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return BlochTrace(rec_idx * dt, out_n[0, inv], out_r[0, inv], out_o[0, inv],
                      float(viol[0]), float(terr[0]))


def steady_state_constant_drive(a, A=1.0):
    """Stationary ``(n, rho21)`` for a constant real resonant drive ``a``."""
    n = -1.0 / (1.0 + 8.0 * a * a / (A * A))
    return n, -2j * a * n / A


# ------------------------------------------------ memory-kernel formulation


def _omega_history(drive, times):
    if isinstance(drive, ModeSumProcess):
        return drive(times)
    arr = np.asarray(drive)
    if arr.shape != times.shape:
        raise HistoryError("drive samples must align with the history grid")
    return arr.astype(complex)


def memory_kernel_rhs(n_history, drive, t, A=1.0):
    """dn/dt at ``t`` from the inversion history alone.

    ``-A (n(t) + 1) - 4 Re[ Omega*(t) int_0^t Omega(tau) n(tau) e^{A (tau - t)/2} dtau ]``
    with the integral taken by the trapezoidal rule over the history grid.
    ``n_history = (times, values)`` must start at 0 and reach ``t``;
    ``drive`` is a mode-sum process or Omega sampled on the same grid.
    """
    times = np.asarray(n_history[0], dtype=float)
    vals = np.asarray(n_history[1], dtype=float)
    if times.size == 0 or times[0] > 1e-12 or times[-1] < t - 1e-9 * max(1.0, t):
        raise HistoryError(f"history must cover [0, {t}]")
    om = _omega_history(drive, times)
    keep = times <= t + 1e-9 * max(1.0, t)
    times, vals, om = times[keep], vals[keep], om[keep]
    n_t = vals[-1]
    if times.size < 2:
        return -A * (n_t + 1.0)
    integrand = om * vals * np.exp(0.5 * A * (times - t))
    integral = np.trapezoid(integrand, times)
    return float(-A * (n_t + 1.0) - 4.0 * np.real(np.conj(om[-1]) * integral))


def _volterra_trapezoid(om, h, n0, A):
    # implicit trapezoid; the memory integral is accumulated with the same rule
    K = om.size - 1
    n = np.empty(K + 1)
    n[0] = n0
    decay = math.exp(-0.5 * A * h)
    integral = 0j
    f = -A * (n0 + 1.0)
    for k in range(K):
        o_next = om[k + 1]
        P = decay * (integral + 0.5 * h * om[k] * n[k])
        q = (o_next.conjugate() * P).real
        denom = 1.0 + 0.5 * h * (A + 2.0 * h * (o_next.real ** 2 + o_next.imag ** 2))
        n[k + 1] = (n[k] + 0.5 * h * (f - A - 4.0 * q)) / denom
        integral = P + 0.5 * h * o_next * n[k + 1]
        f = -A * (n[k + 1] + 1.0) - 4.0 * (o_next.conjugate() * integral).real
    return n


def integrate_memory_kernel(drive, t_end, h, n0=-1.0, A=1.0, levels=3):
    """Solve the single-atom integro-differential equation for n(t).

    Implicit trapezoidal steps with Richardson extrapolation over ``levels``
    successive halvings of ``h``. Returns ``(t, n)`` on the coarse grid.
    The coherence is assumed to start at zero.
    """
    if not isinstance(drive, ModeSumProcess) and drive is not None:
        raise TypeError("memory-kernel integration needs a mode-sum drive")
    n_steps = n_steps_for(t_end, h)
    table = []
    for lev in range(levels):
        m = 2 ** lev
        times = np.arange(n_steps * m + 1) * (h / m)
        om = drive(times) if drive is not None else np.zeros(times.size, dtype=complex)
        table.append(_volterra_trapezoid(om, h / m, n0, A)[::m])
    # Richardson on the even error expansion h^2, h^4, ...
    for j in range(1, levels):
        fac = 4.0 ** j
        table = [(fac * table[i + 1] - table[i]) / (fac - 1.0) for i in range(len(table) - 1)]
    return np.arange(n_steps + 1) * h, table[0]
