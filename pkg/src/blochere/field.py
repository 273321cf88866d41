"""Stochastic realisations of the complex Rabi drive Omega(t).

Two backends produce a field whose correlation
``<Omega*(t) Omega(t - s)>`` equals the spectrum's C(s):

* ``mode_sum``: ``Omega(t) = sum_j a_j exp(i(nu_j t + phi_j))`` with
  deterministic amplitudes and random phases. A mode at optical detuning
  ``beta_j = omega_j - omega21`` rotates at ``nu_j = -beta_j`` in the
  atom's frame.
* ``colored_noise``: a complex mean-reverting (Ornstein-Uhlenbeck) process
  with exact one-step updates; Lorentzian spectra only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .kernels import mode_sum_fill, ou_fill
from .spectrum import LORENTZIAN, analytic_correlation, default_span, mode_amplitudes

MODE_SUM = "mode_sum"
COLORED_NOISE = "colored_noise"
PHASE_ONLY = "phase_only"
EXPLICIT_3D = "explicit_3d"

# atom positions for explicit_3d are uniform in a cube of this side, in wavelengths
POSITION_BOX = 1000.0


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class DriveConfig:
    """Field-synthesis settings shared by every atom of an ensemble."""

    backend: str = COLORED_NOISE
    n_modes: int = 1024
    geometry: str = PHASE_ONLY
    span_width: float = 200.0
    jitter: bool = False
    random_amplitudes: bool = False

    def __post_init__(self):
        if self.backend not in (MODE_SUM, COLORED_NOISE):
            raise FieldError(f"unknown field backend {self.backend!r}")
        if self.geometry not in (PHASE_ONLY, EXPLICIT_3D):
            raise FieldError(f"unknown field geometry {self.geometry!r}")
        if self.n_modes < 1:
            raise FieldError("n_modes must be >= 1")


class RabiProcess:
    backend = None
    seed_path = ()


class ModeSumProcess(RabiProcess):
    """Finite sum of phasors; evaluable at any time."""

    backend = MODE_SUM

    def __init__(self, amps, freqs, phases, seed_path=(), directions=None, theta=None):
        self.amps = np.asarray(amps, dtype=float)
        self.freqs = np.asarray(freqs, dtype=float)
        self.phases = np.mod(np.asarray(phases, dtype=float), 2.0 * math.pi)
        self.seed_path = tuple(seed_path)
        self.directions = directions
        self.theta = theta
        if np.any(self.amps < 0):
            raise FieldError("mode amplitudes must be >= 0")

    @property
    def beta(self):
        return -self.freqs

    @property
    def omega_bound(self):
        return float(self.amps.sum())

    @property
    def freq_bound(self):
        return float(np.abs(self.freqs).max()) if self.freqs.size else 0.0

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((1, t.size), dtype=complex)
        mode_sum_fill(self.amps[None], self.freqs[None], self.phases[None], t, out)
        return out[0]


class ColoredNoiseProcess(RabiProcess):
    """Stationary complex OU process held constant over each step of ``dt``.

    ``Omega_{k+1} = rho Omega_k + sqrt(C0 (1 - |rho|^2)) xi_k`` with
    ``rho = exp(-(gamma - i delta) dt)`` and unit complex Gaussian ``xi``.
    ``Omega_0`` is drawn from the stationary law.
    """

    backend = COLORED_NOISE

    def __init__(self, gamma, delta, variance, dt, seed_path):
        self.gamma = float(gamma)
        self.delta = float(delta)
        self.variance = float(variance)
        self.dt = float(dt)
        self.seed_path = tuple(seed_path)
        self.reset()

    @property
    def rho(self):
        return complex(np.exp(-(self.gamma - 1j * self.delta) * self.dt))

    @property
    def step_scale(self):
        return math.sqrt(self.variance * -math.expm1(-2.0 * self.gamma * self.dt))

    @property
    def omega_bound(self):
        # five standard deviations of |Omega|
        return 5.0 * math.sqrt(self.variance)

    def reset(self):
        self._gen = rng.substream(*self.seed_path, rng.NOISE)
        self._k = 0
        self._value = math.sqrt(self.variance) * _complex_normal(self._gen, 1)[0]

    def advance(self):
        """Step the process by one ``dt`` and return the new value."""
        xi = _complex_normal(self._gen, 1)[0]
        self._value = self.rho * self._value + self.step_scale * xi
        self._k += 1
        return self._value

    def value_at(self, t):
        k = int(math.floor(t / self.dt + 1e-9))
        if k < self._k:
            raise FieldError(f"colored-noise process sampled out of order: t={t} is before "
                             f"the current step {self._k}")
        while self._k < k:
            self.advance()
        return self._value


def _complex_normal(gen, n):
    x = gen.standard_normal((n, 2))
    return (x[:, 0] + 1j * x[:, 1]) * math.sqrt(0.5)


def _unit_vectors(gen, n):
    v = gen.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _mode_block(spec, omega21, cfg, seed, atoms, directions=None):
    """Amplitudes, rotation frequencies and phases for a block of atoms."""
    atoms = list(atoms)
    span = default_span(spec, omega21, cfg.span_width)
    M = cfg.n_modes
    B = len(atoms)
    shared = cfg.geometry == EXPLICIT_3D
    if cfg.jitter:
        if shared:
            grids = [mode_amplitudes(spec, omega21, M, span,
                                     rng.substream(seed, rng.SHARED, rng.JITTER))] * B
        else:
            grids = [mode_amplitudes(spec, omega21, M, span,
                                     rng.substream(seed, a, rng.JITTER)) for a in atoms]
    else:
        grids = [mode_amplitudes(spec, omega21, M, span)] * B
    amps = np.empty((B, M))
    freqs = np.empty((B, M))
    phases = np.empty((B, M))
    extra = {}
    if shared:
        g = rng.substream(seed, rng.SHARED, rng.DIRECTIONS)
        khat = _unit_vectors(g, M) if directions is None else np.asarray(directions, float)
        theta = np.arccos(np.clip(khat[:, 2], -1.0, 1.0))
        shared_phase = 2.0 * math.pi * rng.substream(seed, rng.SHARED, rng.PHASES).random(M)
        if cfg.random_amplitudes:
            ramp = np.abs(_complex_normal(rng.substream(seed, rng.SHARED, rng.AMPLITUDES), M))
        extra = {"directions": khat, "theta": theta}
    for i, a in enumerate(atoms):
        grid = grids[i]
        amp = np.sqrt(grid.weight)
        freqs[i] = -grid.beta
        if shared:
            # sin(theta) projection, rescaled by 3/2 = 1/<sin^2 theta> over the sphere
            amp = amp * np.sin(theta) * math.sqrt(1.5)
            if cfg.random_amplitudes:
                amp = amp * ramp
            pos = POSITION_BOX * rng.substream(seed, a, rng.POSITION).random(3)
            phases[i] = shared_phase + 2.0 * math.pi * (khat @ pos)
        else:
            if cfg.random_amplitudes:
                amp = amp * np.abs(_complex_normal(rng.substream(seed, a, rng.AMPLITUDES), M))
            phases[i] = 2.0 * math.pi * rng.substream(seed, a, rng.PHASES).random(M)
        amps[i] = amp
    return amps, freqs, np.mod(phases, 2.0 * math.pi), extra


def synth_mode_sum(spec, omega21, n_modes, seed_path, geometry=PHASE_ONLY, span_width=200.0,
                   jitter=False, random_amplitudes=False, directions=None):
    """Random-phase mode-sum realisation for atom ``seed_path = (seed, atom)``.

    With ``geometry="explicit_3d"`` the mode directions and phases are shared
    by the whole run (drawn from the run seed), each atom sits at its own
    random position, and each mode couples through ``sin(theta)`` of its
    direction. ``directions`` overrides the sampled unit vectors.
    """
    seed, atom = seed_path
    cfg = DriveConfig(MODE_SUM, n_modes, geometry, span_width, jitter, random_amplitudes)
    amps, freqs, phases, extra = _mode_block(spec, omega21, cfg, seed, [atom], directions)
    return ModeSumProcess(amps[0], freqs[0], phases[0], seed_path, **extra)


def check_colored_noise_dt(gamma, dt):
    if dt > 0.1 / gamma * (1 + 1e-12):
        raise FieldError(f"colored-noise step dt={dt} exceeds 0.1/gamma={0.1 / gamma}")


def synth_colored_noise(spec, omega21, seed_path, dt, check_dt=True):
    """OU realisation whose correlation is the Lorentzian closed form."""
    if spec.shape != LORENTZIAN:
        raise FieldError("colored-noise backend needs a Lorentzian spectrum")
    if check_dt:
        check_colored_noise_dt(spec.gamma, dt)
    c0 = float(analytic_correlation(spec, omega21, [0.0]).values[0].real)
    return ColoredNoiseProcess(spec.gamma, spec.detuning(omega21), c0, dt, seed_path)


def sample(process, t):
    """Omega at time ``t``.

    Mode sums accept scalars or arrays in any order. Colored noise advances
    its internal state and requires nondecreasing times.
    """
    if isinstance(process, ModeSumProcess):
        out = process(t)
        return out if np.ndim(t) else complex(out[0])
    if isinstance(process, ColoredNoiseProcess):
        if np.ndim(t):
            return np.array([process.value_at(float(x)) for x in t])
        return complex(process.value_at(float(t)))
    raise FieldError(f"not a Rabi process: {process!r}")


# ------------------------------------------------------------- ensemble blocks


class DriveBlock:
    """Per-step drive samples for a block of atoms, produced chunk by chunk.

    ``chunk(k0, k1)`` returns the array consumed by the RK4 kernels for steps
    ``[k0, k1)``: held values (``k1 - k0 + 1`` columns) for colored noise, or
    the half-step grid (``2 (k1 - k0) + 1`` columns) for mode sums. Chunks
    must be requested in order.
    """

    def __init__(self, spec, omega21, cfg, seed, atoms, dt):
        self.atoms = list(atoms)
        self.dt = dt
        self.held = cfg.backend == COLORED_NOISE
        B = len(self.atoms)
        if spec.peak_pump_rate == 0:
            self.kind = "off"
            self.held = True
            return
        if self.held:
            proc = synth_colored_noise(spec, omega21, (seed, 0), dt, check_dt=False)
            self.kind = COLORED_NOISE
            self.rho = proc.rho
            self.scale = proc.step_scale
            self.gens = [rng.substream(seed, a, rng.NOISE) for a in self.atoms]
            first = np.array([_complex_normal(g, 1)[0] for g in self.gens])
            self.current = math.sqrt(proc.variance) * first
            self.next_k = 0
        else:
            self.kind = MODE_SUM
            self.amps, self.freqs, self.phases, _ = _mode_block(spec, omega21, cfg, seed,
                                                                self.atoms)
        self.B = B

    def chunk(self, k0, k1):
        n = k1 - k0
        if self.kind == "off":
            return np.zeros((len(self.atoms), n + 1), dtype=complex)
        if self.kind == COLORED_NOISE:
            if k0 != self.next_k:
                raise FieldError("drive chunks must be requested in order")
            out = np.empty((self.B, n + 1), dtype=complex)
            out[:, 0] = self.current
            if n:
                xi = np.stack([_complex_normal(g, n) for g in self.gens])
                ou_fill(self.current.copy(), xi, self.rho, self.scale, out[:, 1:])
            self.current = out[:, -1].copy()
            self.next_k = k1
            return out
        times = (k0 + 0.5 * np.arange(2 * n + 1)) * self.dt
        out = np.empty((self.B, times.size), dtype=complex)
        mode_sum_fill(self.amps, self.freqs, self.phases, times, out)
        return out
