"""Einstein rate equation for the normalised inversion.

``dn/dt = -A (n + 1) - R n`` with pump rate ``R = 2 B W(omega21)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.constants as const

DEBYE = 3.33564e-30  # C m


@dataclass(frozen=True)
class EREParams:
    A: float = 1.0
    R: float = 1.0
    n0: float = -1.0

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError(f"A must be > 0, got {self.A}")
        if self.R < 0:
            raise ValueError(f"R must be >= 0, got {self.R}")
        if not -1.0 <= self.n0 <= 1.0:
            raise ValueError(f"n0 must lie in [-1, 1], got {self.n0}")

    @property
    def n_inf(self):
        return -self.A / (self.A + self.R)

    @property
    def rate(self):
        return self.A + self.R


@dataclass(frozen=True)
class SIConstants:
    """SI inputs: dipole moment (C m), transition angular frequency (rad/s)."""

    mu: float = DEBYE
    omega21: float = 2.0 * math.pi * const.c / 589e-9
    hbar: float = const.hbar
    eps0: float = const.epsilon_0
    c: float = const.c

    def __post_init__(self):
        for name in ("mu", "omega21", "hbar", "eps0", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


def solve_ere(params, t_grid):
    """Closed form ``n_inf + (n0 - n_inf) exp(-(A + R) t)``."""
    t = np.asarray(t_grid, dtype=float)
    return params.n_inf + (params.n0 - params.n_inf) * np.exp(-params.rate * t)


def solve_weak_field(params, t_grid, eps=1.0):
    """First-order weak-field trace.

    With ``R = eps R1`` the first-order coefficient obeys
    ``dn1/dt = -A (n1 + 1) + R1``; it is returned with ``n1(0)`` chosen so
    that ``-1 + eps (n1(0) + 1) = n0``. The first-order inversion is
    ``-1 + eps (n1 + 1)``, whose steady value is ``-1 + R / A``.
    """
    t = np.asarray(t_grid, dtype=float)
    R1 = params.R / eps
    start = -1.0 + (params.n0 + 1.0) / eps
    steady = -1.0 + R1 / params.A
    return steady + (start - steady) * np.exp(-params.A * t)


def first_order_inversion(params, t_grid):
    return solve_weak_field(params, t_grid, eps=1.0)


def solve_ere_numeric(A, R, n0, t_grid, substeps=16):
    """RK4 solution for a pump rate ``R(t)`` (callable or constant)."""
    t = np.asarray(t_grid, dtype=float)
    rate = R if callable(R) else (lambda _t, _r=float(R): _r)

    def f(tt, n):
        return -A * (n + 1.0) - rate(tt) * n

    out = np.empty_like(t)
    out[0] = n = float(n0)
    for i in range(1, t.size):
        h = (t[i] - t[i - 1]) / substeps
        tt = t[i - 1]
        for _ in range(substeps):
            k1 = f(tt, n)
            k2 = f(tt + 0.5 * h, n + 0.5 * h * k1)
            k3 = f(tt + 0.5 * h, n + 0.5 * h * k2)
            k4 = f(tt + h, n + h * k3)
            n += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            tt += h
        out[i] = n
    return out


def b_coefficient(si):
    """Einstein B for isotropic light, ``pi mu^2 / (3 hbar^2 eps0)``.

    SI units m^3 J^-1 s^-2: multiplied by a spectral energy density per unit
    angular frequency (J s m^-3) it gives a rate in s^-1.
    """
    return math.pi * si.mu ** 2 / (3.0 * si.hbar ** 2 * si.eps0)


def a_from_b(si, B=None):
    """A implied by ``A / B = hbar omega21^3 / (pi^2 c^3)``."""
    B = b_coefficient(si) if B is None else B
    return B * si.hbar * si.omega21 ** 3 / (math.pi ** 2 * si.c ** 3)


def ab_ratio_check(si, A_input):
    """Compare a phenomenological A with the one implied by B; informational."""
    B = b_coefficient(si)
    implied = a_from_b(si, B)
    return {"B": B, "A_input": float(A_input), "A_implied": implied,
            "deviation": (float(A_input) - implied) / implied}
