import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blochere import bloch, field
from blochere.bloch import AtomState
from blochere.spectrum import SpanWarning, SpectrumSpec

# n(60) for constant resonant a=0.3, A=1, from scipy solve_ivp (rtol 1e-12)
NSS_A03 = -0.5813953488371252


def random_drive(seed, n_modes=48, gamma=2.0, R0=1.0):
    # narrow span on purpose: a smooth random drive, not a faithful spectrum
    spec = SpectrumSpec.lorentzian(gamma, R0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SpanWarning)
        return field.synth_mode_sum(spec, 0.0, n_modes, (seed, 0), span_width=10)


class TestSteps:
    def test_pure_decay_population(self):
        s = AtomState(1.0, 0.0)
        dt, A = 0.01, 1.0
        for _ in range(100):
            s = bloch.step_population_form(s, None, dt, A)
        assert s.rho22 == pytest.approx(math.exp(-1.0), rel=1e-9)
        assert s.t == pytest.approx(1.0)

    def test_coherence_decay(self):
        s = AtomState(0.5, 0.5, 0.3 + 0.1j)
        for _ in range(200):
            s = bloch.step_population_form(s, None, 0.01, 1.0)
        assert s.rho21 == pytest.approx((0.3 + 0.1j) * math.exp(-1.0), rel=1e-9)

    def test_inversion_decay(self):
        st_ = (0.0, 0j)
        for k in range(100):
            st_ = bloch.step_inversion_form(st_, None, 0.02, 1.0, t=0.02 * k)
        assert st_[0] == pytest.approx(math.exp(-2.0) - 1.0, rel=1e-9)

    def test_ground_state_fixed(self):
        tr = bloch.integrate((-1.0, 0j), None, 5.0, 0.05)
        assert np.all(tr.n == -1.0)

    def test_step_too_large(self):
        p = field.ModeSumProcess([1.0], [0.0], [0.0])
        with pytest.raises(bloch.StepSizeError):
            bloch.step_inversion_form((-1.0, 0j), p, 0.2, 1.0)
        with pytest.raises(bloch.StepSizeError):
            bloch.check_step(0.0)

    def test_bad_state(self):
        with pytest.raises(bloch.InvariantError):
            AtomState(0.5, 0.6).check()
        with pytest.raises(bloch.InvariantError):
            AtomState(0.5, 0.5, 0.6).check()

    def test_t_end_not_on_grid(self):
        with pytest.raises(bloch.StepSizeError):
            bloch.integrate((-1.0, 0j), None, 1.0, 0.3)


class TestIntegrate:
    def test_rabi_oscillation(self):
        a = 0.7
        p = field.ModeSumProcess([a], [0.0], [0.0])
        tr = bloch.integrate((-1.0, 0j), p, 5.0, 0.01, A=0.0)
        np.testing.assert_allclose(tr.n, -np.cos(2 * a * tr.t), atol=1e-8)

    def test_constant_drive_steady_state(self):
        p = field.ModeSumProcess([0.3], [0.0], [0.0])
        tr = bloch.integrate((-1.0, 0j), p, 60.0, 0.01, sampler=[60.0])
        assert tr.n[-1] == pytest.approx(NSS_A03, abs=1e-9)
        assert bloch.steady_state_constant_drive(0.3)[0] == pytest.approx(NSS_A03, abs=1e-12)

    def test_strong_drive_frequency(self):
        a = 10.0
        p = field.ModeSumProcess([a], [0.0], [0.0])
        dt = 0.002
        tr = bloch.integrate((-1.0, 0j), p, 20.0, dt)
        x = tr.n - tr.n.mean()
        spec = np.abs(np.fft.rfft(x))
        f = np.fft.rfftfreq(x.size, dt) * 2 * math.pi
        assert f[np.argmax(spec[1:]) + 1] == pytest.approx(2 * a, rel=0.02)

    def test_dual_form_equivalence(self):
        p = random_drive(1)
        dt = bloch.max_stable_dt(1.0, p.freq_bound, p.omega_bound)
        steps = math.ceil(10.0 / dt)
        dt = 10.0 / steps
        a = bloch.integrate((-1.0, 0j), p, 10.0, dt, form=bloch.INVERSION)
        b = bloch.integrate((-1.0, 0j), p, 10.0, dt, form=bloch.POPULATION)
        assert np.max(np.abs(a.n - b.n)) <= 1e-8
        assert b.max_trace_error <= 1e-9 * steps

    def test_sampler_order_preserved(self):
        p = random_drive(2)
        dt = 0.002
        full = bloch.integrate((-1.0, 0j), p, 2.0, dt)
        some = bloch.integrate((-1.0, 0j), p, 2.0, dt, sampler=[1.5, 0.0, 0.5])
        np.testing.assert_allclose(some.n, full.n[[750, 0, 250]])

    def test_off_grid_sampler(self):
        with pytest.raises(bloch.StepSizeError):
            bloch.integrate((-1.0, 0j), None, 1.0, 0.1, sampler=[0.05])

    def test_colored_noise_drive(self):
        spec = SpectrumSpec.lorentzian(5.0, 1.0)
        p = field.synth_colored_noise(spec, 0.0, (0, 0), 0.005)
        a = bloch.integrate((-1.0, 0j), p, 1.0, 0.005)
        b = bloch.integrate((-1.0, 0j), p, 1.0, 0.005)
        np.testing.assert_array_equal(a.n, b.n)
        np.testing.assert_allclose(a.omega, field.sample(
            field.synth_colored_noise(spec, 0.0, (0, 0), 0.005), a.t))


@given(st.integers(0, 10 ** 6), st.floats(0.2, 3.0))
def test_contractivity(seed, R0):
    p = random_drive(seed, n_modes=24, R0=R0)
    dt = bloch.max_stable_dt(1.0, p.freq_bound, p.omega_bound)
    dt = 3.0 / math.ceil(3.0 / dt)
    tr = bloch.integrate((-1.0, 0j), p, 3.0, dt, form=bloch.POPULATION)
    rho22, rho11 = 0.5 * (1 + tr.n), 0.5 * (1 - tr.n)
    assert np.all(np.abs(tr.n) <= 1 + 1e-7)
    assert np.all(np.abs(tr.rho21) ** 2 <= rho22 * rho11 + 1e-7)
    assert tr.max_trace_error <= 1e-9 * round(3.0 / dt)


class TestMemoryKernel:
    def test_initial_rate(self):
        p = random_drive(3)
        assert bloch.memory_kernel_rhs(([0.0], [0.2]), p, 0.0, A=1.0) == pytest.approx(-1.2)

    def test_no_drive_is_decay(self):
        t = np.linspace(0, 2, 201)
        n = np.exp(-t) - 1
        om = np.zeros(t.size, dtype=complex)
        for tt in (0.5, 1.0, 2.0):
            k = int(round(tt * 100))
            assert bloch.memory_kernel_rhs((t, n), om, tt) == pytest.approx(-(n[k] + 1))

    def test_short_history(self):
        with pytest.raises(bloch.HistoryError):
            bloch.memory_kernel_rhs(([0.0, 0.5], [-1.0, -1.0]), np.zeros(2), 1.0)

    def test_rhs_matches_bloch_derivative(self):
        p = random_drive(4)
        dt = 0.002
        tr = bloch.integrate((-1.0, 0j), p, 2.0, dt)
        k = 700
        deriv = (tr.n[k + 1] - tr.n[k - 1]) / (2 * dt)
        rhs = bloch.memory_kernel_rhs((tr.t[:k + 1], tr.n[:k + 1]), p, tr.t[k])
        assert rhs == pytest.approx(deriv, abs=1e-4)

    def test_trajectory_matches_integrator(self):
        p = random_drive(5)
        t, n = bloch.integrate_memory_kernel(p, 5.0, 0.01)
        dt = bloch.max_stable_dt(1.0, p.freq_bound, p.omega_bound)
        dt = 0.01 / math.ceil(0.01 / dt)
        ref = bloch.integrate((-1.0, 0j), p, 5.0, dt, sampler=t)
        assert np.max(np.abs(n - ref.n)) <= 1e-6
