"""Inner loops: drive synthesis and fixed-step RK4 for batches of atoms.

Every kernel exists twice. ``*_jit`` variants are plain loops compiled by
numba when enabled; ``*_np`` variants vectorise over the atom axis and loop
over time in Python. :func:`rk4_batch`, :func:`ou_fill` and
:func:`mode_sum_fill` dispatch on :data:`blochere._accel.USE_NUMBA`.

Array conventions
-----------------
drive : complex (B, S)
    Rabi samples per atom. With ``held=True`` column ``i`` is the value held
    over step ``i`` (S = steps + 1). With ``held=False`` the columns are the
    half-step grid ``t0 + i*h/2`` (S = 2*steps + 1).
rec_map : int64 (steps + 1,)
    Output slot for each grid index of the chunk, or -1.
"""
import numpy as np
from scipy.signal import lfilter

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------- drives


def _ou_fill_py(start, xi, rho, scale, out):
    n_atoms, n_steps = xi.shape
    for a in range(n_atoms):
        y = start[a]
        for k in range(n_steps):
            y = rho * y + scale * xi[a, k]
            out[a, k] = y


_ou_fill_jit = njit(_ou_fill_py)


def _ou_fill_np(start, xi, rho, scale, out):
    zi = (rho * start)[:, None]
    out[:], _ = lfilter([1.0], [1.0, -rho], scale * xi, axis=1, zi=zi)


def ou_fill(start, xi, rho, scale, out):
    """Exact AR(1) update ``y[k] = rho*y[k-1] + scale*xi[k]`` from ``start``."""
    if USE_NUMBA:
        _ou_fill_jit(start, xi, complex(rho), float(scale), out)
    else:
        _ou_fill_np(start, xi, complex(rho), float(scale), out)


def _mode_sum_py(amps, freqs, phases, times, out):
    n_atoms, n_modes = amps.shape
    for a in range(n_atoms):
        for k in range(times.shape[0]):
            t = times[k]
            re = 0.0
            im = 0.0
            for j in range(n_modes):
                arg = freqs[a, j] * t + phases[a, j]
                re += amps[a, j] * np.cos(arg)
                im += amps[a, j] * np.sin(arg)
            out[a, k] = re + 1j * im


_mode_sum_jit = njit(_mode_sum_py)


def _mode_sum_np(amps, freqs, phases, times, out):
    out[:] = 0.0
    for j in range(amps.shape[1]):
        arg = freqs[:, j, None] * times[None, :] + phases[:, j, None]
        out += amps[:, j, None] * (np.cos(arg) + 1j * np.sin(arg))


def mode_sum_fill(amps, freqs, phases, times, out):
    """``out[a, k] = sum_j amps[a,j] exp(i(freqs[a,j] t_k + phases[a,j]))``."""
    if USE_NUMBA:
        _mode_sum_jit(amps, freqs, phases, times, out)
    else:
        _mode_sum_np(amps, freqs, phases, times, out)


# ---------------------------------------------------------------- RK4


@njit
def _rhs_inv(n, r, om, A):
    dn = -A * (n + 1.0) + 4.0 * (om.real * r.imag - om.imag * r.real)
    dr = -0.5 * A * r - 1j * om * n
    return dn, dr


@njit
def _rhs_pop(p2, p1, r, om, A):
    x = 2.0 * (om.real * r.imag - om.imag * r.real)
    d2 = -A * p2 + x
    d1 = A * p2 - x
    dr = -0.5 * A * r - 1j * om * (p2 - p1)
    return d2, d1, dr


def _violation(n, r):
    # n outside [-1, 1] or |rho21|^2 above rho22*rho11
    v = abs(n) - 1.0
    w = r.real * r.real + r.imag * r.imag - 0.25 * (1.0 + n) * (1.0 - n)
    return max(v, w, 0.0)


_violation_jit = njit(_violation)


def _rk4_inv_py(n, r, drive, held, h, A, rec_map, final, out_n, out_r, out_om, viol):
    n_atoms = n.shape[0]
    n_steps = rec_map.shape[0] - 1
    for a in range(n_atoms):
        na = n[a]
        ra = r[a]
        vmax = viol[a]
        for k in range(n_steps + 1):
            if held:
                o1 = drive[a, k]
                o2 = o1
                o3 = o1
            else:
                o1 = drive[a, 2 * k]
                if k < n_steps:
                    o2 = drive[a, 2 * k + 1]
                    o3 = drive[a, 2 * k + 2]
                else:
                    o2 = o1
                    o3 = o1
            slot = rec_map[k]
            if slot >= 0 and (k < n_steps or final):
                out_n[a, slot] = na
                out_r[a, slot] = ra
                out_om[a, slot] = o1
            if k == n_steps:
                break
            k1n, k1r = _rhs_inv(na, ra, o1, A)
            k2n, k2r = _rhs_inv(na + 0.5 * h * k1n, ra + 0.5 * h * k1r, o2, A)
            k3n, k3r = _rhs_inv(na + 0.5 * h * k2n, ra + 0.5 * h * k2r, o2, A)
            k4n, k4r = _rhs_inv(na + h * k3n, ra + h * k3r, o3, A)
            na = na + h / 6.0 * (k1n + 2.0 * k2n + 2.0 * k3n + k4n)
            ra = ra + h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
            v = _violation_jit(na, ra)
            if v > vmax:
                vmax = v
        n[a] = na
        r[a] = ra
        viol[a] = vmax


_rk4_inv_jit = njit(_rk4_inv_py)


def _rk4_pop_py(p2, p1, r, drive, held, h, A, rec_map, final, out_n, out_r, out_om, viol,
                trace_err):
    n_atoms = p2.shape[0]
    n_steps = rec_map.shape[0] - 1
    for a in range(n_atoms):
        x2 = p2[a]
        x1 = p1[a]
        ra = r[a]
        vmax = viol[a]
        tmax = trace_err[a]
        for k in range(n_steps + 1):
            if held:
                o1 = drive[a, k]
                o2 = o1
                o3 = o1
            else:
                o1 = drive[a, 2 * k]
                if k < n_steps:
                    o2 = drive[a, 2 * k + 1]
                    o3 = drive[a, 2 * k + 2]
                else:
                    o2 = o1
                    o3 = o1
            slot = rec_map[k]
            if slot >= 0 and (k < n_steps or final):
                out_n[a, slot] = x2 - x1
                out_r[a, slot] = ra
                out_om[a, slot] = o1
            if k == n_steps:
                break
            a2, a1, ar = _rhs_pop(x2, x1, ra, o1, A)
            b2, b1, br = _rhs_pop(x2 + 0.5 * h * a2, x1 + 0.5 * h * a1, ra + 0.5 * h * ar, o2, A)
            c2, c1, cr = _rhs_pop(x2 + 0.5 * h * b2, x1 + 0.5 * h * b1, ra + 0.5 * h * br, o2, A)
            d2, d1, dr = _rhs_pop(x2 + h * c2, x1 + h * c1, ra + h * cr, o3, A)
            x2 = x2 + h / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
            x1 = x1 + h / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
            ra = ra + h / 6.0 * (ar + 2.0 * br + 2.0 * cr + dr)
            v = _violation_jit(x2 - x1, ra)
            if v > vmax:
                vmax = v
            e = abs(x2 + x1 - 1.0)
            if e > tmax:
                tmax = e
        p2[a] = x2
        p1[a] = x1
        r[a] = ra
        viol[a] = vmax
        trace_err[a] = tmax


_rk4_pop_jit = njit(_rk4_pop_py)


def _stages_np(drive, held, k, n_steps):
    if held:
        o = drive[:, k]
        return o, o, o
    o1 = drive[:, 2 * k]
    if k < n_steps:
        return o1, drive[:, 2 * k + 1], drive[:, 2 * k + 2]
    return o1, o1, o1


def _f_inv_np(n, r, om, A):
    dn = -A * (n + 1.0) + 4.0 * (om.real * r.imag - om.imag * r.real)
    dr = -0.5 * A * r - 1j * om * n
    return dn, dr


def _f_pop_np(p2, p1, r, om, A):
    x = 2.0 * (om.real * r.imag - om.imag * r.real)
    return -A * p2 + x, A * p2 - x, -0.5 * A * r - 1j * om * (p2 - p1)


def _viol_np(n, r):
    v = np.abs(n) - 1.0
    w = r.real * r.real + r.imag * r.imag - 0.25 * (1.0 + n) * (1.0 - n)
    return np.maximum(np.maximum(v, w), 0.0)


def _rk4_inv_np(n, r, drive, held, h, A, rec_map, final, out_n, out_r, out_om, viol):
    n_steps = rec_map.shape[0] - 1
    for k in range(n_steps + 1):
        o1, o2, o3 = _stages_np(drive, held, k, n_steps)
        slot = rec_map[k]
        if slot >= 0 and (k < n_steps or final):
            out_n[:, slot] = n
            out_r[:, slot] = r
            out_om[:, slot] = o1
        if k == n_steps:
            break
        k1n, k1r = _f_inv_np(n, r, o1, A)
        k2n, k2r = _f_inv_np(n + 0.5 * h * k1n, r + 0.5 * h * k1r, o2, A)
        k3n, k3r = _f_inv_np(n + 0.5 * h * k2n, r + 0.5 * h * k2r, o2, A)
        k4n, k4r = _f_inv_np(n + h * k3n, r + h * k3r, o3, A)
        n[:] = n + h / 6.0 * (k1n + 2.0 * k2n + 2.0 * k3n + k4n)
        r[:] = r + h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
        np.maximum(viol, _viol_np(n, r), out=viol)


def _rk4_pop_np(p2, p1, r, drive, held, h, A, rec_map, final, out_n, out_r, out_om, viol,
                trace_err):
    n_steps = rec_map.shape[0] - 1
    for k in range(n_steps + 1):
        o1, o2, o3 = _stages_np(drive, held, k, n_steps)
        slot = rec_map[k]
        if slot >= 0 and (k < n_steps or final):
            out_n[:, slot] = p2 - p1
            out_r[:, slot] = r
            out_om[:, slot] = o1
        if k == n_steps:
            break
        a2, a1, ar = _f_pop_np(p2, p1, r, o1, A)
        b2, b1, br = _f_pop_np(p2 + 0.5 * h * a2, p1 + 0.5 * h * a1, r + 0.5 * h * ar, o2, A)
        c2, c1, cr = _f_pop_np(p2 + 0.5 * h * b2, p1 + 0.5 * h * b1, r + 0.5 * h * br, o2, A)
        d2, d1, dr = _f_pop_np(p2 + h * c2, p1 + h * c1, r + h * cr, o3, A)
        p2[:] = p2 + h / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
        p1[:] = p1 + h / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
        r[:] = r + h / 6.0 * (ar + 2.0 * br + 2.0 * cr + dr)
        np.maximum(viol, _viol_np(p2 - p1, r), out=viol)
        np.maximum(trace_err, np.abs(p2 + p1 - 1.0), out=trace_err)


def rk4_inversion(n, r, drive, held, h, A, rec_map, final, out_n, out_r, out_om, viol):
    """Advance ``(n, rho21)`` in place over ``len(rec_map) - 1`` steps."""
    fn = _rk4_inv_jit if USE_NUMBA else _rk4_inv_np
    fn(n, r, drive, bool(held), float(h), float(A), rec_map, bool(final),
       out_n, out_r, out_om, viol)


def rk4_population(p2, p1, r, drive, held, h, A, rec_map, final, out_n, out_r, out_om,
                   viol, trace_err):
    """Advance ``(rho22, rho11, rho21)`` in place; see :func:`rk4_inversion`."""
    fn = _rk4_pop_jit if USE_NUMBA else _rk4_pop_np
    fn(p2, p1, r, drive, bool(held), float(h), float(A), rec_map, bool(final),
       out_n, out_r, out_om, viol, trace_err)
