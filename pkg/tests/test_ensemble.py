import csv
import math

import numpy as np
import pytest

from blochere import ensemble as en
from blochere.field import MODE_SUM, DriveConfig
from blochere.spectrum import SpectrumSpec, analytic_correlation

DARK = SpectrumSpec.lorentzian(1.0, 0.0)
LAGS = np.arange(0, 41) * 0.025


class TestRunEnsemble:
    def test_drive_off(self):
        tr = en.run_ensemble(DARK, DriveConfig(), 50, 2.0)
        assert np.all(tr.n_bar == -1.0)
        assert np.all(tr.stderr == 0.0)

    def test_pure_decay_from_excited(self):
        tr = en.run_ensemble(DARK, DriveConfig(), 4, 2.0, initial=(1.0, 0j))
        np.testing.assert_allclose(tr.n_bar, 2 * np.exp(-tr.time_grid) - 1, atol=1e-6)

    @pytest.mark.parametrize("cfg", [DriveConfig(), DriveConfig(MODE_SUM, n_modes=128)])
    def test_worker_and_block_independence(self, cfg):
        spec = SpectrumSpec.lorentzian(5.0, 1.0)
        a = en.run_ensemble(spec, cfg, 300, 1.0, seed=4, workers=1)
        b = en.run_ensemble(spec, cfg, 300, 1.0, seed=4, workers=3, block_size=70)
        np.testing.assert_array_equal(a.n_bar, b.n_bar)
        np.testing.assert_array_equal(a.stderr, b.stderr)

    def test_seed_changes_result(self):
        spec = SpectrumSpec.lorentzian(5.0, 1.0)
        a = en.run_ensemble(spec, DriveConfig(), 50, 0.5, seed=1)
        b = en.run_ensemble(spec, DriveConfig(), 50, 0.5, seed=2)
        assert not np.array_equal(a.n_bar, b.n_bar)

    def test_bounds_and_monotone(self):
        spec = SpectrumSpec.lorentzian(50.0, 0.5)
        tr = en.run_ensemble(spec, DriveConfig(), 2000, 4.0, seed=3, n_out=41)
        assert np.all(np.abs(tr.n_bar) <= 1 + tr.stderr)
        assert np.all(np.diff(tr.n_bar) >= -3 * tr.stderr[1:])

    def test_auto_dt_rule(self):
        spec = SpectrumSpec.lorentzian(50.0, 0.1)
        dt = en.auto_dt(spec, 0.0, DriveConfig(), 8.0)
        assert dt <= 0.05 / 50 + 1e-15
        assert round(8.0 / dt) * dt == pytest.approx(8.0)

    def test_too_few_atoms(self):
        with pytest.raises(ValueError):
            en.run_ensemble(DARK, DriveConfig(), 1, 1.0)

    def test_csv_round_trip(self, tmp_path):
        spec = SpectrumSpec.lorentzian(5.0, 1.0)
        tr = en.run_ensemble(spec, DriveConfig(), 40, 0.5, seed=9, n_out=11)
        path = tmp_path / "t.csv"
        tr.to_csv(path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["t", "n_bar", "stderr"]
        back = np.array([[float(x) for x in r] for r in rows[1:]])
        np.testing.assert_array_equal(back[:, 1], tr.n_bar)


class TestFit:
    def test_recovers_exact_curve(self):
        t = np.linspace(0, 5, 101)
        y = -0.8 + (-1 + 0.8) * np.exp(-1.3 * t)
        tr = en.EnsembleTrace(t, y, np.full(t.size, 1e-3), 100, 0)
        k, ninf, _, _ = en.fit_relaxation(tr, n0=-1.0)
        assert k == pytest.approx(1.3, rel=1e-6)
        assert ninf == pytest.approx(-0.8, rel=1e-6)
        k2, ninf2, _, _ = en.fit_relaxation(tr, t_min=1.0)
        assert k2 == pytest.approx(1.3, rel=1e-6)


class TestCorrelations:
    def test_drive_off(self):
        est = en.estimate_correlations(DARK, DriveConfig(), 40, 1.0, LAGS, dt=0.025)
        assert np.all(est.c_hat == 0)
        assert en.decorrelation_residual(est).max_abs == 0.0

    @pytest.mark.parametrize("cfg", [DriveConfig(), DriveConfig(MODE_SUM, n_modes=2048)])
    def test_field_only_matches_closed_form(self, cfg):
        spec = SpectrumSpec.lorentzian(1.0, 0.2, omega0=-2.0)
        lags = np.linspace(0, 3, 13)
        est = en.estimate_correlations(spec, cfg, 5000, 3.0, lags, seed=5, omega21=0.0,
                                       dt=0.05, inversion=False)
        ref = analytic_correlation(spec, 0.0, lags).values
        assert np.all(np.abs(est.c_hat - ref) <= 3.5 * est.stderr)
        assert est.cn_hat is None

    def test_frozen_inversion_limit(self):
        spec = SpectrumSpec.lorentzian(5.0, 1e-3)
        est = en.estimate_correlations(spec, DriveConfig(), 500, 1.0, LAGS, seed=2, dt=0.005)
        c0 = abs(est.c_hat[0])
        assert np.max(np.abs(est.cn_hat + est.c_hat)) <= 0.01 * c0

    def test_decorrelation_ordering(self):
        bb = en.estimate_correlations(SpectrumSpec.lorentzian(50.0, 0.5), DriveConfig(), 2000,
                                      1.0, LAGS, seed=1, dt=0.001)
        nb = en.estimate_correlations(SpectrumSpec.lorentzian(1.0, 10.0), DriveConfig(), 2000,
                                      1.0, LAGS, seed=1, dt=0.005)
        d_bb = en.decorrelation_residual(bb).max_abs
        d_nb = en.decorrelation_residual(nb).max_abs
        assert d_bb <= 0.1
        assert d_nb > 5 * d_bb

    def test_reduction_property(self):
        # n_bar obeys the ensemble equation rebuilt from the measured C_n
        spec, dt, n = SpectrumSpec.lorentzian(5.0, 1.0), 0.002, 4000
        lags = np.arange(0, 501) * dt
        est = en.estimate_correlations(spec, DriveConfig(), n, 1.0, lags, seed=2, dt=dt)
        tr = en.run_ensemble(spec, DriveConfig(), n, 1.1, seed=2, dt=dt, n_out=551,
                             keep_atoms=True)
        d = (tr.atoms[:, 501] - tr.atoms[:, 499]) / (2 * dt)
        se = d.std(ddof=1) / math.sqrt(n)
        assert abs(en.reconstructed_rate(est) - d.mean()) <= 3 * se

    def test_grid_mismatch(self):
        with pytest.raises(en.GridMismatch):
            en.estimate_correlations(DARK, DriveConfig(), 20, 1.0, [0.0, 0.013], dt=0.025)
        with pytest.raises(ValueError):
            en.estimate_correlations(DARK, DriveConfig(), 20, 1.0, [2.0], dt=0.025)

    def test_insufficient_realizations(self):
        spec = SpectrumSpec.lorentzian(1.0, 0.2)
        with pytest.raises(en.InsufficientRealizations):
            en.estimate_correlations(spec, DriveConfig(), 40, 1.0, LAGS, dt=0.025,
                                     inversion=False, stderr_cap=1e-9)

    def test_worker_independence(self):
        spec = SpectrumSpec.lorentzian(5.0, 1.0)
        a = en.estimate_correlations(spec, DriveConfig(), 300, 1.0, LAGS, seed=3, dt=0.005)
        b = en.estimate_correlations(spec, DriveConfig(), 300, 1.0, LAGS, seed=3, dt=0.005,
                                     workers=4, block_size=64)
        np.testing.assert_array_equal(a.c_hat, b.c_hat)
        np.testing.assert_array_equal(a.cn_hat, b.cn_hat)

    def test_csv_columns(self, tmp_path):
        spec = SpectrumSpec.lorentzian(5.0, 1.0)
        est = en.estimate_correlations(spec, DriveConfig(), 40, 1.0, LAGS, dt=0.005)
        est.to_csv(tmp_path / "c.csv")
        head = open(tmp_path / "c.csv").readline().strip()
        assert head == "lag,ReC,ImC,ReCn,ImCn,stderr"
