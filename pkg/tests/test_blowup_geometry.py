"""Fold charts, condition (H), blowup point, and rate fits."""

import math

import numpy as np
import pytest

from quasiwave import radon, asymptotic, blowup_geometry as bg
from oracles import SYNTH_TAU0, MODULATED_TAU0


@pytest.fixture(scope="module")
def modulated_setup(modulated_profile):
    pred = asymptotic.predict_lifespan(modulated_profile)
    chart = bg.build_chart(modulated_profile, pred)
    return modulated_profile, pred, chart


class TestSigmaOfX:
    def test_identity_at_zero_tau(self, synthetic_profile):
        assert bg.sigma_of_X(0.7, 0.3, 0.0, synthetic_profile) == 0.7

    def test_support_fixed_point(self, synthetic_profile):
        M = synthetic_profile.support_radius
        assert abs(bg.sigma_of_X(M, 0.0, 0.3, synthetic_profile) - M) < 1e-9

    def test_closed_form_instance(self, synthetic_profile):
        # sigma = 0 maps to X = 0 + 0.3 * exp(0) = 0.3
        assert abs(bg.sigma_of_X(0.3, 0.0, 0.3, synthetic_profile)) < 1e-10

    def test_tau1_guard(self, synthetic_profile):
        with pytest.raises(bg.ChartError):
            bg.sigma_of_X(0.0, 0.0, 2.0, synthetic_profile, tau0=SYNTH_TAU0)


class TestPhi0:
    def test_initial_plane(self, modulated_setup):
        _, _, chart = modulated_setup
        X = np.linspace(chart.X_grid[0], chart.X_grid[-1], 7)
        assert np.max(np.abs(bg.phi0(X, 0.1, 0.0, chart) - X)) < 1e-12

    def test_small_tau1_limit(self, modulated_profile):
        pred = asymptotic.predict_lifespan(modulated_profile)
        chart = bg.build_chart(modulated_profile, pred, tau1=1e-9)
        X, Y, T = 0.5, 0.2, 0.3
        expected = X + T * asymptotic.c_of_theta(Y, 1, 1) \
            * modulated_profile.f0_func(np.array([X]), np.array([Y]))[0]
        assert abs(bg.phi0(X, Y, T, chart) - expected) < 1e-7

    def test_dX_phi_vanishes_at_fold(self, modulated_setup):
        _, _, chart = modulated_setup
        Xb, th0, T_top = chart.fold_point
        h = 1e-5
        dphi = (chart.phi0_eval(Xb + h, th0, T_top)
                - chart.phi0_eval(Xb - h, th0, T_top)) / (2 * h)
        assert abs(dphi) < 1e-5


class TestGlueChart:
    def test_absent_local_phi_is_phi0(self, modulated_setup):
        _, _, chart = modulated_setup
        X = np.linspace(chart.X_grid[0], chart.X_grid[-1], 9)
        for T in (0.0, chart.eta, 3.0 * chart.eta):
            a = chart.phi_a_eval(X, chart.fold_point[1], T)
            b = chart.phi0_eval(X, chart.fold_point[1], T)
            assert np.array_equal(a, b)

    def test_plateau_beyond_two_eta(self, modulated_profile):
        pred = asymptotic.predict_lifespan(modulated_profile)
        base = bg.build_chart(modulated_profile, pred, n_T=65)
        # inject a perturbed early-time sample; past 2 eta the glue is phi0
        local = base.phi + 0.01
        glued = bg.glue_chart(base, local_phi=local)
        k_hi = np.nonzero(base.T_grid >= 2.0 * base.eta + 1e-12)[0]
        assert np.allclose(glued.phi[:, :, k_hi], base.phi[:, :, k_hi])
        k0 = 0   # at T = 0 the glue keeps the injected local solution
        assert np.allclose(glued.phi[:, :, k0], base.phi[:, :, k0] + 0.01)

    def test_eta_guard(self, modulated_profile):
        pred = asymptotic.predict_lifespan(modulated_profile)
        with pytest.raises(bg.ChartError):
            bg.build_chart(modulated_profile, pred,
                           eta=1.1 * (pred.tau0 - 0.25 * pred.tau0))

    def test_fold_region_normal_form(self, modulated_setup):
        # near the fold point phi_a(X, Y, T) = X + T W(X, Y)
        _, _, chart = modulated_setup
        Xb, th0, T_top = chart.fold_point
        X = Xb + np.linspace(-0.05, 0.05, 5)
        W = chart.W_eval(X, th0)
        vals = chart.phi_a_eval(X, th0, T_top)
        assert np.max(np.abs(vals - (X + T_top * W))) < 1e-12


class TestConditionH:
    def test_all_subchecks_pass(self, modulated_setup):
        _, _, chart = modulated_setup
        report = bg.check_condition_H(chart)
        assert report["all_pass"]
        assert all(report["subchecks"][k]["pass"] for k in "abcde")

    def test_fold_time_identity(self, modulated_setup):
        _, _, chart = modulated_setup
        report = bg.check_condition_H(chart)
        assert report["fold_time_identity"]["relative_gap"] < 1e-4

    def test_mixed_derivative_value(self, modulated_setup):
        _, pred, chart = modulated_setup
        report = bg.check_condition_H(chart)
        T_top = chart.fold_point[2]
        assert report["subchecks"]["c"]["dXT_phi"] == pytest.approx(
            -1.0 / T_top, rel=1e-4)

    def test_chain_rule_identity(self, modulated_setup):
        # d_X W = c dF0 / (1 + tau1 c dF0) at the transported point
        prof, pred, chart = modulated_setup
        X = np.linspace(chart.X_grid[10], chart.X_grid[-10], 9)
        Y = chart.fold_point[1] + 0.1
        h = 1e-6
        dW_fd = (chart.W_eval(X + h, Y) - chart.W_eval(X - h, Y)) / (2 * h)
        sig = bg.sigma_of_X(X, Y, chart.tau1, prof)
        c = asymptotic.c_of_theta(Y, 1.0, 1.0)
        df0 = prof.df0_func(sig, np.full_like(sig, Y))
        expected = c * df0 / (1.0 + chart.tau1 * c * df0)
        assert np.max(np.abs(dW_fd - expected)) < 1e-6

    def test_minimizer_transport(self, modulated_setup):
        prof, pred, chart = modulated_setup
        report = bg.check_condition_H(chart)
        mini = report["fold_time_identity"]["minimizer"]
        c0 = asymptotic.c_of_theta(pred.theta0, 1.0, 1.0)
        F00 = prof.f0_func(np.array([pred.sigma0]),
                           np.array([pred.theta0]))[0]
        Xbar = pred.sigma0 + c0 * F00 * chart.tau1
        assert abs(mini["X"] - Xbar) < 1e-4
        assert abs(mini["Y"] - pred.theta0) < 1e-4

    def test_degenerate_not_checkable(self, synthetic_profile):
        pred = asymptotic.predict_lifespan(synthetic_profile)
        chart = bg.build_chart(synthetic_profile, pred)
        with pytest.raises(bg.ChartError, match="degenerate"):
            bg.check_condition_H(chart)

    def test_nonnegative_dX_phi_on_box(self, modulated_setup):
        _, _, chart = modulated_setup
        dphi = np.gradient(chart.phi, chart.X_grid, axis=0)
        assert np.min(dphi) > -1e-3

    def test_report_serialization(self, tmp_path, modulated_setup):
        _, _, chart = modulated_setup
        report = bg.check_condition_H(chart)
        path = tmp_path / "h.json"
        bg.save_h_report(report, path)
        import json
        raw = json.loads(path.read_text())
        assert raw["all_pass"] is True
        assert set(raw["subchecks"]) == set("abcde")

    def test_chart_csv_export(self, tmp_path, modulated_setup):
        _, _, chart = modulated_setup
        path = tmp_path / "chart.csv"
        chart.export_csv(path)
        rows = np.genfromtxt(path, delimiter=",", names=True)
        assert set(rows.dtype.names) == {"X", "Y", "phi", "dphi_dX"}


class TestBlowupPoint:
    def test_formula_instance(self):
        pred = asymptotic.LifespanPrediction(
            sigma0=0.5, theta0=0.3, min_value=-1.0, tau0=1.0, hessian=None,
            eigenvalues=(1.0, 1.0), degenerate=False, uniqueness_gap=1.0,
            candidates=[], no_blowup=False, c1=1.0, c2=1.0)
        bp = bg.blowup_point(pred, 0.1)
        assert bp.T_pred == pytest.approx(100.0)
        assert bp.x[0] == pytest.approx((100.0 + 0.5) * math.cos(0.3))

    def test_modulated_theta_component(self, modulated_setup):
        _, pred, _ = modulated_setup
        bp = bg.blowup_point(pred, 0.2)
        assert bp.theta0 == pytest.approx(0.0, abs=1e-6)
        assert bp.T_pred == pytest.approx((MODULATED_TAU0 / 0.2) ** 2, rel=1e-9)

    def test_degenerate_returns_pair(self, synthetic_profile):
        pred = asymptotic.predict_lifespan(synthetic_profile)
        bp = bg.blowup_point(pred, 0.1)
        assert bp.degenerate
        assert bp.theta0 is None
        assert bp.x is None
        assert bp.sigma0 == pytest.approx(pred.sigma0)


class TestRateFit:
    def test_identity(self):
        t = np.linspace(0.0, 0.99, 400)
        out = bg.rate_fit(t, 1.0 / (1.0 - t), 1.0)
        assert out["ut_exponent"] == pytest.approx(-1.0, abs=1e-12)
        assert out["lower_bound_margin"] == pytest.approx(1.0, abs=1e-9)

    def test_offset_series_window(self):
        t = np.linspace(0.0, 0.998, 6000)
        g = 1.0 / (1.0 - t) + 5.0
        out = bg.rate_fit(t, g, 1.0, window_frac=0.05)
        assert -1.1 < out["ut_exponent"] < -0.9

    def test_insufficient_samples(self):
        t = np.linspace(0.0, 0.5, 8)
        with pytest.raises(ValueError, match="insufficient"):
            bg.rate_fit(t, 1.0 / (1.0 - t), 1.0)

    def test_radial_run_exponents(self, radial_study):
        # detected runs: fitted d_t u exponent within the blowup-rate band
        for row in radial_study.rows:
            assert row.detected
            assert -1.3 < row.rate_exponent < -0.7
