"""Radon transforms and the radiation profile against independent oracles."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma

from quasiwave import fields, radon


def gaussian_slice_oracle(s):
    """Line integral of exp(-|x|^2) over {x . w = s} by adaptive quadrature."""
    val, err = quad(lambda t: math.exp(-(s * s + t * t)), -8.0, 8.0,
                    epsabs=1e-13, epsrel=1e-12, limit=200)
    assert err < 1e-9
    return val


class TestRadonTransform:
    def test_zero_field(self):
        data = fields.data_preset("zero")
        s = np.linspace(-5, 5, 41)
        sl = radon.radon_transform(data.u1, np.array([1.0, 0.0]), s, 6.0)
        assert np.all(sl.values == 0.0)
        assert np.all(sl.derivative_values == 0.0)

    def test_gaussian_closed_form(self, gaussian_data):
        s = np.linspace(-7.0, 7.0, 281)
        omega = np.array([0.6, 0.8])
        sl = radon.radon_transform(gaussian_data.u1, omega, s,
                                   gaussian_data.support_radius)
        exact = np.sqrt(np.pi) * np.exp(-s * s) * (np.abs(s) < 6.0)
        assert np.max(np.abs(sl.values - exact)) < 1e-6

    def test_gaussian_matches_quad_oracle(self, gaussian_data):
        omega = np.array([0.0, 1.0])
        for s0 in (0.0, 0.7, 2.3):
            sl = radon.radon_transform(gaussian_data.u1, omega,
                                       np.array([s0 - 0.1, s0, s0 + 0.1]), 6.0)
            assert abs(sl.values[1] - gaussian_slice_oracle(s0)) < 1e-8

    def test_support_exact_zero(self, gaussian_data):
        s = np.array([-8.0, -6.0, 6.0, 6.5, 9.0])
        sl = radon.radon_transform(gaussian_data.u1, np.array([1.0, 0.0]), s,
                                   gaussian_data.support_radius)
        assert np.all(sl.values == 0.0)

    def test_translation_equivariance(self):
        a = np.array([0.8, -0.5])
        shifted = fields.truncated_gaussian(center=tuple(a))
        base = fields.truncated_gaussian()
        omega = np.array([np.cos(0.4), np.sin(0.4)])
        s = np.linspace(-3.0, 3.0, 61)
        sl_shift = radon.radon_transform(shifted, omega, s, 8.0,
                                         check_support=False)
        sl_base = radon.radon_transform(base, omega, s - np.dot(a, omega), 8.0,
                                        check_support=False)
        assert np.max(np.abs(sl_shift.values - sl_base.values)) < 1e-9

    def test_rotation_equivariance(self):
        bump = fields.anisotropic_bump()
        alpha = 0.7

        def rotated(x, y):
            ca, sa = np.cos(alpha), np.sin(alpha)
            return bump(ca * x + sa * y, -sa * x + ca * y)

        rot_field = fields.ScalarField(rotated, label="rotated")
        theta = 1.1
        omega = np.array([np.cos(theta), np.sin(theta)])
        omega_back = np.array([np.cos(theta - alpha), np.sin(theta - alpha)])
        s = np.linspace(-4.0, 4.0, 81)
        sl_rot = radon.radon_transform(rot_field, omega, s, 6.0,
                                       need_derivative=False)
        sl_base = radon.radon_transform(bump, omega_back, s, 6.0,
                                        need_derivative=False)
        assert np.max(np.abs(sl_rot.values - sl_base.values)) < 1e-8

    def test_mass_consistency(self, gaussian_data):
        s = np.linspace(-6.0, 6.0, 601)
        omega = np.array([np.cos(2.0), np.sin(2.0)])
        sl = radon.radon_transform(gaussian_data.u1, omega, s, 6.0)
        mass_1d = np.trapezoid(sl.values, s)
        mass_2d = radon.plane_integral(gaussian_data.u1, 6.0)
        assert abs(mass_1d - mass_2d) < 1e-8
        assert abs(mass_2d - np.pi) < 1e-10

    def test_line_step_refinement_second_order(self):
        # polynomial bump has finite smoothness at its support edge, so the
        # trapezoid error is measurable and must drop at least 2nd order
        bump = fields.polynomial_bump(radius=1.0)
        s = np.array([0.3])
        omega = np.array([1.0, 0.0])
        exact = quad(lambda t: max(1.0 - 0.09 - t * t, 0.0) ** 3,
                     -1.0, 1.0)[0]
        errs = []
        for h in (0.2, 0.1, 0.05):
            sl = radon.radon_transform(bump, omega, s, 1.0, line_step=h,
                                       check_support=False,
                                       need_derivative=False)
            errs.append(abs(sl.values[0] - exact))
        assert errs[0] / errs[1] > 3.5
        assert errs[1] / errs[2] > 3.5

    def test_non_unit_omega_rejected(self, gaussian_data):
        with pytest.raises(ValueError):
            radon.radon_transform(gaussian_data.u1, np.array([1.0, 1.0]),
                                  np.linspace(-1, 1, 11), 6.0)

    def test_support_violation_flagged(self):
        wide = fields.ScalarField(lambda x, y: np.exp(-(x * x + y * y) / 50.0),
                                  label="wide")
        with pytest.raises(fields.SupportError):
            radon.radon_transform(wide, np.array([1.0, 0.0]),
                                  np.linspace(-1, 1, 11), 2.0,
                                  need_derivative=False)


def profile_value_oracle():
    """F0(0) for u1 = exp(-|x|^2) by substitution s = w^2 and quadrature."""
    inner = quad(lambda w: math.exp(-w ** 4), 0.0, 8.0)[0]   # = Gamma(1/4)/2
    return 2.0 * math.sqrt(math.pi) * inner / (2.0 ** 1.5 * math.pi)


class TestFriedlanderProfile:
    def test_zero_data(self):
        prof = radon.friedlander_profile(
            fields.data_preset("zero"),
            sigma_grid=np.linspace(-55.0, 6.0, 200),
            theta_grid=np.linspace(0, 2 * np.pi, 5))
        assert np.all(prof.F0 == 0.0)

    def test_profile_value_oracle(self, gaussian_profile_small):
        closed = math.sqrt(math.pi) * gamma(0.25) / (2.0 * 2.0 ** 1.5 * math.pi)
        assert abs(profile_value_oracle() - closed) < 1e-12
        prof = gaussian_profile_small
        i0 = np.searchsorted(prof.sigma_grid, 0.0)
        assert prof.sigma_grid[i0] == 0.0
        assert np.max(np.abs(prof.F0[i0, :] - closed)) < 1e-6

    def test_support_and_periodicity(self, gaussian_profile_small):
        prof = gaussian_profile_small
        tail = prof.F0[prof.sigma_grid >= prof.support_radius - 1e-12, :]
        assert np.all(tail == 0.0)
        assert np.max(np.abs(prof.F0[:, 0] - prof.F0[:, -1])) < 1e-10

    def test_far_field_decay_invariant(self, gaussian_profile_small):
        prof = gaussian_profile_small
        n = prof.sigma_grid.size
        left = np.max(np.abs(prof.F0[: n // 10, :]))
        mid = np.max(np.abs(prof.F0[4 * n // 10: 6 * n // 10, :]))
        assert left < mid

    def test_sigma_above_support_rejected(self, gaussian_data):
        with pytest.raises(ValueError):
            radon.friedlander_profile(gaussian_data,
                                      sigma_grid=np.array([0.0, 7.0]),
                                      theta_grid=np.array([0.0]))

    def test_min_derivative_matches_quad_oracle(self, gaussian_profile_small):
        # independent oracle: minimize the regularized-integral derivative
        prof = gaussian_profile_small
        j = np.argmin(prof.dF0_dsigma[:, 0])
        from oracles import GAUSSIAN_MIN_DF0, GAUSSIAN_SIGMA0
        assert abs(prof.dF0_dsigma[j, 0] - GAUSSIAN_MIN_DF0) < 2e-4
        assert abs(prof.sigma_grid[j] - GAUSSIAN_SIGMA0) < 0.06


class TestProfileDerivative:
    def test_constant_profile(self):
        prof = radon.synthetic_profile(
            lambda s, th: np.full_like(s, 0.7),
            sigma_grid=np.linspace(-5, 5, 101),
            theta_grid=np.linspace(0, 2 * np.pi, 5))
        prof_fd = radon.profile_derivative(prof)
        assert np.max(np.abs(prof_fd.dF0_dsigma)) < 1e-11

    def test_gaussian_derivative_value(self):
        prof = radon.synthetic_profile(
            lambda s, th: np.exp(-s * s),
            sigma_grid=np.arange(-6.0, 6.0 + 1e-9, 0.05),
            theta_grid=np.linspace(0, 2 * np.pi, 5))
        fd = radon.profile_derivative(prof)
        i = np.argmin(np.abs(fd.sigma_grid - 1.0 / np.sqrt(2.0)))
        expected = -np.sqrt(2.0) * np.exp(-0.5)
        assert abs(fd.dF0_dsigma[i, 0] - (-2.0 * fd.sigma_grid[i]
                                          * np.exp(-fd.sigma_grid[i] ** 2))) < 1e-5
        assert abs(fd.dF0_dsigma[i, 0] - expected) < 2e-4

    def test_fourth_order_refinement(self):
        errs = []
        for step in (0.1, 0.05):
            grid = np.arange(-6.0, 6.0 + 1e-9, step)
            prof = radon.synthetic_profile(
                lambda s, th: np.exp(-s * s), sigma_grid=grid,
                theta_grid=np.linspace(0, 2 * np.pi, 3))
            fd = radon.profile_derivative(prof)
            exact = -2.0 * grid * np.exp(-grid * grid)
            errs.append(np.max(np.abs(fd.dF0_dsigma[:, 0] - exact)))
        ratio = errs[0] / errs[1]
        assert 10.0 < ratio < 24.0   # 4th order: ~16x per halving

    def test_too_few_samples_rejected(self):
        prof = radon.DirectionalProfile(
            sigma_grid=np.linspace(0, 1, 4),
            theta_grid=np.linspace(0, 2 * np.pi, 3),
            F0=np.zeros((4, 3)))
        with pytest.raises(ValueError):
            radon.profile_derivative(prof)


class TestDecayCheck:
    def test_exponents(self, gaussian_profile_small):
        out = radon.decay_check(gaussian_profile_small, orders=(0, 1))
        assert abs(out[0]["exponent"] + 0.5) < 0.1
        assert out[0]["r2"] >= 0.9
        assert abs(out[1]["exponent"] + 1.5) < 0.15
        assert out[1]["r2"] >= 0.9

    def test_zero_profile_diagnostic(self):
        grid = np.linspace(-60.0, 5.0, 400)
        prof = radon.synthetic_profile(lambda s, th: np.zeros_like(s),
                                       sigma_grid=grid,
                                       theta_grid=np.linspace(0, 2 * np.pi, 3))
        out = radon.decay_check(prof)
        assert out[0]["status"] == "signal too small"

    def test_short_grid_rejected(self, synthetic_profile):
        with pytest.raises(ValueError):
            radon.decay_check(synthetic_profile)


class TestSerialization:
    def test_profile_json_roundtrip(self, tmp_path, gaussian_profile_small):
        path = tmp_path / "profile.json"
        gaussian_profile_small.save_json(path)
        back = radon.DirectionalProfile.from_json(path)
        assert np.array_equal(back.F0, gaussian_profile_small.F0)
        assert np.array_equal(back.sigma_grid, gaussian_profile_small.sigma_grid)
        assert np.array_equal(back.dF0_dsigma,
                              gaussian_profile_small.dF0_dsigma)

    def test_grid_data_roundtrip(self, tmp_path, gaussian_data):
        path = tmp_path / "data.csv"
        fields.save_grid_data(path, gaussian_data, extent=6.5, n=261)
        loaded = fields.load_grid_data(path, support_radius=6.0)
        x = np.linspace(-2, 2, 17)
        orig = gaussian_data.u1(x, x * 0.5)
        back = loaded.u1(x, x * 0.5)
        assert np.max(np.abs(orig - back)) < 1e-6
