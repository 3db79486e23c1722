"""Fold charts at the blowup point and the geometric normal-form checks.

With the base time tau1 below the fold time tau0, the chart coordinates are
X (profile offset at tau1), Y (angle) and T = tau - tau1.  The transported
amplitude and chart map are

    W(X, Y) = c(Y) F0(sigma(X, Y, tau1), Y),
    phi0(X, Y, T) = X + T W(X, Y),

where sigma(X, Y, tau1) inverts X = sigma + c(Y) F0(sigma, Y) tau1.  The
fold conditions checked at the point (Xbar0, theta0, tau0 - tau1):

    (a) d_X phi >= 0 on the whole box,
    (b) its zero set is the single cell containing the fold point,
    (c) d2_{T X} phi < 0 there,
    (d) grad_{X,Y} d_X phi = 0 there,
    (e) hess_{X,Y} d_X phi positive definite there,

together with the fold-time identity min d_X W = -1/(tau0 - tau1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .radon import DirectionalProfile
from .asymptotic import (LifespanPrediction, c_of_theta,
                         invert_characteristic_map, predict_lifespan)
from .fields import chi
from . import fitting


class ChartError(ValueError):
    pass


def sigma_of_X(X, Y, tau1, profile: DirectionalProfile, c1=1.0, c2=1.0,
               tol=1e-12, tau0=None):
    """Invert X = sigma + c(Y) F0(sigma, Y) tau1 (monotone below the fold)."""
    if tau0 is not None and tau1 >= tau0:
        raise ChartError("tau1 must stay below the fold time")
    scalar = np.isscalar(X)
    X_arr = np.atleast_1d(np.asarray(X, dtype=float))
    out = invert_characteristic_map(profile, Y, tau1, X_arr, c1, c2, tol=tol)
    return float(out[0]) if scalar else out


@dataclass
class BlowupChart:
    """Sampled chart quantities on an (X, Y, T) box around the fold point."""

    profile: DirectionalProfile
    prediction: LifespanPrediction
    tau1: float
    eta: float
    X_grid: np.ndarray
    Y_grid: np.ndarray
    T_grid: np.ndarray
    W: np.ndarray                      # (nX, nY)
    v: np.ndarray                      # amplitude F0(sigma(X,Y,tau1), Y)
    phi: np.ndarray                    # (nX, nY, nT)
    fold_point: tuple                  # (Xbar0, theta0, tau0 - tau1)
    local_phi: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    @property
    def c1(self):
        return self.prediction.c1

    @property
    def c2(self):
        return self.prediction.c2

    def W_eval(self, X, Y):
        sig = sigma_of_X(np.asarray(X, dtype=float), Y, self.tau1,
                         self.profile, self.c1, self.c2)
        th = np.broadcast_to(np.asarray(Y, dtype=float),
                             np.shape(sig)) if np.ndim(sig) else Y
        return c_of_theta(th, self.c1, self.c2) \
            * self.profile.eval_F0(np.atleast_1d(sig),
                                   np.broadcast_to(np.asarray(Y, dtype=float),
                                                   np.atleast_1d(sig).shape))

    def phi0_eval(self, X, Y, T):
        return np.asarray(X, dtype=float) + np.asarray(T, dtype=float) \
            * self.W_eval(X, Y)

    def phi_a_eval(self, X, Y, T):
        """Glued chart; with no early-time sample it coincides with phi0."""
        base = self.phi0_eval(X, Y, T)
        if self.local_phi is None:
            return base
        # blend the sampled early-time solution for T below 2 eta
        w = chi(np.asarray(T, dtype=float) / self.eta)
        local = self._interp_local(X, Y, T)
        return w * local + (1.0 - w) * base

    def _interp_local(self, X, Y, T):
        from scipy.interpolate import RegularGridInterpolator
        interp = RegularGridInterpolator(
            (self.X_grid, self.Y_grid, self.T_grid), self.local_phi,
            bounds_error=False, fill_value=None)
        pts = np.broadcast_arrays(np.asarray(X, dtype=float),
                                  np.asarray(Y, dtype=float),
                                  np.asarray(T, dtype=float))
        stacked = np.stack([p.ravel() for p in pts], axis=-1)
        return interp(stacked).reshape(pts[0].shape)

    def export_csv(self, path, t_index=-1):
        """Grid dump of d_X phi at one chart time, for level-set plots."""
        k = int(t_index) if t_index >= 0 else self.phi.shape[2] + int(t_index)
        dphi = np.gradient(self.phi[:, :, k], self.X_grid, axis=0)
        Xg, Yg = np.meshgrid(self.X_grid, self.Y_grid, indexing="ij")
        rows = np.column_stack([Xg.ravel(), Yg.ravel(),
                                self.phi[:, :, k].ravel(), dphi.ravel()])
        np.savetxt(path, rows, delimiter=",", header="X,Y,phi,dphi_dX",
                   comments="")


def build_chart(profile: DirectionalProfile, prediction: LifespanPrediction,
                tau1=None, eta=None, half_width_X=1.25, half_width_Y=0.6,
                n_X=101, n_Y=81, n_T=33, local_phi=None):
    """Sample the fold chart around the transported minimizer.

    Defaults: tau1 = 0.25 tau0 and eta = 0.05 (tau0 - tau1); the box spans
    the fold point with the requested half-widths, clipped at X = M.
    """
    if prediction.no_blowup:
        raise ChartError("no finite fold time: chart undefined")
    tau0 = prediction.tau0
    if tau1 is None:
        tau1 = 0.25 * tau0
    if not 0.0 < tau1 < tau0:
        raise ChartError("tau1 must lie in (0, tau0)")
    T_top = tau0 - tau1
    if eta is None:
        eta = 0.05 * T_top
    if eta >= T_top:
        raise ChartError("glueing width eta must stay below tau0 - tau1")

    c1, c2 = prediction.c1, prediction.c2
    s0, th0 = prediction.sigma0, prediction.theta0
    c0 = float(c_of_theta(th0, c1, c2))
    F00 = float(profile.eval_F0(np.array([s0]), np.array([th0]))[0])
    Xbar0 = s0 + c0 * F00 * tau1

    M = profile.support_radius
    X_lo = Xbar0 - half_width_X
    X_hi = min(Xbar0 + half_width_X, M)
    X_grid = np.linspace(X_lo, X_hi, n_X)
    Y_grid = np.linspace(th0 - half_width_Y, th0 + half_width_Y, n_Y)
    T_grid = np.linspace(0.0, T_top, n_T)

    Xg, Yg = np.meshgrid(X_grid, Y_grid, indexing="ij")
    sig = invert_characteristic_map(profile, Yg.ravel(), tau1, Xg.ravel(),
                                    c1, c2).reshape(Xg.shape)
    F = profile.eval_F0(sig, Yg)
    W = c_of_theta(Yg, c1, c2) * F
    phi = Xg[:, :, None] + T_grid[None, None, :] * W[:, :, None]
    if local_phi is not None:
        w = chi(T_grid / eta)[None, None, :]
        phi = w * np.asarray(local_phi, dtype=float) + (1.0 - w) * phi

    return BlowupChart(profile=profile, prediction=prediction, tau1=tau1,
                       eta=eta, X_grid=X_grid, Y_grid=Y_grid, T_grid=T_grid,
                       W=W, v=F, phi=phi,
                       fold_point=(float(Xbar0), float(th0), float(T_top)),
                       local_phi=(None if local_phi is None
                                  else np.asarray(local_phi, dtype=float)),
                       metadata={"tau0": tau0})


def phi0(X, Y, T, chart: BlowupChart):
    """Explicit fold chart X + T c(Y) F0(sigma(X, Y, tau1), Y)."""
    return chart.phi0_eval(X, Y, T)


def glue_chart(chart: BlowupChart, local_phi=None):
    """Blend an early-time sampled solution into the chart (T <= 2 eta).

    Without a sample the glue is exact: phi_a == phi0 everywhere.
    """
    if local_phi is None:
        return chart
    local = np.asarray(local_phi, dtype=float)
    if local.shape != chart.phi.shape:
        raise ChartError("local_phi must match the chart box sampling")
    return build_chart(chart.profile, chart.prediction, tau1=chart.tau1,
                       eta=chart.eta,
                       half_width_X=float(chart.X_grid[-1] - chart.fold_point[0]),
                       half_width_Y=float(chart.Y_grid[-1] - chart.fold_point[1]),
                       n_X=chart.X_grid.size, n_Y=chart.Y_grid.size,
                       n_T=chart.T_grid.size, local_phi=local)


def _fd_refined(fn, x0, h0, refine, order=2, max_level=8):
    """Central finite difference with step refinement until change < refine."""
    prev = None
    h = h0
    for _ in range(max_level):
        if order == 1:
            val = (fn(x0 + h) - fn(x0 - h)) / (2.0 * h)
        else:
            val = (fn(x0 + h) - 2.0 * fn(x0) + fn(x0 - h)) / (h * h)
        if prev is not None and abs(val - prev) < refine * max(1.0, abs(val)):
            return val
        prev = val
        h *= 0.5
    return prev


def check_condition_H(chart: BlowupChart, refine=1e-6, zero_band=None,
                      eigen_floor_factor=1e-6):
    """Verify the five fold conditions on the glued chart.

    Derivatives are centered finite differences refined until they settle to
    `refine` (relative).  Returns a report dict; raises ChartError when the
    underlying prediction is degenerate (conditions not checkable).
    """
    pred = chart.prediction
    if pred.degenerate:
        raise ChartError("H not checkable: degenerate minimizer certificate")
    Xb, th0, T_top = chart.fold_point
    hx = chart.X_grid[1] - chart.X_grid[0]
    hy = chart.Y_grid[1] - chart.Y_grid[0]

    # (a) nonnegative d_X phi over the sampled box
    dphi = np.gradient(chart.phi, chart.X_grid, axis=0)
    min_dphi = float(np.min(dphi))
    tol_a = 10.0 * hx * hx * max(1.0, float(np.max(np.abs(chart.W))))
    pass_a = min_dphi >= -tol_a

    # locate the fold cell precisely via min of d_X W
    def dW_dX(x, y):
        return _fd_refined(lambda q: float(chart.W_eval(np.array([q]), y)[0]),
                           x, hx, refine, order=1)

    # (c) mixed derivative d/dT d/dX phi at the fold equals d_X W there
    mixed = dW_dX(Xb, th0)
    pass_c = mixed < 0.0

    # (d) gradient of d_X phi in (X, Y) vanishes at the fold point
    gx = _fd_refined(lambda q: dW_dX(q, th0), Xb, 2 * hx, refine, order=1)
    gy = _fd_refined(lambda q: dW_dX(Xb, q), th0, 2 * hy, refine, order=1)
    scale_d = max(abs(mixed) / min(chart.X_grid[-1] - chart.X_grid[0], 1.0),
                  1e-12)
    tol_d = 200.0 * refine * scale_d + 1e-6 * abs(mixed)
    pass_d = (abs(gx) * T_top <= max(tol_d, 5e-4)
              and abs(gy) * T_top <= max(tol_d, 5e-4))

    # (e) Hessian of d_X phi in (X, Y) positive definite at the fold point
    hxx = _fd_refined(lambda q: dW_dX(q, th0), Xb, 2 * hx, refine, order=2)
    hyy = _fd_refined(lambda q: dW_dX(Xb, q), th0, 2 * hy, refine, order=2)
    hq = 2.0 * max(hx, hy)
    hxy = (dW_dX(Xb + hq, th0 + hq) - dW_dX(Xb + hq, th0 - hq)
           - dW_dX(Xb - hq, th0 + hq) + dW_dX(Xb - hq, th0 - hq)) / (4 * hq * hq)
    hess = T_top * np.array([[hxx, hxy], [hxy, hyy]])
    eigs = np.linalg.eigvalsh(0.5 * (hess + hess.T))
    eig_floor = eigen_floor_factor * abs(mixed)
    pass_e = bool(np.min(eigs) > eig_floor)

    # (b) the zero set clusters at the fold cell: every cell inside the zero
    # band must sit where the fold normal form d_X phi ~ |mixed| (T_top - T)
    # + quadratic(X - Xb, Y - th0) predicts values inside the band
    grid_floor = float(max(min_dphi, 0.0))
    zb = zero_band if zero_band is not None else 2.0 * grid_floor + 1e-4 / T_top
    ii, jj, kk = np.nonzero(dphi <= zb)
    if ii.size == 0:
        pass_b = False
        witness_b = "no cell reaches the zero band"
    else:
        dX = chart.X_grid[ii] - Xb
        dY = chart.Y_grid[jj] - th0
        dT = T_top - chart.T_grid[kk]
        model = (0.5 * (hess[0, 0] * dX * dX + 2.0 * hess[0, 1] * dX * dY
                        + hess[1, 1] * dY * dY) + abs(mixed) * dT)
        worst = float(np.max(model))
        contains_fold = bool(np.min(np.abs(dX) <= hx)
                             and np.min(model) <= 2.0 * zb)
        pass_b = worst <= 4.0 * zb and contains_fold
        witness_b = {"cells": int(ii.size), "worst_model_value": worst,
                     "band": float(zb),
                     "max_span": {"X": float(np.max(np.abs(dX))),
                                  "Y": float(np.max(np.abs(dY))),
                                  "T": float(np.max(dT))}}

    # fold-time identity: min d_X W = -1/(tau0 - tau1)
    dW_grid = np.gradient(chart.W, chart.X_grid, axis=0)
    i0, j0 = np.unravel_index(np.argmin(dW_grid), dW_grid.shape)
    x_star, y_star = chart.X_grid[i0], chart.Y_grid[j0]
    for _ in range(40):
        g1 = _fd_refined(lambda q: dW_dX(q, y_star), x_star, hx, refine, 1)
        h1 = _fd_refined(lambda q: dW_dX(q, y_star), x_star, hx, refine, 2)
        g2 = _fd_refined(lambda q: dW_dX(x_star, q), y_star, hy, refine, 1)
        h2 = _fd_refined(lambda q: dW_dX(x_star, q), y_star, hy, refine, 2)
        sx = g1 / h1 if h1 > 0 else 0.0
        sy = g2 / h2 if h2 > 0 else 0.0
        x_star -= np.clip(sx, -hx, hx)
        y_star -= np.clip(sy, -hy, hy)
        if max(abs(sx), abs(sy)) < refine:
            break
    min_dW = dW_dX(x_star, y_star)
    fold_identity_gap = abs(min_dW + 1.0 / T_top) * T_top

    report = {
        "fold_point": {"X": Xb, "theta": th0, "T": T_top},
        "tau1": chart.tau1,
        "eta": chart.eta,
        "subchecks": {
            "a": {"pass": bool(pass_a), "min_dX_phi": min_dphi,
                  "tolerance": tol_a},
            "b": {"pass": bool(pass_b), "witness": witness_b,
                  "zero_band": zero_band},
            "c": {"pass": bool(pass_c), "dXT_phi": mixed},
            "d": {"pass": bool(pass_d), "grad": [gx * T_top, gy * T_top]},
            "e": {"pass": bool(pass_e), "eigenvalues": eigs.tolist(),
                  "floor": eig_floor},
        },
        "fold_time_identity": {
            "min_dX_W": float(min_dW),
            "expected": -1.0 / T_top,
            "relative_gap": float(fold_identity_gap),
            "minimizer": {"X": float(x_star), "Y": float(y_star)},
        },
        "all_pass": bool(pass_a and pass_b and pass_c and pass_d and pass_e),
    }
    return report


def save_h_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)


@dataclass
class BlowupPoint:
    T_pred: float
    sigma0: float
    theta0: Optional[float]
    x: Optional[tuple]
    tau0: float
    degenerate: bool

    def to_json_dict(self):
        return {"T_pred": self.T_pred, "sigma0": self.sigma0,
                "theta0": self.theta0, "x": None if self.x is None
                else list(self.x), "tau0": self.tau0,
                "degenerate": self.degenerate}


def blowup_point(prediction: LifespanPrediction, epsilon):
    """Leading-order spacetime blowup point (T, x) = ((tau0/eps)^2, ...)."""
    if prediction.no_blowup:
        raise ChartError("no blowup predicted")
    T = (prediction.tau0 / epsilon) ** 2
    if prediction.degenerate:
        return BlowupPoint(T_pred=T, sigma0=prediction.sigma0, theta0=None,
                           x=None, tau0=prediction.tau0, degenerate=True)
    r = T + prediction.sigma0
    th = prediction.theta0
    return BlowupPoint(T_pred=T, sigma0=prediction.sigma0, theta0=th,
                       x=(r * math.cos(th), r * math.sin(th)),
                       tau0=prediction.tau0, degenerate=False)


def rate_fit(times, sup_ut, T_est, sup_grad=None, dt_floor=None,
             window_frac=0.2, min_samples=10):
    """Near-blowup rate exponents of the sup norms against (T_est - t).

    Fit window: dt_floor * 5 <= T_est - t <= window_frac * T_est.  Also
    reports the lower-bound margin min (T_est - t) * |d_t u|_sup over the
    window (positive and bounded away from zero at a genuine blowup).
    """
    times = np.asarray(times, dtype=float)
    sup_ut = np.asarray(sup_ut, dtype=float)
    if dt_floor is None:
        diffs = np.diff(times)
        dt_floor = float(np.min(diffs[diffs > 0])) if diffs.size else 0.0
    dist = T_est - times
    mask = (dist >= 5.0 * dt_floor) & (dist <= window_frac * T_est) \
        & np.isfinite(sup_ut) & (sup_ut > 0)
    if np.count_nonzero(mask) < min_samples:
        raise ValueError("insufficient samples in the rate-fit window")
    p_ut, r2_ut, _ = fitting.loglog_fit(dist[mask], sup_ut[mask])
    out = {"ut_exponent": p_ut, "ut_r2": r2_ut,
           "lower_bound_margin": float(np.min(dist[mask] * sup_ut[mask])),
           "n_samples": int(np.count_nonzero(mask))}
    if sup_grad is not None:
        sup_grad = np.asarray(sup_grad, dtype=float)
        ok = mask & np.isfinite(sup_grad) & (sup_grad > 0)
        if np.count_nonzero(ok) >= min_samples:
            p_g, r2_g, _ = fitting.loglog_fit(dist[ok], sup_grad[ok])
            out["grad_exponent"] = p_g
            out["grad_r2"] = r2_g
    return out
