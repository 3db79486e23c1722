"""Radon transforms and the Friedlander radiation profile of 2-D data.

The directional profile is the half-order fractional integral of the slice
function,

    F0(sigma, theta) = (2^{3/2} pi)^{-1} *
        int_sigma^M [R(s, w; u1) - d_s R(s, w; u0)] / sqrt(s - sigma) ds,

where R(s, w; v) is the line integral of v over {x . w = s}.  The weak
singularity is removed by substituting s = sigma + w^2 on the panel next to
the lower limit; away from it the integrand is smooth in s and composite
Gauss-Legendre panels apply directly.  Both F0 and the slice values are
exactly zero for offsets >= M because the data is supported in B(0, M).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .fields import InitialData, ScalarField, SupportError
from . import fitting

PROFILE_COEF = 1.0 / (2.0 ** 1.5 * np.pi)

# Reference resolutions (used by the acceptance suite).
DEFAULT_LINE_STEP_FACTOR = 0.01   # line quadrature step = factor * M
DEFAULT_SLICE_STEP = 0.02         # fine s-grid for slice splines
DEFAULT_PANEL_WIDTH = 0.5         # Gauss-Legendre panel width in s
DEFAULT_SIGMA_MIN = -60.0
DEFAULT_SIGMA_STEP = 0.05
DEFAULT_N_THETA = 256

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


class QuadratureError(RuntimeError):
    """Quadrature refinements failed to settle below tolerance."""


def _line_points(omega, s_values, t_values):
    ox, oy = omega
    px, py = -oy, ox
    X = s_values[:, None] * ox + t_values[None, :] * px
    Y = s_values[:, None] * oy + t_values[None, :] * py
    return X, Y


def _check_unit(omega):
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (2,) or abs(omega[0] ** 2 + omega[1] ** 2 - 1.0) > 1e-12:
        raise ValueError("omega must be a unit direction vector")
    return omega


@dataclass
class RadonSlice:
    """Sampled line integrals R(s, omega; v) and their s-derivative."""

    omega: np.ndarray
    s_grid: np.ndarray
    values: np.ndarray
    derivative_values: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)


def radon_transform(data_field: ScalarField, omega, s_grid, support_radius,
                    line_step=None, check_support=True, need_derivative=True):
    """Line integrals of a compactly supported field over {x . omega = s}.

    The derivative slice is the transform of the directional derivative
    omega . grad v evaluated by the same quadrature, never by differencing
    the values.  Offsets with |s| >= support_radius return exactly zero.
    """
    omega = _check_unit(omega)
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.ndim != 1 or np.any(np.diff(s_grid) <= 0):
        raise ValueError("s_grid must be 1-D and strictly increasing")
    M = float(support_radius)
    if check_support:
        _check_field_support(data_field, M)

    h = line_step if line_step is not None else DEFAULT_LINE_STEP_FACTOR * M
    n_t = int(np.ceil(2.0 * M / h)) + 1
    t = np.linspace(-M, M, n_t)

    values = np.zeros_like(s_grid)
    deriv = np.zeros_like(s_grid) if need_derivative else None
    inside = np.abs(s_grid) < M
    if np.any(inside):
        X, Y = _line_points(omega, s_grid[inside], t)
        values[inside] = np.trapezoid(data_field(X, Y), t, axis=1)
        if need_derivative:
            gx, gy = data_field.gradient(X, Y)
            deriv[inside] = np.trapezoid(omega[0] * gx + omega[1] * gy, t, axis=1)
    return RadonSlice(omega=omega, s_grid=s_grid, values=values,
                      derivative_values=deriv,
                      metadata={"line_step": float(t[1] - t[0]),
                                "support_radius": M})


def _check_field_support(data_field, M, tol=1e-12):
    ang = np.linspace(0.0, 2.0 * np.pi, 48, endpoint=False)
    for factor in (1.0 + 1e-9, 1.05, 1.3):
        x = factor * M * np.cos(ang)
        y = factor * M * np.sin(ang)
        if np.max(np.abs(data_field(x, y))) > tol:
            raise SupportError(
                f"field support exceeds declared radius {M} (factor {factor})")


def plane_integral(data_field: ScalarField, support_radius, step=None):
    """2-D trapezoid quadrature of the field over its supporting square."""
    M = float(support_radius)
    h = step if step is not None else DEFAULT_LINE_STEP_FACTOR * M
    n = int(np.ceil(2.0 * M / h)) + 1
    ax = np.linspace(-M, M, n)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    vals = data_field(X, Y)
    return np.trapezoid(np.trapezoid(vals, ax, axis=1), ax, axis=0)


@dataclass
class DirectionalProfile:
    """Sampled radiation profile F0(sigma, theta) and d_sigma F0.

    theta_grid includes both endpoints 0 and 2 pi; the last column repeats the
    first up to quadrature roundoff (periodicity witness).  Optional analytic
    callbacks take precedence over spline interpolation when evaluating off
    the grid (synthetic profiles).
    """

    sigma_grid: np.ndarray
    theta_grid: np.ndarray
    F0: np.ndarray
    dF0_dsigma: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)
    f0_func: Optional[Callable] = None
    df0_func: Optional[Callable] = None

    def __post_init__(self):
        self._spline_F0 = None
        self._spline_dF0 = None

    @property
    def support_radius(self):
        return float(self.metadata.get("support_radius", self.sigma_grid[-1]))

    def _wrap_spline(self, values):
        # pad 3 columns on each side for periodic bicubic interpolation
        th = self.theta_grid
        period = 2.0 * np.pi
        th_ext = np.concatenate([th[-4:-1] - period, th, th[1:4] + period])
        vals_ext = np.concatenate([values[:, -4:-1], values, values[:, 1:4]], axis=1)
        return RectBivariateSpline(self.sigma_grid, th_ext, vals_ext, kx=3, ky=3)

    def eval_F0(self, sigma, theta):
        sigma = np.asarray(sigma, dtype=float)
        theta = np.broadcast_to(np.asarray(theta, dtype=float), sigma.shape).copy()
        if self.f0_func is not None:
            return self.f0_func(sigma, theta)
        if self._spline_F0 is None:
            self._spline_F0 = self._wrap_spline(self.F0)
        out = np.zeros_like(sigma)
        lo, hi = self.sigma_grid[0], self.support_radius
        inside = (sigma >= lo) & (sigma < hi)
        th = np.mod(theta, 2.0 * np.pi)
        if np.any(inside):
            out[inside] = self._spline_F0.ev(sigma[inside], th[inside])
        return out

    def eval_dF0(self, sigma, theta):
        sigma = np.asarray(sigma, dtype=float)
        theta = np.broadcast_to(np.asarray(theta, dtype=float), sigma.shape).copy()
        if self.df0_func is not None:
            return self.df0_func(sigma, theta)
        if self.dF0_dsigma is None:
            raise ValueError("profile derivative not filled; run profile_derivative")
        if self._spline_dF0 is None:
            self._spline_dF0 = self._wrap_spline(self.dF0_dsigma)
        out = np.zeros_like(sigma)
        lo, hi = self.sigma_grid[0], self.support_radius
        inside = (sigma >= lo) & (sigma < hi)
        th = np.mod(theta, 2.0 * np.pi)
        if np.any(inside):
            out[inside] = self._spline_dF0.ev(sigma[inside], th[inside])
        return out

    def to_json_dict(self):
        return {
            "sigma_grid": self.sigma_grid.tolist(),
            "theta_grid": self.theta_grid.tolist(),
            "F0": self.F0.tolist(),
            "dF0_dsigma": None if self.dF0_dsigma is None else self.dF0_dsigma.tolist(),
            "metadata": self.metadata,
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            raw = json.load(fh)
        dF0 = raw.get("dF0_dsigma")
        return cls(sigma_grid=np.asarray(raw["sigma_grid"], dtype=float),
                   theta_grid=np.asarray(raw["theta_grid"], dtype=float),
                   F0=np.asarray(raw["F0"], dtype=float),
                   dF0_dsigma=None if dF0 is None else np.asarray(dF0, dtype=float),
                   metadata=raw.get("metadata", {}))


def _panel_nodes(edges):
    """Gauss-Legendre nodes/weights on consecutive panels [edges_k, edges_k+1]."""
    lo = edges[:-1]
    hi = edges[1:]
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    nodes = mid + half * _GL_NODES[None, :]
    weights = half * _GL_WEIGHTS[None, :]
    return nodes.ravel(), weights.ravel()


def _fractional_integral(g_eval, sigma_grid, M, panel_width, inner_panels=3):
    """Vectorized evaluation of int_sigma^M g(s) (s-sigma)^{-1/2} ds.

    g_eval(s) must vanish for |s| > M.  The panel of width <= 1 next to the
    singular endpoint is mapped with s = sigma + w^2; the rest uses fixed
    Gauss-Legendre panels shared by all sigma (masked per sigma).
    """
    sigma = np.asarray(sigma_grid, dtype=float)
    out = np.zeros_like(sigma)
    active = sigma < M
    if not np.any(active):
        return out
    sig = sigma[active]

    n_panels = max(1, int(np.ceil(2.0 * M / panel_width)))
    edges = np.linspace(-M, M, n_panels + 1)
    s_flat, w_flat = _panel_nodes(edges)
    g_flat = g_eval(s_flat)

    # split point: first panel edge at distance >= panel_width from sigma
    idx = np.searchsorted(edges, sig + panel_width, side="left")
    idx = np.clip(idx, 0, n_panels)
    split = edges[idx]

    # regular part: panels fully above the split point
    panel_lo = edges[:-1]
    node_panel = np.repeat(np.arange(n_panels), _GL_NODES.size)
    mask = panel_lo[node_panel][None, :] >= split[:, None] - 1e-14
    kern = np.zeros((sig.size, s_flat.size))
    diff = s_flat[None, :] - sig[:, None]
    np.sqrt(diff, out=kern, where=mask & (diff > 0))
    with np.errstate(divide="ignore"):
        inv = np.where(mask & (kern > 0), 1.0 / np.where(kern > 0, kern, 1.0), 0.0)
    regular = inv @ (g_flat * w_flat)

    # singular part on [sigma, min(split, M)] via s = sigma + w^2
    top = np.minimum(split, M)
    w_hi = np.sqrt(np.maximum(top - sig, 0.0))
    inner_edges = np.linspace(0.0, 1.0, inner_panels + 1)
    wn, ww = _panel_nodes(inner_edges)          # nodes on [0, 1]
    w_nodes = w_hi[:, None] * wn[None, :]
    s_nodes = sig[:, None] + w_nodes**2
    g_near = g_eval(s_nodes.ravel()).reshape(s_nodes.shape)
    singular = 2.0 * (g_near @ ww) * w_hi

    out[active] = regular + singular
    return out


def _slice_function(data: InitialData, omega, M, slice_step, line_step):
    """g(s) = R(s, w; u1) - d_s R(s, w; u0) as a clamped cubic spline."""
    n_s = int(np.ceil(2.0 * M / slice_step)) + 1
    s_fine = np.linspace(-M, M, n_s)
    h = line_step if line_step is not None else DEFAULT_LINE_STEP_FACTOR * M
    n_t = int(np.ceil(2.0 * M / h)) + 1
    t = np.linspace(-M, M, n_t)
    X, Y = _line_points(omega, s_fine, t)

    g_vals = np.trapezoid(data.u1(X, Y), t, axis=1)
    u0_probe = data.u0(np.array([0.0, 0.3]), np.array([0.0, -0.2]))
    if np.any(u0_probe != 0.0) or data.u0.label != "zero":
        gx, gy = data.u0.gradient(X, Y)
        g_vals = g_vals - np.trapezoid(omega[0] * gx + omega[1] * gy, t, axis=1)

    spline = CubicSpline(s_fine, g_vals)
    dspline = spline.derivative()

    def g_eval(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = (s > -M) & (s < M)
        if np.any(inside):
            out[inside] = spline(s[inside])
        return out

    def dg_eval(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = (s > -M) & (s < M)
        if np.any(inside):
            out[inside] = dspline(s[inside])
        return out

    return g_eval, dg_eval


def friedlander_profile(data: InitialData, sigma_grid=None, theta_grid=None,
                        slice_step=DEFAULT_SLICE_STEP, line_step=None,
                        panel_width=DEFAULT_PANEL_WIDTH, check_support=True,
                        convergence_check=True, convergence_tol=1e-6,
                        fill_derivative=True):
    """Radiation profile of the data on a (sigma, theta) grid.

    The derivative columns are filled from the differentiated fractional
    integral (the slice spline's derivative transforms under the same
    quadrature); `profile_derivative` offers the finite-difference route.
    """
    M = float(data.support_radius)
    if sigma_grid is None:
        n = int(round((M - DEFAULT_SIGMA_MIN) / DEFAULT_SIGMA_STEP))
        sigma_grid = DEFAULT_SIGMA_MIN + DEFAULT_SIGMA_STEP * np.arange(n + 1)
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    if np.any(sigma_grid > M + 1e-9):
        raise ValueError("sigma_grid entries must not exceed the support radius")
    if theta_grid is None:
        theta_grid = np.linspace(0.0, 2.0 * np.pi, DEFAULT_N_THETA + 1)
    theta_grid = np.asarray(theta_grid, dtype=float)

    if check_support:
        data.check_support()

    F0 = np.zeros((sigma_grid.size, theta_grid.size))
    dF0 = np.zeros_like(F0) if fill_derivative else None
    for j, th in enumerate(theta_grid):
        omega = np.array([np.cos(th), np.sin(th)])
        g_eval, dg_eval = _slice_function(data, omega, M, slice_step, line_step)
        F0[:, j] = PROFILE_COEF * _fractional_integral(
            g_eval, sigma_grid, M, panel_width)
        if fill_derivative:
            dF0[:, j] = PROFILE_COEF * _fractional_integral(
                dg_eval, sigma_grid, M, panel_width)

    if convergence_check and sigma_grid.size:
        # refine the panel partition on 3 probe directions; the change bounds
        # the quadrature error
        probe_sigma = sigma_grid[:: max(1, sigma_grid.size // 16)]
        worst = 0.0
        for th in theta_grid[:: max(1, (theta_grid.size - 1) // 3)][:3]:
            omega = np.array([np.cos(th), np.sin(th)])
            g_eval, _ = _slice_function(data, omega, M, slice_step / 2.0, line_step)
            coarse = PROFILE_COEF * _fractional_integral(
                g_eval, probe_sigma, M, panel_width)
            fine = PROFILE_COEF * _fractional_integral(
                g_eval, probe_sigma, M, panel_width / 2.0)
            worst = max(worst, float(np.max(np.abs(fine - coarse))))
        if worst > convergence_tol:
            raise QuadratureError(
                f"profile quadrature did not converge: residual {worst:.3e} "
                f"exceeds {convergence_tol:.1e}")

    metadata = {
        "support_radius": M,
        "slice_step": float(slice_step),
        "line_step": float(line_step if line_step is not None
                           else DEFAULT_LINE_STEP_FACTOR * M),
        "panel_width": float(panel_width),
        "sigma_min": float(sigma_grid[0]),
        "derivative_mode": "regularized-integral" if fill_derivative else "none",
        "data_label": data.label,
    }
    return DirectionalProfile(sigma_grid=sigma_grid, theta_grid=theta_grid,
                              F0=F0, dF0_dsigma=dF0, metadata=metadata)


def profile_derivative(profile: DirectionalProfile, mode="finite-difference"):
    """Fill dF0_dsigma; default 4th-order central differences in sigma.

    mode="exact" keeps an existing regularized-integral column set (or the
    analytic callback) instead of differencing.
    """
    if profile.F0.shape[0] < 5:
        raise ValueError("need at least 5 sigma samples to differentiate")
    if mode == "exact":
        if profile.df0_func is not None:
            sig, th = np.meshgrid(profile.sigma_grid, profile.theta_grid,
                                  indexing="ij")
            dF0 = profile.df0_func(sig, th)
        elif profile.dF0_dsigma is not None:
            dF0 = profile.dF0_dsigma
        else:
            raise ValueError("no exact derivative source available")
    elif mode == "finite-difference":
        dF0 = fitting.derivative_4th(profile.F0, profile.sigma_grid, axis=0)
    else:
        raise ValueError(f"unknown derivative mode {mode!r}")
    return DirectionalProfile(sigma_grid=profile.sigma_grid,
                              theta_grid=profile.theta_grid,
                              F0=profile.F0, dF0_dsigma=dF0,
                              metadata={**profile.metadata,
                                        "derivative_mode": mode},
                              f0_func=profile.f0_func,
                              df0_func=profile.df0_func)


def decay_check(profile: DirectionalProfile, orders=(0, 1), window_factor=4.0,
                noise_floor=1e-12):
    """Fit far-field decay exponents of d_sigma^k F0 against (1 + |sigma|).

    Returns {k: {"exponent", "r2", "status", "n_points"}}; the expected
    exponent is -(1/2 + k).  Requires the grid to reach sigma <= -50.
    """
    sig = profile.sigma_grid
    if sig[0] > -50.0:
        raise ValueError("decay fit needs sigma_min <= -50")
    window = (sig >= sig[0]) & (sig <= sig[0] / window_factor)
    results = {}
    for k in orders:
        if k == 0:
            mat = profile.F0
        elif k == 1:
            if profile.dF0_dsigma is None:
                raise ValueError("dF0_dsigma not filled")
            mat = profile.dF0_dsigma
        else:
            raise ValueError("only derivative orders 0 and 1 are sampled")
        env = np.max(np.abs(mat[window, :]), axis=1)
        if np.max(env) < noise_floor:
            results[k] = {"exponent": None, "r2": None, "status": "signal too small",
                          "n_points": int(env.size)}
            continue
        x = np.log1p(np.abs(sig[window]))
        y = np.log(env)
        slope, _, r2 = fitting.linear_fit(x, y)
        results[k] = {"exponent": float(slope), "r2": float(r2),
                      "status": "ok", "n_points": int(env.size)}
    return results


# -- synthetic profiles (injected F0, no data behind them) --------------------

def synthetic_profile(f0_func, df0_func=None, sigma_grid=None, theta_grid=None,
                      support_radius=None, label="synthetic"):
    if sigma_grid is None:
        sigma_grid = np.arange(-8.0, 8.0 + 1e-12, 0.01)
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    if theta_grid is None:
        theta_grid = np.linspace(0.0, 2.0 * np.pi, 129)
    theta_grid = np.asarray(theta_grid, dtype=float)
    sig, th = np.meshgrid(sigma_grid, theta_grid, indexing="ij")
    F0 = f0_func(sig, th)
    dF0 = df0_func(sig, th) if df0_func is not None else None
    prof = DirectionalProfile(
        sigma_grid=sigma_grid, theta_grid=theta_grid, F0=F0, dF0_dsigma=dF0,
        metadata={"support_radius": float(support_radius if support_radius
                                          is not None else sigma_grid[-1]),
                  "synthetic": True, "data_label": label},
        f0_func=f0_func, df0_func=df0_func)
    if dF0 is None:
        prof = profile_derivative(prof)
    return prof


def profile_preset(name):
    """Synthetic profile presets used by the reduced-model checks."""
    if name == "sigma_gaussian":
        return synthetic_profile(
            lambda s, th: np.exp(-s * s),
            lambda s, th: -2.0 * s * np.exp(-s * s),
            label="sigma_gaussian")
    if name == "sigma_gaussian_modulated":
        return synthetic_profile(
            lambda s, th: np.exp(-s * s) * (1.0 + 0.2 * np.cos(th)),
            lambda s, th: -2.0 * s * np.exp(-s * s) * (1.0 + 0.2 * np.cos(th)),
            label="sigma_gaussian_modulated")
    raise KeyError(f"unknown profile preset {name!r}")


PROFILE_PRESETS = ("sigma_gaussian", "sigma_gaussian_modulated")
