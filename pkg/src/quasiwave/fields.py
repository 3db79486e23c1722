"""Initial data fields, analytic presets, and the smooth cutoff chi.

All fields are vectorized callables of Cartesian coordinates (x, y) and are
compactly supported in the disc of radius ``support_radius``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


def _bump(q):
    """f(q) = exp(-1/q) for q > 0, else 0 (vectorized, overflow-safe)."""
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    pos = q > 0
    out[pos] = np.exp(-1.0 / q[pos])
    return out


def chi(s):
    """Smooth transition: chi(s) = 1 for s <= 1, 0 for s >= 2, monotone between.

    chi(s) = f(2-s) / (f(2-s) + f(s-1)) with f(q) = exp(-1/q) for q > 0.
    """
    s = np.asarray(s, dtype=float)
    a = _bump(2.0 - s)
    b = _bump(s - 1.0)
    denom = a + b
    out = np.where(denom > 0, a / np.where(denom > 0, denom, 1.0), 0.0)
    # plateau values are exact
    out = np.where(s <= 1.0, 1.0, out)
    out = np.where(s >= 2.0, 0.0, out)
    return out if out.ndim else float(out)


def radial_taper(r, r_on, r_off):
    """Smooth mask equal to 1 for r <= r_on and 0 for r >= r_off."""
    width = r_off - r_on
    if width <= 0:
        raise ValueError("taper needs r_off > r_on")
    return chi(1.0 + (np.asarray(r, dtype=float) - r_on) / width)


@dataclass
class ScalarField:
    """Evaluable scalar field on R^2 with an optional analytic gradient."""

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray, np.ndarray], tuple]] = None
    label: str = ""

    def __call__(self, x, y):
        return self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def gradient(self, x, y):
        if self.grad is None:
            raise ValueError(f"field {self.label!r} has no gradient callback")
        return self.grad(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def directional_derivative(self, x, y, direction):
        gx, gy = self.gradient(x, y)
        return direction[0] * gx + direction[1] * gy


@dataclass
class VectorField:
    fx: Callable[[np.ndarray, np.ndarray], np.ndarray]
    fy: Callable[[np.ndarray, np.ndarray], np.ndarray]
    label: str = ""


def zero_field():
    def f(x, y):
        return np.zeros_like(np.asarray(x, dtype=float))

    def g(x, y):
        z = np.zeros_like(np.asarray(x, dtype=float))
        return z, z.copy()

    return ScalarField(f, g, label="zero")


# Truncation band for the Gaussian presets.  exp(-r^2) < 8e-15 for r >= 5.7,
# so multiplying by a smooth cutoff supported in r <= 6 perturbs the pure
# Gaussian by less than 1e-14 everywhere.
GAUSSIAN_SUPPORT_RADIUS = 6.0
_TRUNC_ON = 5.7
_TRUNC_OFF = 6.0


def _trunc_mask(r):
    return radial_taper(r, _TRUNC_ON, _TRUNC_OFF)


def truncated_gaussian(center=(0.0, 0.0), label="gaussian"):
    """exp(-|x - center|^2) smoothly truncated beyond radius 6 of its center."""
    cx, cy = center

    def f(x, y):
        dx, dy = x - cx, y - cy
        r = np.hypot(dx, dy)
        return np.exp(-(dx * dx + dy * dy)) * _trunc_mask(r)

    def g(x, y):
        dx, dy = x - cx, y - cy
        rsq = dx * dx + dy * dy
        r = np.sqrt(rsq)
        core = np.exp(-rsq)
        mask = _trunc_mask(r)
        # cutoff band sits where core < 8e-15; its own derivative is negligible
        base = -2.0 * core * mask
        return base * dx, base * dy

    return ScalarField(f, g, label=label)


def narrow_gaussian(label="gaussian_narrow"):
    """exp(-16 |x|^2) truncated beyond radius 1.5 (fast-settling far field)."""

    def f(x, y):
        r = np.hypot(x, y)
        return np.exp(-16.0 * (x * x + y * y)) * radial_taper(r, 1.4, 1.5)

    def g(x, y):
        r = np.hypot(x, y)
        core = np.exp(-16.0 * (x * x + y * y)) * radial_taper(r, 1.4, 1.5)
        return -32.0 * x * core, -32.0 * y * core

    return ScalarField(f, g, label=label)


def zero_mean_pulse(label="zero_mean_pulse"):
    """(1 - 8 r^2) exp(-8 r^2), truncated beyond radius 2.2; integrates to 0.

    Zero mean kills the slow |sigma|^{-1/2} tail of the radiation profile, so
    the far-field regime is established quickly (used by the residual-scaling
    study, where the handover happens at t = 1/eps).
    """

    def f(x, y):
        rsq = x * x + y * y
        r = np.sqrt(rsq)
        return (1.0 - 8.0 * rsq) * np.exp(-8.0 * rsq) * radial_taper(r, 2.0, 2.2)

    def g(x, y):
        rsq = x * x + y * y
        r = np.sqrt(rsq)
        core = np.exp(-8.0 * rsq) * radial_taper(r, 2.0, 2.2)
        base = (-16.0 - 16.0 * (1.0 - 8.0 * rsq)) * core
        return base * x, base * y

    return ScalarField(f, g, label=label)


def anisotropic_bump(label="anisotropic_bump"):
    """exp(-(2 x^2 + y^2 / 2)) truncated beyond radius 6 (not rotation symmetric)."""

    def f(x, y):
        r = np.hypot(x, y)
        return np.exp(-(2.0 * x * x + 0.5 * y * y)) * _trunc_mask(r)

    def g(x, y):
        r = np.hypot(x, y)
        core = np.exp(-(2.0 * x * x + 0.5 * y * y)) * _trunc_mask(r)
        return -4.0 * x * core, -1.0 * y * core

    return ScalarField(f, g, label=label)


def polynomial_bump(radius=1.0, label="poly_bump"):
    """(1 - (r/radius)^2)^3 inside r < radius, 0 outside (finite smoothness)."""

    def f(x, y):
        q = 1.0 - (x * x + y * y) / radius**2
        return np.where(q > 0, q, 0.0) ** 3

    def g(x, y):
        q = 1.0 - (x * x + y * y) / radius**2
        qp = np.where(q > 0, q, 0.0)
        base = -6.0 * qp * qp / radius**2
        return base * x, base * y

    return ScalarField(f, g, label=label)


class SupportError(ValueError):
    """Raised when a field is not supported in its declared disc."""


@dataclass
class InitialData:
    """Cauchy data pair (u0, u1) supported in the disc of radius M.

    The wave speeds are either the quadratic model, with flux coefficient
    1 + c_i * u on axis i, or general smooth c_i(u) callbacks with c_i(0) = 1,
    giving flux coefficient c_i(u)^2.  The quadratic constants c1, c2 are kept
    alongside general coefficients (c_i = 2 c_i'(0)) because the reduced
    transport model and the lifespan formula are expressed through them.
    """

    u0: ScalarField
    u1: ScalarField
    support_radius: float
    c1: float = 1.0
    c2: float = 1.0
    c1_fn: Optional[Callable] = None
    c2_fn: Optional[Callable] = None
    label: str = ""

    def __post_init__(self):
        if self.support_radius <= 0:
            raise ValueError("support_radius must be positive")
        if self.c1_fn is None and self.c1**2 + self.c2**2 == 0.0:
            raise ValueError("quadratic model requires c1^2 + c2^2 != 0")
        if (self.c1_fn is None) != (self.c2_fn is None):
            raise ValueError("general coefficients need both c1_fn and c2_fn")

    # -- wave speed plumbing -------------------------------------------------
    def flux_coefficient(self, u, axis):
        """Squared sound speed c_i(u)^2 multiplying d_i u in the flux."""
        if self.c1_fn is not None:
            fn = self.c1_fn if axis == 0 else self.c2_fn
            c = fn(u)
            return c * c
        c = self.c1 if axis == 0 else self.c2
        return 1.0 + c * u

    def max_speed(self, u_min, u_max):
        cands = []
        for axis in range(2):
            for u in (u_min, u_max):
                a = float(self.flux_coefficient(np.asarray(u), axis))
                if a <= 0:
                    raise ValueError("flux coefficient lost positivity")
                cands.append(np.sqrt(a))
        return max(cands)

    def isotropic(self, tol=0.0):
        if self.c1_fn is not None:
            if self.c1_fn is self.c2_fn:
                return True
            probe = np.linspace(-0.5, 0.5, 7)
            return bool(np.max(np.abs(self.c1_fn(probe) - self.c2_fn(probe))) <= tol)
        return abs(self.c1 - self.c2) <= tol

    def is_radial(self, n_radii=6, n_angles=12, tol=1e-12):
        radii = np.linspace(0.15, 0.95, n_radii) * self.support_radius
        ang = np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)
        for fld in (self.u0, self.u1):
            vals = fld(radii[:, None] * np.cos(ang)[None, :],
                       radii[:, None] * np.sin(ang)[None, :])
            spread = np.max(vals, axis=1) - np.min(vals, axis=1)
            if np.max(spread) > tol:
                return False
        return True

    def check_support(self, tol=1e-12):
        """Sample just outside the declared disc; raise SupportError on leakage."""
        ang = np.linspace(0.0, 2.0 * np.pi, 48, endpoint=False)
        for factor in (1.0 + 1e-9, 1.02, 1.1, 1.5):
            r = factor * self.support_radius
            x, y = r * np.cos(ang), r * np.sin(ang)
            for fld in (self.u0, self.u1):
                if np.max(np.abs(fld(x, y))) > tol:
                    raise SupportError(
                        f"data {self.label!r} exceeds declared support radius "
                        f"{self.support_radius} at r = {r:.3g}")


def load_grid_data(path, support_radius, c1=1.0, c2=1.0, label=None):
    """Load sampled data from CSV columns x, y, u0, u1 on a rectangular grid."""
    from scipy.interpolate import RectBivariateSpline

    raw = np.genfromtxt(path, delimiter=",", names=True)
    x = np.unique(raw["x"])
    y = np.unique(raw["y"])
    if x.size * y.size != raw.size:
        raise ValueError("grid file is not a full rectangular grid")
    order = np.lexsort((raw["y"], raw["x"]))
    u0 = raw["u0"][order].reshape(x.size, y.size)
    u1 = raw["u1"][order].reshape(x.size, y.size)

    def wrap(values, name):
        spl = RectBivariateSpline(x, y, values, kx=3, ky=3)

        def f(px, py):
            px = np.asarray(px, dtype=float)
            py = np.asarray(py, dtype=float)
            inside = (px >= x[0]) & (px <= x[-1]) & (py >= y[0]) & (py <= y[-1])
            out = np.zeros_like(px)
            if np.any(inside):
                out[inside] = spl.ev(px[inside], py[inside])
            return out

        def g(px, py):
            px = np.asarray(px, dtype=float)
            py = np.asarray(py, dtype=float)
            inside = (px >= x[0]) & (px <= x[-1]) & (py >= y[0]) & (py <= y[-1])
            gx = np.zeros_like(px)
            gy = np.zeros_like(px)
            if np.any(inside):
                gx[inside] = spl.ev(px[inside], py[inside], dx=1)
                gy[inside] = spl.ev(px[inside], py[inside], dy=1)
            return gx, gy

        return ScalarField(f, g, label=name)

    name = label or str(path)
    return InitialData(wrap(u0, name + ":u0"), wrap(u1, name + ":u1"),
                       support_radius=support_radius, c1=c1, c2=c2, label=name)


def save_grid_data(path, data, extent=None, n=241):
    """Sample InitialData on a square grid and write the CSV schema x,y,u0,u1."""
    extent = extent or data.support_radius
    ax = np.linspace(-extent, extent, n)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    u0 = data.u0(X, Y)
    u1 = data.u1(X, Y)
    rows = np.column_stack([X.ravel(), Y.ravel(), u0.ravel(), u1.ravel()])
    np.savetxt(path, rows, delimiter=",", header="x,y,u0,u1", comments="")


def _unit_speed(u):
    return np.ones_like(np.asarray(u, dtype=float))


def linear_variant(data: InitialData):
    """Same Cauchy data with c_i(u) = 1 (the linear wave equation)."""
    return InitialData(u0=data.u0, u1=data.u1,
                       support_radius=data.support_radius,
                       c1=0.0, c2=0.0, c1_fn=_unit_speed, c2_fn=_unit_speed,
                       label=data.label + ":linear")


# -- presets -----------------------------------------------------------------

def _exp_half(u):
    return np.exp(np.asarray(u, dtype=float) / 2.0)


def data_preset(name):
    """Built-in analytic initial-data presets."""
    if name == "zero":
        return InitialData(zero_field(), zero_field(),
                           support_radius=GAUSSIAN_SUPPORT_RADIUS, label="zero")
    if name == "gaussian":
        return InitialData(zero_field(), truncated_gaussian(),
                           support_radius=GAUSSIAN_SUPPORT_RADIUS, label="gaussian")
    if name == "gaussian_aniso":
        return InitialData(zero_field(), truncated_gaussian(),
                           support_radius=GAUSSIAN_SUPPORT_RADIUS,
                           c1=2.0, c2=1.0, label="gaussian_aniso")
    if name == "gaussian_narrow":
        return InitialData(zero_field(), narrow_gaussian(),
                           support_radius=1.5, label="gaussian_narrow")
    if name == "zero_mean_pulse":
        return InitialData(zero_field(), zero_mean_pulse(),
                           support_radius=2.2, label="zero_mean_pulse")
    if name == "bump":
        return InitialData(zero_field(), anisotropic_bump(),
                           support_radius=GAUSSIAN_SUPPORT_RADIUS, label="bump")
    if name == "pgrad_gaussian":
        # log-pressure form of the pressure-gradient model: u0 = P0, u1 = -div U0
        return InitialData(truncated_gaussian(), zero_field(),
                           support_radius=GAUSSIAN_SUPPORT_RADIUS,
                           c1=1.0, c2=1.0, c1_fn=_exp_half, c2_fn=_exp_half,
                           label="pgrad_gaussian")
    raise KeyError(f"unknown data preset {name!r}")


DATA_PRESETS = ("zero", "gaussian", "gaussian_aniso", "gaussian_narrow",
                "zero_mean_pulse", "bump", "pgrad_gaussian")
