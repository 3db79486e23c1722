"""Explicit solver for the 2-D quasilinear wave equation with blowup detection.

The conservative flux form d_t^2 u = sum_i d_i(a_i(u) d_i u) is discretized
with face-centered coefficient averages (arithmetic mean of the adjacent
cells), 2nd-order centered differences, and leapfrog time stepping in
kick-drift form (velocity staggered by half a step; startup via a Taylor
half-kick).  Three geometries:

  * cartesian(extent, h): full square, boundaries never reached,
  * radial(r_max, h_r): polar-symmetric 1-D reduction with the origin cell
    closed by symmetry, optionally with a comoving window,
  * annulus(h_r, n_theta): comoving annular window following the outgoing
    front, bootstrapped from a Cartesian stage while the window would still
    contain the origin.

Long runs keep only r in [t - C0, t + M + 1]; the window advances by integer
shifts with a smooth taper at the trailing edge.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field as dataclass_field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .fields import InitialData, ScalarField, VectorField, radial_taper
from . import fields as _fields
from . import fitting
from . import _kernels

DEFAULT_CFL = 0.45


class GeometryError(ValueError):
    """Geometry cannot represent the requested data or horizon."""


@dataclass
class CartesianGeometry:
    extent: float
    h: float
    kind: str = "cartesian"


@dataclass
class RadialGeometry:
    r_max: float
    h_r: float
    window_depth: Optional[float] = None     # comoving window C0; None = full disc
    taper_width: float = 5.0
    kind: str = "radial"


@dataclass
class AnnulusGeometry:
    h_r: float
    n_theta: int
    window_depth: float = 25.0
    taper_width: float = 5.0
    switch_radius: float = 5.0
    bootstrap_h: Optional[float] = None    # Cartesian stage step; default
    kind: str = "annulus"                  # max(h_r, 0.025)


@dataclass
class DetectionConfig:
    horizon: float
    growth_factor: float = 8.0
    hard_threshold: float = 10.0
    max_refinements: int = 4
    refine_h: bool = True
    steepness_triggers: tuple = (4.0, 8.0)
    exhaust_growth: float = 2.0
    arm_time: float = 2.0
    monitor_dt: Optional[float] = None
    fit_decade: float = 4.0
    min_fit_samples: int = 10
    cfl: float = DEFAULT_CFL


def _speed_bound(data: InitialData, u):
    lo, hi = float(np.min(u)), float(np.max(u))
    return data.max_speed(lo, hi)


class _FieldBase:
    """Shared stepping and monitoring machinery for all geometries."""

    def __init__(self, data, epsilon, cfl):
        self.data = data
        self.epsilon = float(epsilon)
        self.cfl = float(cfl)
        self.t = 0.0
        self.started = False
        self._lap_cache = None

    # geometry hooks -----------------------------------------------------
    def _laplacian(self, u):
        raise NotImplementedError

    def _cfl_dt(self):
        raise NotImplementedError

    def _maybe_advance_window(self):
        pass

    # stepping -----------------------------------------------------------
    def _lap(self):
        if self._lap_cache is None:
            self._lap_cache = self._laplacian(self.u)
        return self._lap_cache

    def set_dt(self, dt):
        """Change the step size, re-centering the staggered velocity."""
        dt = float(dt)
        if self.started:
            self.v = self.v + 0.5 * (self.dt - dt) * self._lap()
        self.dt = dt

    def step(self, n=1):
        """Advance n leapfrog steps (kick-drift); NaN/overflow propagate
        silently into the state and are picked up by the monitors."""
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(int(n)):
                lap = self._lap()
                if not self.started:
                    self.v = self.v + 0.5 * self.dt * lap
                    self.started = True
                else:
                    self.v = self.v + self.dt * lap
                self.u = self.u + self.dt * self.v
                self.t += self.dt
                self._lap_cache = None
                self._maybe_advance_window()
        return self

    def ut(self):
        """Velocity re-centered onto the current time level (2nd order)."""
        if not self.started:
            return self.v
        return self.v + 0.5 * self.dt * self._lap()

    def check_cfl(self):
        """Ensure dt respects the current solution's wave speeds."""
        if not np.all(np.isfinite(self.u)):
            return
        limit = self._cfl_dt()
        if self.dt > limit:
            self.set_dt(limit)

    def energy(self):
        raise NotImplementedError

    def monitor(self):
        raise NotImplementedError


class CartesianField(_FieldBase):
    kind = "cartesian"

    def __init__(self, data, epsilon, geometry: CartesianGeometry,
                 cfl=DEFAULT_CFL, horizon=0.0):
        super().__init__(data, epsilon, cfl)
        L, h = float(geometry.extent), float(geometry.h)
        required = data.support_radius + horizon + 2.0
        if L < required:
            raise GeometryError(
                f"cartesian extent {L} too small; horizon {horizon} requires "
                f"extent >= {required}")
        n = int(round(2.0 * L / h)) + 1
        self.axis = np.linspace(-L, L, n)
        self.h = float(self.axis[1] - self.axis[0])
        X, Y = np.meshgrid(self.axis, self.axis, indexing="ij")
        self.u = epsilon * data.u0(X, Y)
        self.v = epsilon * data.u1(X, Y)
        self.dt = self._cfl_dt()
        self.geometry = geometry

    def _cfl_dt(self):
        c = _speed_bound(self.data, self.u[np.isfinite(self.u)])
        return self.cfl * self.h / (math.sqrt(2.0) * c)

    def _laplacian(self, u):
        h2 = self.h * self.h
        a1 = self.data.flux_coefficient(u, 0)
        a2 = self.data.flux_coefficient(u, 1)
        out = np.zeros_like(u)
        fx = 0.5 * (a1[1:, :] + a1[:-1, :]) * (u[1:, :] - u[:-1, :])
        fy = 0.5 * (a2[:, 1:] + a2[:, :-1]) * (u[:, 1:] - u[:, :-1])
        out[1:-1, :] += (fx[1:, :] - fx[:-1, :]) / h2
        out[:, 1:-1] += (fy[:, 1:] - fy[:, :-1]) / h2
        return out

    def refine_h(self):
        spl_u = RectBivariateSpline(self.axis, self.axis, self.u)
        spl_v = RectBivariateSpline(self.axis, self.axis, self.v)
        n2 = 2 * (self.axis.size - 1) + 1
        self.axis = np.linspace(self.axis[0], self.axis[-1], n2)
        self.u = spl_u(self.axis, self.axis)
        self.v = spl_v(self.axis, self.axis)
        self.h = float(self.axis[1] - self.axis[0])
        self._lap_cache = None

    def grad_sup(self):
        gx = np.max(np.abs(self.u[1:, :] - self.u[:-1, :])) / self.h
        gy = np.max(np.abs(self.u[:, 1:] - self.u[:, :-1])) / self.h
        return float(max(gx, gy))

    def monitor(self):
        ut = self.ut()
        gx = np.abs(self.u[2:, 1:-1] - self.u[:-2, 1:-1]) / (2 * self.h)
        gy = np.abs(self.u[1:-1, 2:] - self.u[1:-1, :-2]) / (2 * self.h)
        combined = np.abs(ut[1:-1, 1:-1]) + np.hypot(gx, gy)
        i, j = np.unravel_index(np.argmax(combined), combined.shape)
        return {
            "sup_u": float(np.max(np.abs(self.u))),
            "sup_ut": float(np.max(np.abs(ut))),
            "sup_grad": self.grad_sup(),
            "location": {"x": float(self.axis[i + 1]), "y": float(self.axis[j + 1])},
        }

    def energy(self):
        u_prev = self.u - self.dt * self.v if self.started else self.u
        a1 = self.data.flux_coefficient(self.u, 0)
        a2 = self.data.flux_coefficient(self.u, 1)
        h2 = self.h * self.h
        kin = 0.5 * h2 * float(np.sum(self.v ** 2))
        ax = 0.5 * (a1[1:, :] + a1[:-1, :])
        ay = 0.5 * (a2[:, 1:] + a2[:, :-1])
        pot = 0.5 * float(
            np.sum(ax * (self.u[1:, :] - self.u[:-1, :])
                   * (u_prev[1:, :] - u_prev[:-1, :]))
            + np.sum(ay * (self.u[:, 1:] - self.u[:, :-1])
                     * (u_prev[:, 1:] - u_prev[:, :-1])))
        return kin + pot

    def snapshot_rows(self):
        X, Y = np.meshgrid(self.axis, self.axis, indexing="ij")
        ut = self.ut()
        return np.column_stack([X.ravel(), Y.ravel(), self.u.ravel(), ut.ravel()]), \
            "x,y,u,ut"


class RadialField(_FieldBase):
    kind = "radial"

    def __init__(self, data, epsilon, geometry: RadialGeometry,
                 cfl=DEFAULT_CFL, horizon=0.0):
        super().__init__(data, epsilon, cfl)
        if not data.is_radial():
            raise GeometryError("radial geometry requires radial data")
        if not data.isotropic():
            raise GeometryError("radial geometry requires isotropic coefficients")
        M = data.support_radius
        self.window_depth = geometry.window_depth
        self.taper_width = float(geometry.taper_width)
        h = float(geometry.h_r)
        if self.window_depth is None:
            if geometry.r_max < M + horizon + 1.0:
                raise GeometryError(
                    f"radial r_max {geometry.r_max} too small; horizon "
                    f"{horizon} requires r_max >= {M + horizon + 1.0}")
            r_top = geometry.r_max
        else:
            r_top = self.window_depth + M + 2.0
        n = int(round(r_top / h)) + 1
        self.h = h
        self.r_offset = 0.0
        self.n = n
        self._rebuild_radii()
        self.u = epsilon * data.u0(self.r, np.zeros_like(self.r))
        self.v = epsilon * data.u1(self.r, np.zeros_like(self.r))
        self.dt = self._cfl_dt()
        self.trunc_monitor = 0.0
        self.geometry = geometry
        if data.c1_fn is None:
            self._mode, self._c = 1, float(data.c1)
        elif data.c1_fn is _fields._unit_speed:
            self._mode, self._c = 0, 0.0
        elif data.c1_fn is _fields._exp_half:
            self._mode, self._c = 2, 0.0
        else:
            self._mode, self._c = -1, 0.0

    def _rebuild_radii(self):
        self.r = self.r_offset + self.h * np.arange(self.n)
        self.r_face = self.r + 0.5 * self.h
        self._inv_r = 1.0 / np.maximum(self.r, 0.5 * self.h)

    def _cfl_dt(self):
        c = _speed_bound(self.data, self.u[np.isfinite(self.u)])
        return self.cfl * self.h / c

    def _laplacian(self, u):
        h = self.h
        a = self.data.flux_coefficient(u, 0)
        a_face = 0.5 * (a[1:] + a[:-1])
        flux = self.r_face[:-1] * a_face * (u[1:] - u[:-1]) / h
        out = np.zeros_like(u)
        out[1:-1] = (flux[1:] - flux[:-1]) / (self.r[1:-1] * h)
        if self.r_offset == 0.0:
            # origin closed by symmetry: finite-volume cell of radius h/2
            out[0] = 4.0 * a_face[0] * (u[1] - u[0]) / (h * h)
        else:
            a_in = 0.5 * (a[0] + 1.0)
            flux_in = (self.r[0] - 0.5 * h) * a_in * u[0] / h
            out[0] = (flux[0] - flux_in) / (self.r[0] * h)
        a_out = 0.5 * (a[-1] + 1.0)
        flux_out = self.r_face[-1] * a_out * (0.0 - u[-1]) / h
        out[-1] = (flux_out - flux[-1]) / (self.r[-1] * h)
        return out

    def _maybe_advance_window(self):
        if self.window_depth is None:
            return
        while self.t - self.window_depth >= self.r_offset + 1.0:
            n_shift = int(round(1.0 / self.h))
            band = self.u[:n_shift]
            thresh = 1e-3 * self.epsilon / math.sqrt(1.0 + self.t)
            if band.size and np.all(np.isfinite(band)):
                self.trunc_monitor = max(self.trunc_monitor,
                                         float(np.max(np.abs(band))) / thresh)
            self.u = np.concatenate([self.u[n_shift:], np.zeros(n_shift)])
            self.v = np.concatenate([self.v[n_shift:], np.zeros(n_shift)])
            self.r_offset += 1.0
            self._rebuild_radii()
            mask_band = self.r < self.r_offset + self.taper_width
            ramp = 1.0 - radial_taper(self.r[mask_band], self.r_offset,
                                      self.r_offset + self.taper_width)
            self.u[mask_band] *= ramp
            self.v[mask_band] *= ramp
            self._lap_cache = None

    def step(self, n=1):
        """Chunked leapfrog using the fused kernel when available."""
        if not _kernels.HAVE_NUMBA or self._mode < 0:
            return super().step(n)
        remaining = int(n)
        while remaining > 0:
            chunk = remaining
            if self.window_depth is not None:
                next_shift = self.window_depth + self.r_offset + 1.0
                to_shift = int(math.ceil((next_shift - self.t) / self.dt))
                chunk = min(chunk, max(1, to_shift))
            _kernels.radial_leapfrog(self.u, self.v, self.r_face, self._inv_r,
                                     self.h, self.dt, chunk, self._mode,
                                     self._c, self.r_offset == 0.0,
                                     not self.started)
            self.started = True
            self.t += chunk * self.dt
            self._lap_cache = None
            remaining -= chunk
            self._maybe_advance_window()
        return self

    def refine_h(self):
        spl_u = CubicSpline(self.r, self.u)
        spl_v = CubicSpline(self.r, self.v)
        self.h *= 0.5
        self.n = 2 * (self.n - 1) + 1
        self._rebuild_radii()
        self.u = spl_u(self.r)
        self.v = spl_v(self.r)
        self._lap_cache = None

    def grad_sup(self):
        return float(np.max(np.abs(self.u[1:] - self.u[:-1]))) / self.h

    def monitor(self):
        ut = self.ut()
        gr = np.abs(self.u[2:] - self.u[:-2]) / (2 * self.h)
        combined = np.abs(ut[1:-1]) + gr
        i = int(np.argmax(combined))
        return {
            "sup_u": float(np.max(np.abs(self.u))),
            "sup_ut": float(np.max(np.abs(ut))),
            "sup_grad": self.grad_sup(),
            "location": {"r": float(self.r[i + 1]), "theta": 0.0},
        }

    def energy(self):
        u_prev = self.u - self.dt * self.v if self.started else self.u
        a = self.data.flux_coefficient(self.u, 0)
        a_face = 0.5 * (a[1:] + a[:-1])
        h = self.h
        r_kin = np.maximum(self.r, 0.125 * h)   # origin cell has volume ~(h/2)^2/2
        kin = 0.5 * 2.0 * math.pi * h * float(np.sum(r_kin * self.v ** 2))
        pot = 0.5 * 2.0 * math.pi * float(
            np.sum(self.r_face[:-1] * a_face * (self.u[1:] - self.u[:-1])
                   * (u_prev[1:] - u_prev[:-1]))) / h
        return kin + pot

    def snapshot_rows(self):
        ut = self.ut()
        return np.column_stack([self.r, self.u, ut]), "r,u,ut"


class AnnulusField(_FieldBase):
    """Comoving annular window with a Cartesian bootstrap stage."""

    kind = "annulus"

    def __init__(self, data, epsilon, geometry: AnnulusGeometry,
                 cfl=DEFAULT_CFL, horizon=0.0):
        super().__init__(data, epsilon, cfl)
        self.geometry = geometry
        self.h = float(geometry.h_r)
        self.n_theta = int(geometry.n_theta)
        self.window_depth = float(geometry.window_depth)
        self.taper_width = float(geometry.taper_width)
        self.t_switch = self.window_depth + float(geometry.switch_radius)
        self.theta = np.linspace(0.0, 2.0 * np.pi, self.n_theta, endpoint=False)
        self.h_theta = float(self.theta[1] - self.theta[0])
        self.polar = False
        self.trunc_monitor = 0.0
        extent = self.t_switch + data.support_radius + 2.0
        boot_h = geometry.bootstrap_h or max(self.h, 0.025)
        self._cart = CartesianField(
            data, epsilon, CartesianGeometry(extent=extent, h=boot_h),
            cfl=cfl, horizon=self.t_switch)
        self.u = self._cart.u
        self.v = self._cart.v
        self.dt = self._cart.dt

    # delegate to the Cartesian stage until the window clears the origin
    def _sync_from_cart(self):
        self.u = self._cart.u
        self.v = self._cart.v
        self.t = self._cart.t

    def _sync_to_cart(self):
        self._cart.dt = self.dt
        self._cart.started = self.started

    def set_dt(self, dt):
        if not self.polar:
            self._sync_to_cart()
            self._cart.set_dt(dt)
            self.dt = float(dt)
            self._sync_from_cart()
        else:
            super().set_dt(dt)

    def energy(self):
        if not self.polar:
            self._sync_to_cart()
            return self._cart.energy()
        return self._polar_energy()

    def _cfl_dt(self):
        if not self.polar:
            return self._cart._cfl_dt()
        c = _speed_bound(self.data, self.u[np.isfinite(self.u)])
        h_eff = min(self.h, float(self.r[0]) * self.h_theta)
        return self.cfl * h_eff / (math.sqrt(2.0) * c)

    def step(self, n=1):
        for _ in range(int(n)):
            if not self.polar:
                self._sync_to_cart()
                self._cart.step(1)
                self.started = True
                self._sync_from_cart()
                if self.t >= self.t_switch:
                    self._switch_to_polar()
            else:
                super().step(1)
        return self

    def _switch_to_polar(self):
        M = self.data.support_radius
        r_lo = math.floor(max(self.t - self.window_depth, 1.0) / self.h) * self.h
        r_hi = self.t + M + 1.0
        n_r = int(round((r_hi - r_lo) / self.h)) + 1
        self.r = r_lo + self.h * np.arange(n_r)
        self.r_offset = float(r_lo)
        cart = self._cart
        spl_u = RectBivariateSpline(cart.axis, cart.axis, cart.u)
        spl_v = RectBivariateSpline(cart.axis, cart.axis, cart.v)
        R, TH = np.meshgrid(self.r, self.theta, indexing="ij")
        X, Y = R * np.cos(TH), R * np.sin(TH)
        self.u = spl_u.ev(X, Y)
        self.v = spl_v.ev(X, Y)
        self.polar = True
        self._cart = None
        self._lap_cache = None
        self.set_dt(min(self.dt, self._cfl_dt()))

    def _trig(self):
        ct, st = np.cos(self.theta), np.sin(self.theta)
        ctf = np.cos(self.theta + 0.5 * self.h_theta)
        stf = np.sin(self.theta + 0.5 * self.h_theta)
        return ct, st, ctf, stf

    def _laplacian(self, u):
        if not self.polar:
            return self._cart._laplacian(u)
        h, hth = self.h, self.h_theta
        r = self.r[:, None]
        ct, st, ctf, stf = self._trig()
        a1 = self.data.flux_coefficient(u, 0)
        a2 = self.data.flux_coefficient(u, 1)

        up = np.vstack([np.zeros((1, u.shape[1])), u, np.zeros((1, u.shape[1]))])
        a1p = np.vstack([np.ones((1, u.shape[1])), a1, np.ones((1, u.shape[1]))])
        a2p = np.vstack([np.ones((1, u.shape[1])), a2, np.ones((1, u.shape[1]))])

        u_th_c = (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2.0 * hth)
        u_r_c = (up[2:, :] - up[:-2, :]) / (2.0 * h)

        # fluxes through r-faces (n_r + 1 of them, ghosts held at zero)
        ur_f = (up[1:, :] - up[:-1, :]) / h
        uth_c_pad = np.vstack([u_th_c[:1, :] * 0.0, u_th_c, u_th_c[-1:, :] * 0.0])
        uth_f = 0.5 * (uth_c_pad[1:, :] + uth_c_pad[:-1, :])
        a1f = 0.5 * (a1p[1:, :] + a1p[:-1, :])
        a2f = 0.5 * (a2p[1:, :] + a2p[:-1, :])
        rf = np.concatenate([[self.r[0] - 0.5 * h], self.r + 0.5 * h])[:, None]
        cos2, sin2 = ct * ct, st * st
        sc = st * ct
        Fr = ((a1f * cos2[None, :] + a2f * sin2[None, :]) * ur_f
              + (a2f - a1f) * sc[None, :] * uth_f / np.maximum(rf, 0.5 * h))

        # fluxes through theta-faces at j + 1/2 (periodic)
        uth_f2 = (np.roll(u, -1, axis=1) - u) / hth
        ur_f2 = 0.5 * (u_r_c + np.roll(u_r_c, -1, axis=1))
        a1f2 = 0.5 * (a1 + np.roll(a1, -1, axis=1))
        a2f2 = 0.5 * (a2 + np.roll(a2, -1, axis=1))
        scf = stf * ctf
        Fth = ((a2f2 - a1f2) * scf[None, :] * ur_f2
               + (a1f2 * (stf * stf)[None, :] + a2f2 * (ctf * ctf)[None, :])
               * uth_f2 / r)

        out = (rf[1:, :] * Fr[1:, :] - rf[:-1, :] * Fr[:-1, :]) / (r * h)
        out += (Fth - np.roll(Fth, 1, axis=1)) / (r * hth)
        return out

    def _maybe_advance_window(self):
        if not self.polar:
            return
        while self.t - self.window_depth >= self.r_offset + 1.0:
            n_shift = int(round(1.0 / self.h))
            band = self.u[:n_shift, :]
            thresh = 1e-3 * self.epsilon / math.sqrt(1.0 + self.t)
            if band.size and np.all(np.isfinite(band)):
                self.trunc_monitor = max(self.trunc_monitor,
                                         float(np.max(np.abs(band))) / thresh)
            pad = np.zeros((n_shift, self.n_theta))
            self.u = np.vstack([self.u[n_shift:, :], pad])
            self.v = np.vstack([self.v[n_shift:, :], pad.copy()])
            self.r_offset += 1.0
            self.r = self.r_offset + self.h * np.arange(self.r.size)
            mask = self.r < self.r_offset + self.taper_width
            ramp = (1.0 - radial_taper(self.r[mask], self.r_offset,
                                       self.r_offset + self.taper_width))[:, None]
            self.u[mask, :] *= ramp
            self.v[mask, :] *= ramp
            self._lap_cache = None

    def refine_h(self):
        if not self.polar:
            self._cart.refine_h()
            self._sync_from_cart()
            self.h = self._cart.h
            return
        th_ext = np.concatenate([self.theta, [2.0 * np.pi]])
        u_ext = np.hstack([self.u, self.u[:, :1]])
        v_ext = np.hstack([self.v, self.v[:, :1]])
        spl_u = RectBivariateSpline(self.r, th_ext, u_ext)
        spl_v = RectBivariateSpline(self.r, th_ext, v_ext)
        self.h *= 0.5
        n_r = 2 * (self.r.size - 1) + 1
        self.r = self.r_offset + self.h * np.arange(n_r)
        R, TH = np.meshgrid(self.r, self.theta, indexing="ij")
        self.u = spl_u.ev(R, TH)
        self.v = spl_v.ev(R, TH)
        self._lap_cache = None

    def grad_sup(self):
        if not self.polar:
            return self._cart.grad_sup()
        gr = np.max(np.abs(self.u[1:, :] - self.u[:-1, :])) / self.h
        gth = np.max(np.abs(np.roll(self.u, -1, axis=1) - self.u)
                     / (self.r[:, None] * self.h_theta))
        return float(max(gr, gth))

    def monitor(self):
        if not self.polar:
            self._sync_to_cart()
            return self._cart.monitor()
        ut = self.ut()
        gr = np.abs(self.u[2:, :] - self.u[:-2, :]) / (2 * self.h)
        combined = np.abs(ut[1:-1, :]) + gr
        i, j = np.unravel_index(np.argmax(combined), combined.shape)
        return {
            "sup_u": float(np.max(np.abs(self.u))),
            "sup_ut": float(np.max(np.abs(ut))),
            "sup_grad": self.grad_sup(),
            "location": {"r": float(self.r[i + 1]), "theta": float(self.theta[j])},
        }

    def _polar_energy(self):
        u_prev = self.u - self.dt * self.v if self.started else self.u
        h, hth = self.h, self.h_theta
        kin = 0.5 * h * hth * float(np.sum(self.r[:, None] * self.v ** 2))
        du = self.u[1:, :] - self.u[:-1, :]
        dup = u_prev[1:, :] - u_prev[:-1, :]
        pot = 0.5 * hth * float(np.sum((self.r[:-1] + 0.5 * h)[:, None] * du * dup)) / h
        return kin + pot

    def snapshot_rows(self):
        if not self.polar:
            return self._cart.snapshot_rows()
        R, TH = np.meshgrid(self.r, self.theta, indexing="ij")
        ut = self.ut()
        return np.column_stack([R.ravel(), TH.ravel(), self.u.ravel(),
                                ut.ravel()]), "r,theta,u,ut"


def make_initial_field(data: InitialData, epsilon, geometry, cfl=DEFAULT_CFL,
                       horizon=0.0):
    """Sample (eps*u0, eps*u1) on the requested geometry with validation."""
    if isinstance(geometry, CartesianGeometry):
        return CartesianField(data, epsilon, geometry, cfl=cfl, horizon=horizon)
    if isinstance(geometry, RadialGeometry):
        return RadialField(data, epsilon, geometry, cfl=cfl, horizon=horizon)
    if isinstance(geometry, AnnulusGeometry):
        return AnnulusField(data, epsilon, geometry, cfl=cfl, horizon=horizon)
    raise GeometryError(f"unknown geometry {geometry!r}")


def step(field, dt=None, n=1):
    """Advance the field n explicit steps (dt defaults to the field's)."""
    if dt is not None:
        if dt > field._cfl_dt() * (1.0 + 1e-12):
            raise ValueError("requested dt violates the CFL bound")
        field.set_dt(dt)
    return field.step(n)


@dataclass
class BlowupReport:
    detected: bool
    T_est: Optional[float]
    location: Optional[dict]
    rate_exponent: Optional[float]
    history: dict
    refinement_trace: list
    reason: str
    epsilon: float
    sup_u_max: float
    horizon: float
    geometry: str
    metadata: dict = dataclass_field(default_factory=dict)

    def to_json_dict(self):
        hist = {k: list(map(float, v)) for k, v in self.history.items()}
        return {
            "detected": self.detected,
            "T_est": self.T_est,
            "location": self.location,
            "rate_exponent": self.rate_exponent,
            "reason": self.reason,
            "epsilon": self.epsilon,
            "sup_u_max": self.sup_u_max,
            "horizon": self.horizon,
            "geometry": self.geometry,
            "refinement_trace": self.refinement_trace,
            "metadata": self.metadata,
            "history": hist,
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)

    def save_history_csv(self, path):
        cols = ["t", "sup_u", "sup_ut", "sup_grad"]
        rows = np.column_stack([np.asarray(self.history[c]) for c in cols])
        np.savetxt(path, rows, delimiter=",", header=",".join(cols), comments="")


def run_until_blowup(field, config: DetectionConfig):
    """Advance the field, watching g(t) = max(|d_t u|, |grad u|) sup norms.

    Refinement is paced by the scaled steepness s(t) = |grad u|_sup *
    sqrt(1+t) / epsilon, which removes the dispersive amplitude decay and
    tracks the transported gradient of the radiation profile: each crossing
    of steepness_triggers[k] * s_min halves dt and h.  The raw growth factor
    on g (default 8) additionally forces dt-only refinements.  Blowup is
    declared when g exceeds hard_threshold/epsilon, the update stops being
    finite, or refinement is exhausted while g keeps doubling.  T_est comes
    from the linear fit of 1/g over the trailing growth window (the 1/(T-t)
    signature); the rate exponent from log |d_t u| vs log(T_est - t).
    """
    monitor_dt = config.monitor_dt or max(config.horizon / 3000.0, field.dt)
    hist = {"t": [], "sup_u": [], "sup_ut": [], "sup_grad": []}
    trace = []
    g_ref = None
    pre_trigger = True
    s_min = None
    s_ref = None
    refinements = 0
    h_refines = 0
    detected = False
    reason = "horizon reached"
    location = None
    sup_u_max = 0.0

    def record():
        stats = field.monitor()
        hist["t"].append(field.t)
        hist["sup_u"].append(stats["sup_u"])
        hist["sup_ut"].append(stats["sup_ut"])
        hist["sup_grad"].append(stats["sup_grad"])
        return stats

    stats = record()
    location = stats["location"]
    while field.t < config.horizon - 1e-12:
        target = min(field.t + monitor_dt, config.horizon)
        n_steps = max(1, int(math.ceil((target - field.t) / field.dt - 1e-9)))
        field.step(n_steps)
        stats = record()
        g = max(stats["sup_ut"], stats["sup_grad"])
        if not (np.isfinite(g) and np.isfinite(stats["sup_u"])):
            detected = True
            reason = "numerical blowup (non-finite update)"
            break
        location = stats["location"]
        sup_u_max = max(sup_u_max, stats["sup_u"])
        field.check_cfl()
        if g > config.hard_threshold / field.epsilon:
            detected = True
            reason = "hard threshold exceeded"
            break

        if g_ref is None:
            g_ref = g
        if pre_trigger:
            g_ref = min(g_ref, g)
        s = stats["sup_grad"] * math.sqrt(1.0 + field.t) / field.epsilon
        if field.t >= config.arm_time and s > 0.0:
            if h_refines == 0 and (s_min is None or s < s_min):
                s_min = s

        h_allowed = (config.refine_h and hasattr(field, "refine_h")
                     and h_refines < len(config.steepness_triggers))
        steepened = (h_allowed and s_min is not None
                     and s > config.steepness_triggers[h_refines] * s_min)
        grew = g > config.growth_factor * g_ref
        if (not h_allowed) and refinements >= 1 and s_ref is not None \
                and s >= config.exhaust_growth * s_ref:
            detected = True
            reason = "refinements exhausted while growth persists"
            break
        if steepened or grew:
            if refinements < config.max_refinements:
                refinements += 1
                pre_trigger = False
                field.set_dt(0.5 * field.dt)
                did_h = False
                if steepened:
                    field.refine_h()
                    did_h = True
                    h_refines += 1
                trace.append({"t": field.t, "g": g, "s": s, "dt": field.dt,
                              "refined_h": did_h, "index": refinements,
                              "trigger": "steepness" if steepened else "growth"})
                g_ref = g
                s_ref = s
            else:
                detected = True
                reason = "refinements exhausted while growth persists"
                break

    t_arr = np.asarray(hist["t"])
    g_arr = np.maximum(np.asarray(hist["sup_ut"]), np.asarray(hist["sup_grad"]))
    T_est = None
    rate = None
    window = None
    if detected:
        window = fitting.blowup_window(t_arr, g_arr, decade=config.fit_decade,
                                       min_samples=config.min_fit_samples)
        T_est, window = fitting.fit_blowup_time(
            t_arr, g_arr, decade=config.fit_decade,
            min_samples=config.min_fit_samples, window=window)
        if T_est is not None and window is not None:
            try:
                rate, _ = fitting.fit_rate_exponent(
                    t_arr, np.asarray(hist["sup_ut"]), T_est, window)
            except ValueError:
                rate = None
    metadata = {"refinements": refinements, "final_dt": field.dt,
                "cfl": field.cfl, "final_h": getattr(field, "h", None)}
    if hasattr(field, "trunc_monitor"):
        metadata["window_truncation_ratio"] = field.trunc_monitor
    return BlowupReport(detected=detected, T_est=T_est, location=location,
                        rate_exponent=rate, history=hist,
                        refinement_trace=trace, reason=reason,
                        epsilon=field.epsilon, sup_u_max=sup_u_max,
                        horizon=config.horizon, geometry=field.kind,
                        metadata=metadata)


# -- scaling studies ----------------------------------------------------------

def dispersion_limited_h(horizon, lag_budget=0.033, k_ref=2.0 * math.pi,
                         cfl=DEFAULT_CFL, h_cap=0.025):
    """Grid step keeping the accumulated leapfrog phase lag below budget.

    The scheme's phase-speed deficit is (1 - cfl^2) (k h)^2 / 24 per unit
    time; restricting the k_ref lag over the whole horizon bounds h.  The
    result is snapped so an integer number of cells spans one time unit
    (required by the comoving-window shifts).
    """
    coef = (1.0 - cfl * cfl) / 24.0
    h = math.sqrt(lag_budget / (coef * k_ref * k_ref * max(horizon, 1.0)))
    h = min(h, h_cap)
    n_per_unit = max(40, int(math.ceil(1.0 / h / 10.0)) * 10)
    return 1.0 / n_per_unit


def default_geometry_policy(kind, data, epsilon, horizon, h_r=None, n_theta=256,
                            window_depth=None):
    """Geometry sized from the predicted horizon for one scaling-study row."""
    M = data.support_radius
    if kind == "radial":
        h = h_r or dispersion_limited_h(horizon)
        depth = window_depth if window_depth is not None else 18.0
        if horizon <= depth:
            return RadialGeometry(r_max=M + horizon + 2.0, h_r=h, window_depth=None)
        return RadialGeometry(r_max=0.0, h_r=h, window_depth=depth)
    if kind == "annulus":
        h = h_r or dispersion_limited_h(horizon)
        depth = window_depth if window_depth is not None else 25.0
        if horizon <= depth + 10.0:
            return CartesianGeometry(extent=M + horizon + 2.0, h=h)
        return AnnulusGeometry(h_r=h, n_theta=n_theta, window_depth=depth)
    if kind == "cartesian":
        h = h_r or dispersion_limited_h(horizon)
        return CartesianGeometry(extent=M + horizon + 2.0, h=h)
    raise GeometryError(f"unknown geometry policy {kind!r}")


@dataclass
class StudyRow:
    epsilon: float
    detected: bool
    T_est: Optional[float]
    eps_sqrt_T: Optional[float]
    rel_gap: Optional[float]
    rate_exponent: Optional[float]
    sup_u_max: float
    geometry: str
    h: float
    dt0: float
    refinements: int
    flagged: bool
    wall_time: float   # console diagnostics only; excluded from files
    location: Optional[dict] = None


@dataclass
class StudyResult:
    tau0: float
    rows: list
    gap_decreasing: Optional[bool]
    metadata: dict = dataclass_field(default_factory=dict)

    def to_json_dict(self):
        rows = []
        for row in self.rows:
            rows.append({
                "epsilon": row.epsilon, "detected": row.detected,
                "T_est": row.T_est, "eps_sqrt_T": row.eps_sqrt_T,
                "rel_gap": row.rel_gap, "rate_exponent": row.rate_exponent,
                "sup_u_max": row.sup_u_max, "geometry": row.geometry,
                "h": row.h, "dt0": row.dt0, "refinements": row.refinements,
                "flagged": row.flagged, "location": row.location,
            })
        return {"tau0": self.tau0 if math.isfinite(self.tau0) else None,
                "rows": rows, "gap_decreasing": self.gap_decreasing,
                "metadata": self.metadata}

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)

    def save_csv(self, path):
        header = ("epsilon,detected,T_est,eps_sqrt_T,rel_gap,rate_exponent,"
                  "sup_u_max,geometry,h,dt0,refinements,flagged")
        lines = [header]
        for r in self.rows:
            vals = [r.epsilon, int(r.detected), r.T_est, r.eps_sqrt_T,
                    r.rel_gap, r.rate_exponent, r.sup_u_max, r.geometry,
                    r.h, r.dt0, r.refinements, int(r.flagged)]
            lines.append(",".join("" if v is None else str(v) for v in vals))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def scaling_study(data: InitialData, epsilons, tau0, geometry_kind="radial",
                  horizon_factor=2.0, h_r=None, n_theta=256,
                  window_depth=None, cfl=DEFAULT_CFL, detect_kwargs=None,
                  verbose=False):
    """Measure the empirical lifespan across an epsilon ladder.

    Rows run in descending epsilon; each geometry is sized from the predicted
    lifespan (tau0 / eps)^2 with margin.  Rows that fail detection where a
    finite tau0 was predicted are flagged and the study continues.
    """
    epsilons = list(epsilons)
    if any(e2 >= e1 for e1, e2 in zip(epsilons, epsilons[1:])):
        raise ValueError("epsilons must be sorted in descending order")
    rows = []
    for eps in epsilons:
        t_pred = (tau0 / eps) ** 2 if math.isfinite(tau0) else 20.0
        horizon = horizon_factor * t_pred
        geometry = default_geometry_policy(geometry_kind, data, eps, horizon,
                                           h_r=h_r, n_theta=n_theta,
                                           window_depth=window_depth)
        field = make_initial_field(data, eps, geometry, cfl=cfl, horizon=horizon)
        kwargs = dict(detect_kwargs or {})
        # stencil refinement on full Cartesian grids is memory-prohibitive;
        # those rows refine dt only
        if isinstance(geometry, CartesianGeometry):
            kwargs.setdefault("refine_h", False)
        cfg = DetectionConfig(horizon=horizon, cfl=cfl, **kwargs)
        start = time.perf_counter()
        report = run_until_blowup(field, cfg)
        wall = time.perf_counter() - start
        est = report.T_est if report.detected else None
        eps_sqrt = eps * math.sqrt(est) if est else None
        gap = (abs(eps_sqrt - tau0) / tau0
               if (eps_sqrt and math.isfinite(tau0)) else None)
        flagged = math.isfinite(tau0) and not report.detected
        rows.append(StudyRow(
            epsilon=eps, detected=report.detected, T_est=est,
            eps_sqrt_T=eps_sqrt, rel_gap=gap,
            rate_exponent=report.rate_exponent, sup_u_max=report.sup_u_max,
            geometry=report.geometry, h=getattr(field, "h", 0.0),
            dt0=field.dt, refinements=len(report.refinement_trace),
            flagged=flagged, wall_time=wall, location=report.location))
        if verbose:
            print(f"  eps={eps:g} detected={report.detected} T_est={est} "
                  f"eps*sqrt(T)={eps_sqrt} gap={gap} wall={wall:.1f}s")
    gaps = [r.rel_gap for r in rows if r.rel_gap is not None]
    decreasing = gaps[-1] < gaps[-2] if len(gaps) >= 2 else None
    return StudyResult(tau0=tau0, rows=rows, gap_decreasing=decreasing,
                       metadata={"geometry": geometry_kind,
                                 "horizon_factor": horizon_factor})


# -- pressure-gradient reduction ----------------------------------------------

def pressure_gradient_setup(U0: VectorField, P0: ScalarField, support_radius,
                            grid_step=0.02):
    """Initial data of the log-pressure wave equation from (U0, P0).

    u0 = P0 and u1 = -div U0 (divergence by 4th-order central differences on
    the sampled grid); the sound speeds are c_i(u) = exp(u/2), whose
    quadratic-model constants are c_i = 2 c_i'(0) = 1.
    """
    M = float(support_radius)
    n = int(round(2.0 * (M + 1.0) / grid_step)) + 1
    ax = np.linspace(-(M + 1.0), M + 1.0, n)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    ux = U0.fx(X, Y)
    uy = U0.fy(X, Y)
    div = (fitting.derivative_4th(ux, ax, axis=0)
           + fitting.derivative_4th(uy, ax, axis=1))
    u1_vals = -div
    spl = RectBivariateSpline(ax, ax, u1_vals, kx=3, ky=3)

    def f(px, py):
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        inside = (np.abs(px) <= ax[-1]) & (np.abs(py) <= ax[-1])
        out = np.zeros_like(px)
        if np.any(inside):
            out[inside] = spl.ev(px[inside], py[inside])
        return out

    def g(px, py):
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        inside = (np.abs(px) <= ax[-1]) & (np.abs(py) <= ax[-1])
        gx = np.zeros_like(px)
        gy = np.zeros_like(px)
        if np.any(inside):
            gx[inside] = spl.ev(px[inside], py[inside], dx=1)
            gy[inside] = spl.ev(px[inside], py[inside], dy=1)
        return gx, gy

    def exp_half(u):
        return np.exp(np.asarray(u, dtype=float) / 2.0)

    u1_field = ScalarField(f, g, label="-div U0")
    data = InitialData(u0=P0, u1=u1_field, support_radius=M,
                       c1=1.0, c2=1.0, c1_fn=exp_half, c2_fn=exp_half,
                       label="pressure-gradient")
    data.check_support(tol=1e-8)
    return data
