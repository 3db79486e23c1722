"""Least-squares fits and finite-difference helpers shared across modules."""

from __future__ import annotations

import numpy as np


def linear_fit(x, y):
    """Ordinary least squares y = a*x + b; returns (a, b, r_squared)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points to fit a line")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(coef[0]), float(coef[1]), r2


def loglog_fit(x, y):
    """Power-law fit y ~ C * x^p on positive samples; returns (p, r2, n)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    good = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if np.count_nonzero(good) < 2:
        raise ValueError("not enough positive samples for a log-log fit")
    p, _, r2 = linear_fit(np.log(x[good]), np.log(y[good]))
    return p, r2, int(np.count_nonzero(good))


def derivative_4th(values, grid, axis=0):
    """4th-order first derivative on a uniform grid, one-sided at the ends."""
    values = np.asarray(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if grid.size < 5:
        raise ValueError("need at least 5 samples for the 4th-order stencil")
    h = grid[1] - grid[0]
    if np.max(np.abs(np.diff(grid) - h)) > 1e-10 * max(abs(h), 1.0):
        raise ValueError("derivative_4th requires a uniform grid")
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[2:-2] = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * h)
    # one-sided 4th-order stencils at the boundary rows
    c0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * h)
    c1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / (12.0 * h)
    out[0] = np.tensordot(c0, v[:5], axes=(0, 0))
    out[1] = np.tensordot(c1, v[:5], axes=(0, 0))
    out[-1] = -np.tensordot(c0, v[-5:][::-1], axes=(0, 0))
    out[-2] = -np.tensordot(c1, v[-5:][::-1], axes=(0, 0))
    return np.moveaxis(out, 0, axis)


def blowup_window(t, g, decade=10.0, min_samples=10):
    """Indices of the clean growth window: the run-up to the final peak.

    The initial-data transient can dominate the raw maximum, so the window is
    anchored after the global minimum of g (the dispersive trough): it spans
    the trailing samples within one `decade` of the post-trough peak.
    """
    t = np.asarray(t, dtype=float)
    g = np.asarray(g, dtype=float)
    finite = np.isfinite(g) & (g > 0)
    if np.count_nonzero(finite) < min_samples:
        return None
    idx = np.nonzero(finite)[0]
    trough = idx[np.argmin(g[idx])]
    late = idx[idx >= trough]
    peak = late[np.argmax(g[late])]
    window = late[(late <= peak) & (g[late] >= g[peak] / decade)]
    if window.size < min_samples:
        window = late[late <= peak][-min_samples:]
    if window.size < 2:
        return None
    return window


def fit_blowup_time(t, g, decade=10.0, min_samples=10, window=None):
    """Blowup-time estimate from the linearity of 1/g(t) near the singularity.

    Fits 1/g = a*(T - t) over the clean growth window (supplied indices, or
    the run-up to the last finite peak) and returns (T_est, window_indices),
    or (None, None) when no growth window exists.
    """
    if window is None:
        window = blowup_window(t, g, decade=decade, min_samples=min_samples)
    if window is None or len(window) < 2:
        return None, None
    tw = np.asarray(t, dtype=float)[window]
    yw = 1.0 / np.asarray(g, dtype=float)[window]
    slope, intercept, _ = linear_fit(tw, yw)
    if slope >= 0:
        return None, window
    T_est = -intercept / slope
    t_last = float(tw[-1])
    if T_est <= t_last:
        T_est = np.nextafter(t_last, np.inf)
    return float(T_est), window


def fit_rate_exponent(t, g, T_est, window=None):
    """Exponent p in g ~ (T_est - t)^p over the supplied window indices."""
    t = np.asarray(t, dtype=float)
    g = np.asarray(g, dtype=float)
    if window is None:
        window = blowup_window(t, g)
        if window is None:
            raise ValueError("no usable window for the rate fit")
    dt = T_est - t[window]
    good = dt > 0
    p, r2, _ = loglog_fit(dt[good], g[window][good])
    return p, r2
