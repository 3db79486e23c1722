"""Optional numba kernel for the radial leapfrog sweep (hot loop).

The numpy implementation in wavesim stays the reference; this fused kernel
exists because the small-epsilon scaling rows take millions of steps on
grids of a few ten thousand cells.  Coefficient modes: 0 -> a = 1,
1 -> a = 1 + c*u, 2 -> a = exp(u).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba is normally installed
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap(args[0]) if args and callable(args[0]) else wrap


@njit(cache=True)
def radial_leapfrog(u, v, r_face, inv_r, h, dt, n_steps, mode, c, origin,
                    half_first):
    """n_steps leapfrog kicks/drifts in place; r_face[i] is the radius of the
    face between cells i and i+1 (length n), inv_r[i] = 1/r over cells
    (inv_r[0] unused at the origin)."""
    n = u.size
    a = np.empty(n)
    face = np.empty(n)
    inv_h2 = 1.0 / (h * h)
    for it in range(n_steps):
        if mode == 0:
            for i in range(n):
                a[i] = 1.0
        elif mode == 1:
            for i in range(n):
                a[i] = 1.0 + c * u[i]
        else:
            for i in range(n):
                a[i] = np.exp(u[i])

        for i in range(n - 1):
            face[i] = r_face[i] * 0.5 * (a[i] + a[i + 1]) * (u[i + 1] - u[i])
        face[n - 1] = r_face[n - 1] * 0.5 * (a[n - 1] + 1.0) * (0.0 - u[n - 1])

        kick = dt
        if half_first and it == 0:
            kick = 0.5 * dt

        # inner cell first (origin symmetry or windowed zero ghost)
        if origin:
            lap0 = 4.0 * 0.5 * (a[0] + a[1]) * (u[1] - u[0]) * inv_h2
        else:
            r_in = r_face[0] - h
            fm = r_in * 0.5 * (a[0] + 1.0) * u[0]
            lap0 = (face[0] - fm) * inv_h2 * inv_r[0]
        v[0] = v[0] + kick * lap0
        for i in range(1, n):
            lap = (face[i] - face[i - 1]) * inv_h2 * inv_r[i]
            v[i] = v[i] + kick * lap
        for i in range(n):
            u[i] = u[i] + dt * v[i]
