"""Pure numpy implementations of the hot kernels.

Two operations dominate the laboratory's runtime and have a compiled twin
in ``_compiled.pyx``:

* ``heisenberg_distance`` -- exact Carnot-Caratheodory distance from the
  origin on the first Heisenberg group, used as the membership oracle for
  Monte Carlo ball volumes and as the target-distance oracle inside
  dilatation profiles.
* ``propagate`` / ``propagate_with_grad`` -- batched piecewise-constant
  control trajectories of a polynomial horizontal frame, integrated with
  fixed-substep RK4 (exact on nilpotent models, where the velocity is
  polynomial in time), plus the reverse-mode adjoint sweep used by the
  distance solver.

Both backends must implement the same signatures; agreement is asserted
in the test suite and timed in ``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import numpy as np

_TWO_PI = 2.0 * np.pi


def _chord_ratio(theta: np.ndarray) -> np.ndarray:
    # (theta - sin theta) / (8 sin^2(theta/2)): vertical displacement of a
    # unit-chord geodesic arc as a function of its turning angle.
    s = np.sin(0.5 * theta)
    return (theta - np.sin(theta)) / (8.0 * s * s)


def heisenberg_distance(points: np.ndarray) -> np.ndarray:
    """Exact CC distance from the origin on the Heisenberg group h_1.

    Coordinates follow the convention where horizontal curves satisfy
    t' = (x y' - y x')/2.  Geodesics project to circular arcs; given the
    horizontal chord rho and height t, the turning angle solves
    (theta - sin theta) / (8 sin^2(theta/2)) = |t| / rho^2 on (0, 2*pi),
    and the length is theta * rho / (2 sin(theta/2)).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y, t = pts[:, 0], pts[:, 1], pts[:, 2]
    rho = np.hypot(x, y)
    tau = np.abs(t)
    out = np.empty(pts.shape[0])

    vertical = rho == 0.0
    out[vertical] = 2.0 * np.sqrt(np.pi * tau[vertical])

    gen = ~vertical
    if np.any(gen):
        mu = tau[gen] / (rho[gen] * rho[gen])
        d = np.empty(mu.shape[0])

        flat = mu < 1e-8          # arc indistinguishable from a straight chord
        steep = mu > 1e8          # chord negligible next to the vertical lift
        mid = ~(flat | steep)

        d[flat] = rho[gen][flat]
        d[steep] = 2.0 * np.sqrt(np.pi * tau[gen][steep])
        if np.any(mid):
            lo = np.full(np.count_nonzero(mid), 1e-9)
            hi = np.full(lo.shape[0], _TWO_PI - 1e-12)
            target = mu[mid]
            for _ in range(60):
                mid_theta = 0.5 * (lo + hi)
                high = _chord_ratio(mid_theta) > target
                hi = np.where(high, mid_theta, hi)
                lo = np.where(high, lo, mid_theta)
            theta = 0.5 * (lo + hi)
            d[mid] = theta * rho[gen][mid] / (2.0 * np.sin(0.5 * theta))
        out[gen] = d

    if np.asarray(points).ndim == 1:
        return out[0]
    return out


def _field_velocity(expo, coef, field, slot, x, u):
    """Velocity sum_j u_j X_j(x) for a monomial term table, batched over rows."""
    mono = np.prod(x[:, None, :] ** expo[None, :, :], axis=2)  # (B, T)
    v = np.zeros_like(x)
    for t in range(coef.shape[0]):
        v[:, slot[t]] += coef[t] * u[:, field[t]] * mono[:, t]
    return v


def _field_vjps(expo, coef, field, slot, x, u, bar):
    """Adjoints of the velocity: returns (bar_x, bar_u) for cotangent `bar`."""
    powers = x[:, None, :] ** expo[None, :, :]
    mono = np.prod(powers, axis=2)
    bar_x = np.zeros_like(x)
    bar_u = np.zeros_like(u)
    for t in range(coef.shape[0]):
        w = coef[t] * bar[:, slot[t]]
        bar_u[:, field[t]] += w * mono[:, t]
        wu = w * u[:, field[t]]
        for k in range(x.shape[1]):
            e = expo[t, k]
            if e == 0:
                continue
            rest = mono[:, t] / np.where(powers[:, t, k] == 0.0, 1.0, powers[:, t, k])
            rest = np.where(powers[:, t, k] == 0.0, 0.0, rest)
            if e == 1:
                grad_term = rest
            else:
                grad_term = e * rest * x[:, k] ** (e - 1)
            bar_x[:, k] += wu * grad_term
    return bar_x, bar_u


def _rk4_step(expo, coef, field, slot, x, u, h):
    k1 = _field_velocity(expo, coef, field, slot, x, u)
    k2 = _field_velocity(expo, coef, field, slot, x + 0.5 * h * k1, u)
    k3 = _field_velocity(expo, coef, field, slot, x + 0.5 * h * k2, u)
    k4 = _field_velocity(expo, coef, field, slot, x + h * k3, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate(expo, coef, field, slot, x0, controls, dt, substeps=1):
    """Endpoints of piecewise-constant control trajectories.

    x0: (B, n) start states; controls: (B, N, r) one constant control per
    segment; dt: segment duration; substeps: RK4 steps per segment.
    """
    x = np.array(x0, dtype=float, copy=True)
    h = dt / substeps
    for seg in range(controls.shape[1]):
        u = controls[:, seg, :]
        for _ in range(substeps):
            x = _rk4_step(expo, coef, field, slot, x, u, h)
    return x


def propagate_with_grad(expo, coef, field, slot, x0, controls, dt, bar, substeps=1):
    """Endpoints plus the adjoint gradient of <bar, endpoint> w.r.t. controls."""
    B, N, _ = controls.shape
    h = dt / substeps
    states = np.empty((N * substeps + 1, B, x0.shape[1]))
    states[0] = x0
    x = np.array(x0, dtype=float, copy=True)
    idx = 0
    for seg in range(N):
        u = controls[:, seg, :]
        for _ in range(substeps):
            x = _rk4_step(expo, coef, field, slot, x, u, h)
            idx += 1
            states[idx] = x

    grad_u = np.zeros_like(controls)
    bar_x = np.array(bar, dtype=float, copy=True)
    for step in range(N * substeps - 1, -1, -1):
        seg = step // substeps
        u = controls[:, seg, :]
        xs = states[step]
        k1 = _field_velocity(expo, coef, field, slot, xs, u)
        a2 = xs + 0.5 * h * k1
        k2 = _field_velocity(expo, coef, field, slot, a2, u)
        a3 = xs + 0.5 * h * k2
        k3 = _field_velocity(expo, coef, field, slot, a3, u)
        a4 = xs + h * k3

        bar_k1 = (h / 6.0) * bar_x
        bar_k2 = (h / 3.0) * bar_x
        bar_k3 = (h / 3.0) * bar_x
        bar_k4 = (h / 6.0) * bar_x

        ax4, au4 = _field_vjps(expo, coef, field, slot, a4, u, bar_k4)
        bar_k3 = bar_k3 + h * ax4
        ax3, au3 = _field_vjps(expo, coef, field, slot, a3, u, bar_k3)
        bar_k2 = bar_k2 + 0.5 * h * ax3
        ax2, au2 = _field_vjps(expo, coef, field, slot, a2, u, bar_k2)
        bar_k1 = bar_k1 + 0.5 * h * ax2
        ax1, au1 = _field_vjps(expo, coef, field, slot, xs, u, bar_k1)

        grad_u[:, seg, :] += au1 + au2 + au3 + au4
        bar_x = bar_x + ax1 + ax2 + ax3 + ax4

    return states[-1], grad_u
