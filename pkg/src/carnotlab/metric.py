"""Carnot-Caratheodory distance, sphere sampling, and ball volumes.

The distance solver is a direct optimal-control transcription: piecewise
constant controls, endpoint penalty with an escalating continuation
schedule, batched first-order descent over all restarts at once, and a
quasi-Newton polish of the best restart.  Its value is the length of an
actual horizontal curve whose endpoint lands within tolerance, so it is
an upper bound by construction.

Built-in models carry exact distance oracles (closed form on the
Heisenberg group, Euclidean on abelian charts); the solver is validated
against them and against dilation homogeneity in the test suite, and the
oracles in turn make million-sample Monte Carlo ball volumes cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .algebra import builtin_algebra, norm_for
from .frames import HorizontalFrame
from .util import as_point, rng_for, sphere_directions


class DegenerateSamplingError(RuntimeError):
    """Monte Carlo membership test registered zero hits."""


@dataclass(frozen=True)
class DistanceOptions:
    segments: int = 64
    substeps: int = 1
    restarts: int = 8
    rounds: int = 6
    mu0: float = 1e2
    mu_factor: float = 10.0
    descent_steps: int = 120
    learning_rate: float = 0.05
    polish_iterations: int = 80
    endpoint_tol: float = 1e-6
    seed: int = 0


@dataclass
class DistanceResult:
    value: float
    endpoint_error: float
    controls: np.ndarray
    restarts_used: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "endpoint_error": float(self.endpoint_error),
            "restarts_used": int(self.restarts_used),
            "converged": bool(self.converged),
            "segments": int(self.controls.shape[0]),
            "diagnostics": self.diagnostics,
        }


# -- exact model oracles ------------------------------------------------------

_H1 = builtin_algebra("heisenberg1")


def _is_heisenberg(frame: HorizontalFrame) -> bool:
    alg = frame.algebra
    return (
        alg is not None
        and alg.layers == (2, 1)
        and np.array_equal(alg.brackets, _H1.brackets)
    )


def _is_abelian(frame: HorizontalFrame) -> bool:
    return frame.algebra is not None and frame.algebra.step == 1


def exact_distance_function(frame: HorizontalFrame):
    """Exact d(p, .) for frames with closed-form distance, else None.

    Returns a callable (p, points) -> distances, vectorized over points.
    """
    if _is_abelian(frame):
        def euclid(p, points):
            p = as_point(p, frame.n)
            pts = np.atleast_2d(np.asarray(points, dtype=float))
            return np.linalg.norm(pts - p, axis=-1)

        return euclid
    if _is_heisenberg(frame):
        alg = frame.algebra

        def heis(p, points):
            p = as_point(p, frame.n)
            pts = np.atleast_2d(np.asarray(points, dtype=float))
            return kernels.heisenberg_distance(alg.conjugate_difference(p, pts))

        return heis
    return None


# -- the transcription solver -------------------------------------------------

def _objective_batch(table, x0, controls, dt, substeps, mu, target):
    end = kernels.propagate(*table, x0, controls, dt, substeps)
    gap = end - target
    energy = (controls**2).sum(axis=(1, 2)) * dt
    return end, gap, energy + mu * (gap**2).sum(axis=1)


def _adam_rounds(table, x0, controls, dt, substeps, target, mu_schedule, steps, lr):
    m = np.zeros_like(controls)
    v = np.zeros_like(controls)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    t = 0
    for mu in mu_schedule:
        for _ in range(steps):
            t += 1
            end = kernels.propagate(*table, x0, controls, dt, substeps)
            bar = 2.0 * mu * (end - target)
            _, grad_pen = kernels.propagate_with_grad(
                *table, x0, controls, dt, bar, substeps
            )
            grad = 2.0 * dt * controls + grad_pen
            m = beta1 * m + (1 - beta1) * grad
            v = beta2 * v + (1 - beta2) * grad * grad
            mhat = m / (1 - beta1**t)
            vhat = v / (1 - beta2**t)
            controls = controls - lr * mhat / (np.sqrt(vhat) + eps)
    return controls


def cc_distance(
    frame: HorizontalFrame, p, q, opts: DistanceOptions | None = None
) -> DistanceResult:
    """Upper-bound CC distance via direct transcription.

    Minimizes control energy with endpoint penalty mu*|end - q|^2 over the
    continuation schedule mu0 * mu_factor^k, then reports the length of
    the best curve found; flags non-convergence when the endpoint misses
    by more than `endpoint_tol` after all restarts.
    """
    opts = opts or DistanceOptions()
    p = as_point(p, frame.n)
    q = as_point(q, frame.n)
    if np.array_equal(p, q):
        return DistanceResult(0.0, 0.0, np.zeros((opts.segments, frame.r)), 0, True)

    table = frame.term_table
    N, r = opts.segments, frame.r
    dt = 1.0 / N

    mat = frame.frame_matrix(p)
    u_line, *_ = np.linalg.lstsq(mat, q - p, rcond=None)
    scale = max(float(np.linalg.norm(u_line)), _seed_scale(frame, p, q))
    rng = rng_for(opts.seed, "cc-distance", *np.round(p, 12), *np.round(q, 12))
    starts = [np.tile(u_line, (N, 1))]
    for _ in range(opts.restarts - 1):
        starts.append(np.tile(u_line, (N, 1)) + rng.normal(size=(N, r)) * 0.7 * scale)
    controls = np.stack(starts)
    x0 = np.tile(p, (opts.restarts, 1))
    target = np.tile(q, (opts.restarts, 1))

    mu_schedule = [opts.mu0 * opts.mu_factor**k for k in range(opts.rounds)]
    controls = _adam_rounds(
        table, x0, controls, dt, opts.substeps, target,
        mu_schedule, opts.descent_steps, opts.learning_rate,
    )

    end, gap, objective = _objective_batch(
        table, x0, controls, dt, opts.substeps, mu_schedule[-1], target
    )
    lengths = np.linalg.norm(controls, axis=2).sum(axis=1) * dt
    errors = np.linalg.norm(gap, axis=1)
    # among restarts that reached the target (or tie for closest), shortest wins
    near = errors <= max(opts.endpoint_tol, float(errors.min()) * 1.01)
    best = int(np.flatnonzero(near)[np.argmin(lengths[near])])

    # quasi-Newton polish of the best restart along the tail of the schedule
    x0_one = p[None, :]
    target_one = q[None, :]

    def make_fun(mu):
        def fun(u_flat):
            u = u_flat.reshape(1, N, r)
            endp = kernels.propagate(*table, x0_one, u, dt, opts.substeps)
            gap1 = endp - target_one
            value = float((u**2).sum() * dt + mu * (gap1**2).sum())
            bar = 2.0 * mu * gap1
            _, gpen = kernels.propagate_with_grad(*table, x0_one, u, dt, bar, opts.substeps)
            return value, (2.0 * dt * u + gpen).ravel()

        return fun

    u_flat = controls[best].ravel()
    for mu in mu_schedule[-3:]:
        res = minimize(
            make_fun(mu),
            u_flat,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": opts.polish_iterations},
        )
        u_flat = res.x
    mu = mu_schedule[-1]
    polished = u_flat.reshape(N, r)
    endp = kernels.propagate(*table, x0_one, polished[None], dt, opts.substeps)[0]
    err = float(np.linalg.norm(endp - q))
    length = float(np.linalg.norm(polished, axis=1).sum() * dt)
    if err > errors[best]:  # polish should never be accepted blindly
        polished = controls[best]
        err = float(errors[best])
        length = float(lengths[best])

    return DistanceResult(
        value=length,
        endpoint_error=err,
        controls=polished,
        restarts_used=opts.restarts,
        converged=bool(err <= opts.endpoint_tol),
        diagnostics={
            "mu_final": mu,
            "restart_errors": [float(e) for e in errors],
            "restart_lengths": [float(v) for v in lengths],
        },
    )


def _seed_scale(frame: HorizontalFrame, p, q) -> float:
    if frame.algebra is not None:
        diff = frame.algebra.conjugate_difference(p, q)
        return float(norm_for(frame.algebra)(diff))
    return float(np.linalg.norm(np.asarray(q) - np.asarray(p)))


def distance_function(frame: HorizontalFrame, opts: DistanceOptions | None = None):
    """Batched d(p, points): the exact oracle when the model has one,
    otherwise one transcription solve per point."""
    exact = exact_distance_function(frame)
    if exact is not None:
        return exact
    opts = opts or DistanceOptions()

    def solved(p, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.array([cc_distance(frame, p, q, opts).value for q in pts])

    return solved


# -- spheres and balls --------------------------------------------------------

def constant_control_endpoints(frame: HorizontalFrame, x, scaled_dirs, substeps=4):
    """Endpoints of unit-time constant-control curves with control vectors
    `scaled_dirs` (B, r): curve length = |control|."""
    table = frame.term_table
    B = scaled_dirs.shape[0]
    x0 = np.tile(as_point(x, frame.n), (B, 1))
    controls = scaled_dirs[:, None, :]
    return kernels.propagate(*table, x0, controls, 1.0, substeps)


@dataclass
class SphereSample:
    points: np.ndarray
    requested: int
    achieved: int
    max_radial_error: float


def cc_sphere_sample(
    frame: HorizontalFrame,
    x,
    r: float,
    m: int,
    rel_tol: float = 0.02,
    opts: DistanceOptions | None = None,
) -> SphereSample:
    """m points at CC distance r from x (within rel_tol), by shooting
    constant-control rays and bisecting the ray scale."""
    if r <= 0:
        raise ValueError(f"sphere radius must be positive, got {r}")
    x = as_point(x, frame.n)
    dirs = sphere_directions(m, frame.r)
    dist = exact_distance_function(frame)
    substeps = 1 if frame.is_group_model else 6

    if dist is None:
        # constant-control curves have length exactly r; without an exact
        # oracle these are reported with upper-bound semantics
        pts = constant_control_endpoints(frame, x, r * dirs, substeps=substeps)
        return SphereSample(points=pts, requested=m, achieved=m, max_radial_error=np.nan)

    lo = np.full(m, 0.25 * r)
    hi = np.full(m, 4.0 * r)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        pts = constant_control_endpoints(frame, x, mid[:, None] * dirs, substeps=substeps)
        over = dist(x, pts) > r
        hi = np.where(over, mid, hi)
        lo = np.where(over, lo, mid)
    mid = 0.5 * (lo + hi)
    pts = constant_control_endpoints(frame, x, mid[:, None] * dirs, substeps=substeps)
    errs = np.abs(dist(x, pts) - r)
    keep = errs <= rel_tol * r
    if not np.all(keep):
        pts = pts[keep]
    return SphereSample(
        points=pts,
        requested=m,
        achieved=int(keep.sum()),
        max_radial_error=float(errs[keep].max() / r) if keep.any() else np.nan,
    )


def ball_points(frame: HorizontalFrame, x, r: float, count: int, seed: int = 0) -> np.ndarray:
    """Sample of the closed ball B(x, r): sphere shells at sub-radii plus
    endpoints of random 3-segment horizontal curves of total length <= r
    (curve length bounds CC distance, so membership is guaranteed)."""
    x = as_point(x, frame.n)
    shell_counts = max(4, count // 4)
    shells = []
    for frac in (1.0, 0.75, 0.5, 0.25):
        shells.append(cc_sphere_sample(frame, x, frac * r, shell_counts).points)
    rng = rng_for(seed, "ball-points", frame.name, *np.round(x, 12), r)
    k = 3
    remaining = max(count - sum(s.shape[0] for s in shells), count // 2)
    dirs = rng.normal(size=(remaining, k, frame.r))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    lengths = rng.dirichlet(np.ones(k), size=remaining) * r
    # each segment runs for time 1/k, so control magnitude k*length gives
    # segment length exactly `length`
    controls = dirs * (k * lengths[:, :, None])
    table = frame.term_table
    x0 = np.tile(x, (remaining, 1))
    substeps = 1 if frame.is_group_model else 4
    wander = kernels.propagate(*table, x0, controls, 1.0 / k, substeps)
    return np.concatenate(shells + [wander], axis=0)


@dataclass
class VolumeEstimate:
    volume: float
    std_error: float
    hits: int
    samples: int
    box_halfwidths: tuple

    def to_dict(self) -> dict:
        return {
            "volume": self.volume,
            "std_error": self.std_error,
            "hits": self.hits,
            "samples": self.samples,
            "box_halfwidths": list(self.box_halfwidths),
        }


def bounding_box_halfwidths(frame: HorizontalFrame, r: float) -> np.ndarray:
    """Half-widths of a coordinate box around the center containing B(., r)
    in group-difference coordinates."""
    if _is_heisenberg(frame):
        # over curves of length r with turning angle theta, the height is
        # r^2 (theta - sin theta) / (2 theta^2), maximal at theta = pi
        # (half-circle geodesics): |t| <= r^2 / (2 pi)
        return np.array([r, r, r * r / (2.0 * np.pi)])
    if _is_abelian(frame):
        return np.full(frame.n, r)
    if frame.algebra is not None:
        consts = _calibrated_box_constants(frame)
        return consts * r ** np.asarray(frame.algebra.weights, dtype=float)
    raise NotImplementedError(
        "bounding boxes are only defined for group models; use a blow-up frame"
    )


_BOX_CACHE: dict[int, np.ndarray] = {}


def _calibrated_box_constants(frame: HorizontalFrame) -> np.ndarray:
    key = id(frame.algebra)
    if key not in _BOX_CACHE:
        rng = rng_for(1234, "box-calibration", frame.name)
        m, k = 4096, 4
        dirs = rng.normal(size=(m, k, frame.r))
        dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
        durations = rng.dirichlet(np.ones(k), size=m)
        controls = dirs * durations[:, :, None]
        x0 = np.zeros((m, frame.n))
        pts = kernels.propagate(*frame.term_table, x0, controls, 1.0 / k, 2)
        w = np.asarray(frame.algebra.weights, dtype=float)
        reach = np.abs(pts).max(axis=0)
        _BOX_CACHE[key] = np.maximum(reach, 1e-6) * 1.6**w
    return _BOX_CACHE[key]


def ball_volume(
    frame: HorizontalFrame,
    p,
    r: float,
    n_samples: int,
    seed: int = 0,
    workers: int = 1,
    chunk: int = 200_000,
) -> VolumeEstimate:
    """Monte Carlo Lebesgue volume of B(p, r) (group-difference chart).

    Sampling is chunked with independent spawned seeds, so the estimate is
    deterministic in (seed, n_samples) and independent of `workers`.
    """
    p = as_point(p, frame.n)
    half = bounding_box_halfwidths(frame, r)
    box_volume = float(np.prod(2.0 * half))
    membership = _membership_oracle(frame)

    chunks = []
    start = 0
    idx = 0
    while start < n_samples:
        size = min(chunk, n_samples - start)
        chunks.append((idx, size))
        start += size
        idx += 1

    def run_chunk(args):
        ci, size = args
        rng = rng_for(seed, "ball-volume", ci)
        pts = rng.uniform(-half, half, size=(size, frame.n))
        return int(membership(pts, r).sum())

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            hit_counts = list(pool.map(run_chunk, chunks))
    else:
        hit_counts = [run_chunk(c) for c in chunks]

    hits = int(sum(hit_counts))
    if hits == 0:
        raise DegenerateSamplingError(
            f"no hits in {n_samples} samples for radius {r}; box {half.tolist()}"
        )
    frac = hits / n_samples
    volume = box_volume * frac
    std_error = box_volume * float(np.sqrt(frac * (1.0 - frac) / n_samples))
    return VolumeEstimate(volume, std_error, hits, int(n_samples), tuple(half))


def _membership_oracle(frame: HorizontalFrame):
    """(points-in-difference-chart, r) -> bool mask for d(0, pt) <= r."""
    if _is_heisenberg(frame):
        return lambda pts, r: kernels.heisenberg_distance(pts) <= r
    if _is_abelian(frame):
        return lambda pts, r: np.linalg.norm(pts, axis=-1) <= r
    if frame.algebra is not None:
        def solved(pts, r):
            d = batch_upper_distance(frame, np.zeros(frame.n), pts)
            return d <= r

        return solved
    raise NotImplementedError("membership requires a group model")


def batch_upper_distance(
    frame: HorizontalFrame,
    p,
    targets: np.ndarray,
    segments: int = 12,
    rounds: tuple = (1e2, 1e3, 1e4),
    steps: int = 70,
    lr: float = 0.08,
) -> np.ndarray:
    """Vectorized coarse transcription: one upper-bound length per target.

    Used as the membership oracle on group models without a closed form;
    the endpoint gap is charged to the bound through the homogeneous norm.
    """
    p = as_point(p, frame.n)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    B = targets.shape[0]
    table = frame.term_table
    mat = frame.frame_matrix(p)
    pinv = np.linalg.pinv(mat)
    u_line = (targets - p) @ pinv.T
    controls = np.repeat(u_line[:, None, :], segments, axis=1)
    x0 = np.tile(p, (B, 1))
    dt = 1.0 / segments
    controls = _adam_rounds(table, x0, controls, dt, 1, targets, rounds, steps, lr)
    end = kernels.propagate(*table, x0, controls, dt, 1)
    lengths = np.linalg.norm(controls, axis=2).sum(axis=1) * dt
    gap = frame.algebra.conjugate_difference(end, targets)
    slack = norm_for(frame.algebra)(gap)
    return lengths + 1.5 * np.atleast_1d(slack)


@dataclass
class BallBoxReport:
    radii: tuple
    volumes: tuple
    std_errors: tuple
    fitted_slope: float
    Q_expected: int
    samples_per_radius: int

    def to_dict(self) -> dict:
        return {
            "radii": list(self.radii),
            "volumes": list(self.volumes),
            "std_errors": list(self.std_errors),
            "fitted_slope": self.fitted_slope,
            "Q_expected": self.Q_expected,
            "samples_per_radius": self.samples_per_radius,
        }


def ball_box_report(
    frame: HorizontalFrame,
    p,
    r0: float = 1.0,
    ladder: int = 5,
    n_samples: int = 100_000,
    seed: int = 0,
    workers: int = 1,
) -> BallBoxReport:
    """Volumes on the radius ladder r0 * 2^-i and the log-log slope fit."""
    from .frames import growth_vector_at

    p = as_point(p, frame.n)
    growth = growth_vector_at(frame, p)
    radii = [r0 * 2.0**-i for i in range(ladder)]
    estimates = [
        ball_volume(frame, p, r, n_samples, seed=seed, workers=workers) for r in radii
    ]
    logs_r = np.log([float(r) for r in radii])
    logs_v = np.log([e.volume for e in estimates])
    slope, _ = np.polyfit(logs_r, logs_v, 1)
    return BallBoxReport(
        radii=tuple(radii),
        volumes=tuple(e.volume for e in estimates),
        std_errors=tuple(e.std_error for e in estimates),
        fitted_slope=float(slope),
        Q_expected=int(growth.Q),
        samples_per_radius=int(n_samples),
    )
