"""Quasiregularity diagnostics for maps between sub-Riemannian charts:
dilatation profiles, Lipschitz constants, blow-up differentials,
Jacobians, multiplicity, the area formula, and branch-set scans.

Pointwise limits (limsup/liminf as r -> 0) are replaced throughout by
tail statistics over a geometric radius ladder; every profile carries the
full ladder, never just the extrapolated scalar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maps import MapDescriptor
from .metric import (
    ball_points,
    ball_volume,
    bounding_box_halfwidths,
    cc_sphere_sample,
    distance_function,
    exact_distance_function,
)
from .morphism import GradedMorphism, extend_first_layer
from .tangent import nilpotent_approximation
from .util import as_point, halton, rng_for, sphere_directions


# -- dilatation and Lipschitz profiles ---------------------------------------

@dataclass
class DilatationProfile:
    center: tuple
    radii: tuple
    L: tuple           # sup over the closed ball of target distance
    L_prime: tuple     # sup over the sphere
    l: tuple           # inf over the sphere
    H: tuple           # L / l per rung
    H_prime: tuple     # L' / l per rung
    H_extrapolated: float
    H_prime_extrapolated: float
    degenerate: tuple  # rungs where l fell below the noise floor

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "radii": list(self.radii),
            "L": list(self.L),
            "L_prime": list(self.L_prime),
            "l": list(self.l),
            "H": list(self.H),
            "H_prime": list(self.H_prime),
            "H_extrapolated": self.H_extrapolated,
            "H_prime_extrapolated": self.H_prime_extrapolated,
            "degenerate": list(self.degenerate),
        }


def _profile_samples(desc, x, r, sphere_m, ball_m, seed):
    sphere = cc_sphere_sample(desc.domain, x, r, sphere_m).points
    ball = ball_points(desc.domain, x, r, ball_m, seed=seed)
    return sphere, np.concatenate([ball, sphere], axis=0)


def _target_noise_floor(desc) -> float:
    # exact oracles are noiseless; the transcription solver carries ~2%
    return 1e-9 if exact_distance_function(desc.target) is not None else 0.06


def dilatation_profile(
    desc: MapDescriptor,
    x,
    r0: float = 0.25,
    ladder: int = 6,
    sphere_m: int = 64,
    ball_m: int = 96,
    seed: int = 0,
    tail: int = 3,
) -> DilatationProfile:
    """Per-radius max/sphere-max/sphere-min stretches and their ratios.

    The extrapolated values are maxima over the last `tail` rungs, the
    computable stand-in for the r -> 0 limsup.
    """
    x = as_point(x, desc.domain.n)
    fx = desc(x)
    tgt_dist = distance_function(desc.target)
    noise = _target_noise_floor(desc)
    radii, Ls, Lps, ls, Hs, Hps, degen = [], [], [], [], [], [], []
    for i in range(ladder):
        r = r0 * 2.0**-i
        sphere, ball = _profile_samples(desc, x, r, sphere_m, ball_m, seed)
        d_sphere = tgt_dist(fx, desc(sphere))
        d_ball = tgt_dist(fx, desc(ball))
        L, Lp, low = float(d_ball.max()), float(d_sphere.max()), float(d_sphere.min())
        is_degen = low <= 3.0 * noise * r
        radii.append(r)
        Ls.append(L)
        Lps.append(Lp)
        ls.append(low)
        Hs.append(L / low if not is_degen else np.inf)
        Hps.append(Lp / low if not is_degen else np.inf)
        degen.append(is_degen)
    good = [i for i in range(ladder) if not degen[i]]
    tail_idx = good[-tail:] if good else []
    h_ex = float(max(Hs[i] for i in tail_idx)) if tail_idx else np.inf
    hp_ex = float(max(Hps[i] for i in tail_idx)) if tail_idx else np.inf
    return DilatationProfile(
        center=tuple(float(v) for v in x),
        radii=tuple(radii),
        L=tuple(Ls),
        L_prime=tuple(Lps),
        l=tuple(ls),
        H=tuple(Hs),
        H_prime=tuple(Hps),
        H_extrapolated=h_ex,
        H_prime_extrapolated=hp_ex,
        degenerate=tuple(degen),
    )


@dataclass
class LipProfile:
    center: tuple
    radii: tuple
    sup_ratio: tuple
    Lip: float   # tail max
    lip: float   # tail min

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "radii": list(self.radii),
            "sup_ratio": list(self.sup_ratio),
            "Lip": self.Lip,
            "lip": self.lip,
        }


def lip_profile(
    desc: MapDescriptor,
    x,
    r0: float = 0.25,
    ladder: int = 6,
    sphere_m: int = 64,
    ball_m: int = 96,
    seed: int = 0,
    tail: int = 3,
) -> LipProfile:
    """Upper/lower Lipschitz constants: per-radius sup of d(f(x), f(y))/r
    over ball samples; Lip is the tail max, lip the tail min."""
    x = as_point(x, desc.domain.n)
    fx = desc(x)
    tgt_dist = distance_function(desc.target)
    radii, sups = [], []
    for i in range(ladder):
        r = r0 * 2.0**-i
        _, ball = _profile_samples(desc, x, r, sphere_m, ball_m, seed)
        sups.append(float(tgt_dist(fx, desc(ball)).max() / r))
        radii.append(r)
    tail_vals = sups[-tail:]
    return LipProfile(
        center=tuple(float(v) for v in x),
        radii=tuple(radii),
        sup_ratio=tuple(sups),
        Lip=float(max(tail_vals)),
        lip=float(min(tail_vals)),
    )


# -- blow-up differential ------------------------------------------------------

@dataclass
class PansuFit:
    morphism: GradedMorphism | None
    eps_ladder: tuple
    residuals: tuple
    differentiable: bool
    center: tuple

    def to_dict(self) -> dict:
        return {
            "eps_ladder": list(self.eps_ladder),
            "residuals": list(self.residuals),
            "differentiable": self.differentiable,
            "center": list(self.center),
            "morphism": self.morphism.to_dict() if self.morphism else None,
        }


def pansu_differential(
    desc: MapDescriptor,
    o,
    eps_ladder=(0.25, 0.125, 0.0625, 0.03125),
    m: int = 32,
    scales=(1.0, 0.6),
) -> PansuFit:
    """Fit the blow-up differential at o.

    The map is conjugated by privileged charts and dilations on both
    sides; the first-layer block is fit by least squares on horizontal
    samples and extended to higher layers by bracket compatibility.  The
    per-eps residual (homogeneous norm of the group mismatch) must
    decrease along the ladder, otherwise no morphism is returned.
    """
    o = as_point(o, desc.domain.n)
    dom = nilpotent_approximation(desc.domain, o, probe_equiregularity=False)
    fo = desc(o)
    tgt = nilpotent_approximation(desc.target, fo, probe_equiregularity=False)
    dom_alg, tgt_alg = dom.algebra, tgt.algebra

    dirs = sphere_directions(m, dom_alg.rank)
    vs = np.concatenate([s * dirs for s in scales], axis=0)
    v_full = np.zeros((vs.shape[0], dom_alg.n))
    v_full[:, : dom_alg.rank] = vs

    fits = []
    residuals = []
    for eps in eps_ladder:
        pts = dom.chart.from_privileged(dom_alg.dilate(eps, v_full))
        w = tgt.chart.to_privileged(desc(pts))
        g = tgt_alg.dilate(1.0 / eps, w)
        block, *_ = np.linalg.lstsq(vs, g[:, : tgt_alg.rank], rcond=None)
        morph = extend_first_layer(dom_alg, tgt_alg, block.T)
        gap = tgt_alg.conjugate_difference(morph.apply(v_full), g)
        residuals.append(float(np.mean(np.linalg.norm(gap, axis=-1))))
        fits.append(morph)

    floor = 1e-10
    decreasing = all(
        b < a or b <= floor for a, b in zip(residuals, residuals[1:])
    )
    best = fits[-1]
    best.residual = residuals[-1]
    best.meta = {"eps": float(eps_ladder[-1])}
    return PansuFit(
        morphism=best if decreasing else None,
        eps_ladder=tuple(float(e) for e in eps_ladder),
        residuals=tuple(residuals),
        differentiable=decreasing,
        center=tuple(float(v) for v in o),
    )


# -- Jacobians ------------------------------------------------------------------

@dataclass
class JacobianEstimate:
    center: tuple
    radii: tuple
    ratios: tuple
    std_errors: tuple
    value: float
    error_bar: float
    reliable: bool

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "radii": list(self.radii),
            "ratios": list(self.ratios),
            "std_errors": list(self.std_errors),
            "value": self.value,
            "error_bar": self.error_bar,
            "reliable": self.reliable,
        }


def _image_volume(desc, x, fx, r, n_samples, seed, dom_dist):
    """Lebesgue volume of f(B(x, r)) by inverse sampling: target points
    drawn in a difference-chart box count when some preimage enters the
    ball.

    The box is the target ball-box at the sampled image radius: f(B(x,r))
    lies in the target ball of radius sup d(f(x), f(B)), which the box
    covers exactly on the built-in models.
    """
    tgt_alg = desc.target.algebra
    tgt_dist = distance_function(desc.target)
    ball = ball_points(desc.domain, x, r, 128, seed=seed)
    image_radius = float(tgt_dist(fx, desc(ball)).max()) * 1.1
    half = bounding_box_halfwidths(desc.target, image_radius)
    rng = rng_for(seed, "image-volume", *np.round(x, 12), r)
    v = rng.uniform(-half, half, size=(n_samples, desc.target.n))
    ys = tgt_alg.bch_product(fx, v)
    stack = desc.enumerate_preimages(ys)
    if stack is not None:
        B, k, n = stack.shape
        dists = dom_dist(x, stack.reshape(B * k, n)).reshape(B, k)
        hits = int(np.any(dists <= r, axis=1).sum())
    else:
        inside = _newton_preimage_in_ball(desc, ys, x, r, dom_dist)
        hits = int(inside.sum())
    frac = hits / n_samples
    vol = float(np.prod(2.0 * half)) * frac
    se = float(np.prod(2.0 * half)) * float(np.sqrt(max(frac * (1 - frac), 1e-12) / n_samples))
    return vol, se, hits


def jacobian_volume_ratio(
    desc: MapDescriptor,
    x,
    radii=(0.2, 0.1, 0.05),
    n_samples: int = 30_000,
    seed: int = 0,
) -> JacobianEstimate:
    """Vol(f(B(x,r))) / Vol(B(x,r)) along a radius ladder, extrapolated."""
    x = as_point(x, desc.domain.n)
    fx = desc(x)
    dom_dist = distance_function(desc.domain)
    ratios, ses = [], []
    failed = False
    for r in radii:
        ballv = ball_volume(desc.domain, x, float(r), n_samples, seed=seed)
        try:
            imgv, img_se, hits = _image_volume(desc, x, fx, float(r), n_samples, seed, dom_dist)
        except NewtonBudgetError:
            failed = True
            break
        ratios.append(imgv / ballv.volume)
        ses.append(
            ratios[-1]
            * np.hypot(img_se / max(imgv, 1e-300), ballv.std_error / ballv.volume)
        )
    if failed or not ratios:
        return JacobianEstimate(tuple(x), tuple(radii), (), (), np.nan, np.nan, False)
    tail = ratios[-2:] if len(ratios) >= 2 else ratios
    value = float(np.mean(tail))
    spread = float(max(tail) - min(tail))
    return JacobianEstimate(
        center=tuple(float(v) for v in x),
        radii=tuple(float(r) for r in radii[: len(ratios)]),
        ratios=tuple(float(v) for v in ratios),
        std_errors=tuple(float(v) for v in ses),
        value=value,
        error_bar=float(spread + 2.0 * np.mean(ses)),
        reliable=True,
    )


# -- multiplicity ----------------------------------------------------------------

class NewtonBudgetError(RuntimeError):
    """Newton root finding exceeded its failure budget."""


@dataclass
class MultiplicityResult:
    count: int
    roots: np.ndarray
    starts_used: int
    complete: bool

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "roots": self.roots.tolist(),
            "starts_used": self.starts_used,
            "complete": self.complete,
        }


def _dedupe_rows(pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Drop duplicate candidate preimages (enumerators may repeat branches)."""
    keep: list[np.ndarray] = []
    for row in np.atleast_2d(pts):
        if not any(np.linalg.norm(row - k) <= tol for k in keep):
            keep.append(row)
    return np.asarray(keep)


def _fd_jacobians(desc, pts, h=1e-6):
    n = pts.shape[1]
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        cols.append((desc(pts + e) - desc(pts - e)) / (2 * h))
    return np.stack(cols, axis=2)  # (B, n_out, n_in)


def _damped_newton(desc, starts, y, iters=40, tol=1e-10):
    """Vectorized damped Newton for f(x) = y from many starts; returns the
    final iterates and a convergence mask."""
    x = np.array(starts, dtype=float)
    res = desc(x) - y
    err = np.linalg.norm(res, axis=1)
    for _ in range(iters):
        active = err > tol
        if not active.any():
            break
        jac = _fd_jacobians(desc, x[active])
        try:
            step = np.linalg.solve(jac, res[active][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack(
                [np.linalg.lstsq(j, r, rcond=None)[0] for j, r in zip(jac, res[active])]
            )
        x_act = x[active]
        err_act = err[active]
        scale = np.ones(x_act.shape[0])
        for _ in range(10):
            trial = x_act - scale[:, None] * step
            trial_err = np.linalg.norm(desc(trial) - y, axis=1)
            better = trial_err < err_act
            if better.all():
                break
            scale = np.where(better, scale, scale * 0.5)
        x_act = x_act - scale[:, None] * step
        x[active] = x_act
        res = desc(x) - y
        err = np.linalg.norm(res, axis=1)
    return x, err <= max(tol, 1e-8)


def multiplicity_count(
    desc: MapDescriptor,
    y,
    region,
    starts: int = 128,
    seed: int = 0,
    dedupe: float = 1e-6,
) -> MultiplicityResult:
    """N(y, f, region): distinct Newton roots of f(x) = y inside the box
    region=(lo, hi), with multi-start and root de-duplication."""
    y = as_point(y, desc.target.n)
    lo = np.asarray(region[0], dtype=float)
    hi = np.asarray(region[1], dtype=float)
    n = desc.domain.n
    grid = halton(starts, n, start=11 + seed)
    start_pts = lo + grid * (hi - lo)
    roots, converged = _damped_newton(desc, start_pts, y)
    found: list[np.ndarray] = []
    cells_hit = set()
    cells_all = set()
    for s, (root, ok) in zip(start_pts, zip(roots, converged)):
        octant = tuple((s > (lo + hi) / 2.0).astype(int))
        cells_all.add(octant)
        if not ok:
            continue
        cells_hit.add(octant)
        if np.any(root < lo - 1e-9) or np.any(root > hi + 1e-9):
            continue
        if not any(np.linalg.norm(root - f) <= dedupe for f in found):
            found.append(root)
    complete = cells_hit == cells_all
    return MultiplicityResult(
        count=len(found),
        roots=np.asarray(found) if found else np.zeros((0, n)),
        starts_used=starts,
        complete=complete,
    )


def _newton_preimage_in_ball(desc, targets, x, r, dom_dist, starts_per=6, fail_budget=0.01):
    """For each target y, does f have a preimage in B(x, r)?  Newton from
    ball-sample starts; failures above the budget raise."""
    ball = ball_points(desc.domain, x, r, starts_per * 4, seed=17)
    sel = ball[:: max(1, ball.shape[0] // starts_per)][:starts_per]
    inside = np.zeros(targets.shape[0], dtype=bool)
    failures = 0
    for i, y in enumerate(targets):
        roots, ok = _damped_newton(desc, sel, y, iters=25)
        if not ok.any():
            failures += 1
            continue
        cand = roots[ok]
        inside[i] = bool(np.any(dom_dist(x, cand) <= r))
    if failures > fail_budget * targets.shape[0]:
        raise NewtonBudgetError(
            f"Newton failed on {failures}/{targets.shape[0]} targets"
        )
    return inside


# -- area formula -----------------------------------------------------------------

@dataclass
class AreaCheck:
    lhs: float
    rhs: float
    gap: float
    j_cells_used: int
    samples: int

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "gap": self.gap,
            "j_cells_used": self.j_cells_used,
            "samples": self.samples,
        }


def area_formula_check(
    desc: MapDescriptor,
    region,
    u=None,
    region_indicator=None,
    n_samples: int = 4000,
    j_cells: int = 3,
    j_samples: int = 20_000,
    j_radius: float | None = None,
    seed: int = 0,
) -> AreaCheck:
    """Monte Carlo check of int_A u(f(x)) J_f(x) dx = int u(y) N(y,f,A) dy.

    J_f comes from pointwise volume ratios on a coarse cell cache (never
    from a closed form), N from the preimage enumerator or Newton.
    """
    lo = np.asarray(region[0], dtype=float)
    hi = np.asarray(region[1], dtype=float)
    n = desc.domain.n
    if u is None:
        u = lambda ys: np.ones(np.atleast_2d(ys).shape[0])
    rng = rng_for(seed, "area-check", desc.name)
    xs = rng.uniform(lo, hi, size=(n_samples, n))
    box_vol = float(np.prod(hi - lo))
    in_a = np.ones(n_samples, dtype=bool) if region_indicator is None else region_indicator(xs)
    u_vals = u(desc(xs)) * in_a

    # coarse J cache, evaluated lazily where u(f(x)) is active
    cell_size = (hi - lo) / j_cells
    j_cache: dict[tuple, float] = {}
    j_rad = j_radius if j_radius is not None else float(cell_size.min()) * 0.4
    j_of_x = np.zeros(n_samples)
    active = np.nonzero(u_vals != 0.0)[0]
    for i in active:
        key = tuple(np.minimum((xs[i] - lo) // cell_size, j_cells - 1).astype(int))
        if key not in j_cache:
            center = lo + (np.asarray(key) + 0.5) * cell_size
            est = jacobian_volume_ratio(
                desc, center, radii=(j_rad, j_rad / 2), n_samples=j_samples, seed=seed
            )
            j_cache[key] = est.value
        j_of_x[i] = j_cache[key]
    lhs = box_vol * float(np.mean(u_vals * j_of_x))

    imgs = desc(xs[in_a])
    pad = 0.05 * (imgs.max(axis=0) - imgs.min(axis=0) + 1e-9)
    tlo, thi = imgs.min(axis=0) - pad, imgs.max(axis=0) + pad
    ys = rng.uniform(tlo, thi, size=(n_samples, desc.target.n))
    uy = u(ys)
    counts = np.zeros(n_samples)
    active_t = np.nonzero(uy != 0.0)[0]
    stack = desc.enumerate_preimages(ys[active_t]) if active_t.size else None
    for row, i in enumerate(active_t):
        if stack is not None:
            pres = _dedupe_rows(stack[row])
        else:
            res = multiplicity_count(desc, ys[i], (lo, hi), starts=64, seed=seed)
            pres = res.roots
        if pres.shape[0] == 0:
            continue
        ok = np.all((pres >= lo - 1e-9) & (pres <= hi + 1e-9), axis=1)
        if region_indicator is not None and ok.any():
            ok = ok & region_indicator(pres)
        counts[i] = int(ok.sum())
    rhs = float(np.prod(thi - tlo)) * float(np.mean(uy * counts))

    gap = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    return AreaCheck(
        lhs=float(lhs),
        rhs=float(rhs),
        gap=float(gap),
        j_cells_used=len(j_cache),
        samples=int(n_samples),
    )


# -- branch-set scan ----------------------------------------------------------------

@dataclass
class BranchScan:
    grid_shape: tuple
    flagged: np.ndarray
    reasons: list
    ball_radius: float
    points_scanned: int

    def to_dict(self) -> dict:
        return {
            "grid_shape": list(self.grid_shape),
            "flagged": self.flagged.tolist(),
            "reasons": self.reasons,
            "ball_radius": self.ball_radius,
            "points_scanned": self.points_scanned,
        }


def _collapse_values(desc, mesh, r_small, m=16):
    """Vectorized l_f(x, r_small) over all mesh points (group models get a
    closed-form sphere: left translates of horizontal rays)."""
    dom = desc.domain
    dirs = sphere_directions(m, dom.r)
    if dom.is_group_model:
        rays = np.zeros((m, dom.n))
        rays[:, : dom.r] = r_small * dirs
        pts = dom.algebra.bch_product(mesh[:, None, :], rays[None, :, :])
    else:
        pts = np.stack(
            [cc_sphere_sample(dom, x, r_small, m).points for x in mesh], axis=0
        )
    imgs = desc(pts)
    centers = desc(mesh)
    tgt = desc.target
    if exact_distance_function(tgt) is not None and tgt.is_group_model:
        diffs = tgt.algebra.conjugate_difference(centers[:, None, :], imgs)
        if tgt.algebra.step == 1:
            d = np.linalg.norm(diffs, axis=-1)
        else:
            from . import kernels

            d = kernels.heisenberg_distance(diffs.reshape(-1, tgt.n)).reshape(
                mesh.shape[0], m
            )
        return d.min(axis=1)
    tgt_dist = distance_function(tgt)
    return np.array(
        [float(tgt_dist(centers[i], imgs[i]).min()) for i in range(mesh.shape[0])]
    )


def local_injectivity_scan(
    desc: MapDescriptor,
    bounds,
    grid_n: int = 17,
    ball_radius: float = 0.3,
    collapse_tol: float = 0.02,
    seed: int = 0,
) -> BranchScan:
    """Flag grid points where f is not locally injective.

    Two indicators: some point near x whose image has a second preimage
    inside B(x, ball_radius) (local multiplicity), or a collapsing sphere
    image (l_f / r below collapse_tol).  Output is a candidate set, not a
    certification.
    """
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    n = desc.domain.n
    axes = [np.linspace(lo[k], hi[k], grid_n) for k in range(n)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    dom_dist = distance_function(desc.domain)

    r_small = ball_radius / 4.0
    collapse = _collapse_values(desc, mesh, r_small)

    # probe offsets: the point itself plus small horizontal displacements,
    # so fixed points of a folding map still reveal their doubled neighbors
    h = ball_radius / 5.0
    offsets = [np.zeros(n)]
    for k in range(desc.domain.r):
        e = np.zeros(n)
        e[k] = h
        offsets.extend([e, -e])

    flagged = []
    reasons = []
    for i, x in enumerate(mesh):
        reason = None
        if collapse[i] < collapse_tol * r_small:
            reason = "collapse"
        else:
            for off in offsets:
                y = desc(x + off)
                if desc.preimages is not None:
                    pres = np.atleast_2d(desc.preimages(y))
                else:
                    res = multiplicity_count(
                        desc, y, (x - ball_radius, x + ball_radius), starts=32, seed=seed
                    )
                    pres = res.roots
                if pres.shape[0] >= 2 and (dom_dist(x, pres) <= ball_radius).sum() >= 2:
                    reason = "multiplicity"
                    break
        if reason is not None:
            flagged.append(x)
            reasons.append(reason)
    return BranchScan(
        grid_shape=(grid_n,) * n,
        flagged=np.asarray(flagged) if flagged else np.zeros((0, n)),
        reasons=reasons,
        ball_radius=float(ball_radius),
        points_scanned=int(mesh.shape[0]),
    )
