"""The acceptance battery: every verification criterion as a callable
check, shared by the CLI `suite` subcommand and the acceptance tests.

Each check returns {"name", "passed", "details"}; tolerances are pinned
here once.  `scale="full"` runs the stated budgets; `scale="quick"` is a
reduced battery for smoke runs and determinism comparisons.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import analysis, maps, metric, modulus
from .algebra import builtin_algebra
from .fields import PolyVectorField
from .frames import HorizontalFrame, builtin_frame
from .morphism import morphism_jacobian, morphism_norms
from .tangent import blowup_convergence, nilpotent_approximation
from .util import rng_for


@dataclass(frozen=True)
class SuiteScale:
    ballbox_samples: int
    ballbox_ladder: int
    distance_points: int
    rectangle_curves: int
    map_points: int
    branch_grid: int
    multiplicity_targets: int
    area_samples: int
    ko_grids: tuple
    volume_samples: int


SCALES = {
    "full": SuiteScale(
        ballbox_samples=1_000_000,
        ballbox_ladder=5,
        distance_points=50,
        rectangle_curves=200,
        map_points=10,
        branch_grid=17,
        multiplicity_targets=100,
        area_samples=6000,
        ko_grids=((26, 26, 18), (32, 32, 22)),
        volume_samples=40_000,
    ),
    "quick": SuiteScale(
        ballbox_samples=120_000,
        ballbox_ladder=4,
        distance_points=6,
        rectangle_curves=120,
        map_points=3,
        branch_grid=9,
        multiplicity_targets=20,
        area_samples=3000,
        ko_grids=((20, 20, 14), (26, 26, 18)),
        volume_samples=15_000,
    ),
}

_FAST_DIST = metric.DistanceOptions(segments=32, restarts=4, descent_steps=80)


def _perturbed_heisenberg() -> HorizontalFrame:
    X = PolyVectorField.from_terms(
        3, [(0, 1.0, (0, 0, 0)), (2, -0.5, (0, 1, 0)), (2, -0.5, (2, 1, 0))]
    )
    Y = PolyVectorField.from_terms(3, [(1, 1.0, (0, 0, 0)), (2, 0.5, (1, 0, 0))])
    return HorizontalFrame([X, Y], name="perturbed-h1")


def _map_battery():
    return [
        maps.builtin("identity"),
        maps.builtin("dilation", lam=2.0),
        maps.builtin("automorphism", block=[[2.0, 0.0], [0.0, 3.0]]),
        maps.builtin("winding"),
    ]


def _probe_points(desc, count, seed):
    if desc.branch_distance is not None:
        return maps.random_probe_points(
            desc, count, exclusion_radius=0.3, box_halfwidth=0.9, skip=7 * seed
        )
    return maps.random_probe_points(desc, count, box_halfwidth=0.9, skip=7 * seed)


def check_algebra_laws(scale: SuiteScale, seed: int) -> dict:
    """Group laws at 1e-12 on 1000 random tuples; homogeneous dimensions."""
    tol = 1e-12
    details = {}
    ok = True
    for name, q_expected in (("heisenberg1", 4), ("engel", 7)):
        alg = builtin_algebra(name)
        rng = rng_for(seed, "algebra-laws", name)
        x, y, z = rng.normal(size=(3, 1000, alg.n))
        assoc = np.abs(
            alg.bch_product(alg.bch_product(x, y), z)
            - alg.bch_product(x, alg.bch_product(y, z))
        ).max()
        inv = np.abs(alg.bch_product(x, alg.inverse(x))).max()
        lam = 0.37
        auto = np.abs(
            alg.dilate(lam, alg.bch_product(x, y))
            - alg.bch_product(alg.dilate(lam, x), alg.dilate(lam, y))
        ).max()
        q_val = alg.homogeneous_dimension()
        details[name] = {
            "associativity": float(assoc),
            "inverse": float(inv),
            "dilation_automorphism": float(auto),
            "Q": q_val,
        }
        ok = ok and assoc <= tol and inv <= tol and auto <= tol and q_val == q_expected
    return {"name": "algebra-laws", "passed": bool(ok), "details": details}


def check_tangent_cone(scale: SuiteScale, seed: int) -> dict:
    """Perturbed frame recovers the Heisenberg constants exactly; blow-up
    coefficient distances contract at least quadratically."""
    frame = _perturbed_heisenberg()
    approx = nilpotent_approximation(frame, np.zeros(3))
    exact = bool(
        np.array_equal(approx.algebra.brackets, builtin_algebra("heisenberg1").brackets)
    )
    ladder = [1.0, 0.5, 0.25, 0.125]
    dists = blowup_convergence(frame, np.zeros(3), ladder, approx=approx)
    ratios = [b / a for a, b in zip(dists, dists[1:])]
    quadratic = all(r <= 0.26 for r in ratios)
    return {
        "name": "tangent-cone",
        "passed": exact and quadratic and approx.equiregular,
        "details": {"constants_exact": exact, "distances": dists, "ratios": ratios},
    }


def check_ball_box(scale: SuiteScale, seed: int) -> dict:
    """Fitted log-volume slope on the Heisenberg model equals Q = 4 +- 0.2."""
    report = metric.ball_box_report(
        builtin_frame("heisenberg1"),
        np.zeros(3),
        r0=1.0,
        ladder=scale.ballbox_ladder,
        n_samples=scale.ballbox_samples,
        seed=seed,
    )
    passed = abs(report.fitted_slope - 4.0) <= 0.2 and report.Q_expected == 4
    return {"name": "ball-box", "passed": bool(passed), "details": report.to_dict()}


def check_distance_laws(scale: SuiteScale, seed: int) -> dict:
    """Solver dilation homogeneity and left-invariance within 2%."""
    frame = builtin_frame("heisenberg1")
    alg = frame.algebra
    rng = rng_for(seed, "distance-laws")
    worst_hom = 0.0
    worst_inv = 0.0
    for _ in range(scale.distance_points):
        q = rng.normal(size=3) * np.array([0.8, 0.8, 0.4])
        g = rng.normal(size=3) * 0.6
        d1 = metric.cc_distance(frame, np.zeros(3), q, _FAST_DIST).value
        d2 = metric.cc_distance(frame, np.zeros(3), alg.dilate(2.0, q), _FAST_DIST).value
        d3 = metric.cc_distance(frame, g, alg.bch_product(g, q), _FAST_DIST).value
        worst_hom = max(worst_hom, abs(d2 / d1 - 2.0) / 2.0)
        worst_inv = max(worst_inv, abs(d3 - d1) / d1)
    passed = worst_hom <= 0.02 and worst_inv <= 0.02
    return {
        "name": "distance-laws",
        "passed": bool(passed),
        "details": {
            "points": scale.distance_points,
            "worst_homogeneity": worst_hom,
            "worst_invariance": worst_inv,
        },
    }


def check_modulus_oracle(scale: SuiteScale, seed: int) -> dict:
    """Rectangle families hit h/w within 5%; descent matches the long-run
    coordinate-descent oracle within 1e-3 on an 8x8 grid."""
    details = {}
    ok = True
    for w, h in ((1.0, 1.0), (2.0, 1.0), (1.0, 3.0)):
        family = modulus.rectangle_family(w, h, scale.rectangle_curves)
        value = modulus.modulus_p(family, (24, 24), p=2.0).value
        details[f"rect({w:g}x{h:g})"] = {"value": value, "target": h / w}
        ok = ok and abs(value - h / w) <= 0.05 * (h / w)
    fam = modulus.rectangle_family(1.0, 1.0, 12)
    a = modulus.modulus_p(fam, (8, 8), p=2.0).value
    b = modulus.modulus_p_coordinate_descent(fam, (8, 8), p=2.0).value
    details["oracle_gap"] = abs(a - b)
    ok = ok and abs(a - b) <= 1e-3
    return {"name": "modulus-oracle", "passed": bool(ok), "details": details}


def _per_map_points(scale, seed):
    for desc in _map_battery():
        for p in _probe_points(desc, scale.map_points, seed):
            yield desc, p


def check_lip_equals_differential_norm(scale: SuiteScale, seed: int) -> dict:
    """|Lip - |Df||/|Df| <= 3% (and lip agrees with Lip to 3%)."""
    worst = 0.0
    worst_gap = 0.0
    count = 0
    for desc, p in _per_map_points(scale, seed):
        prof = analysis.lip_profile(desc, p, r0=0.1, ladder=5, seed=seed)
        fit = analysis.pansu_differential(desc, p)
        if not fit.differentiable:
            return {
                "name": "lip-vs-differential",
                "passed": False,
                "details": {"non_differentiable_at": p.tolist(), "map": desc.name},
            }
        top, _ = morphism_norms(fit.morphism)
        worst = max(worst, abs(prof.Lip - top) / top)
        worst_gap = max(worst_gap, abs(prof.Lip - prof.lip) / max(prof.Lip, 1e-12))
        count += 1
    passed = worst <= 0.03 and worst_gap <= 0.03
    return {
        "name": "lip-vs-differential",
        "passed": bool(passed),
        "details": {"points": count, "worst_rel_gap": worst, "worst_lip_spread": worst_gap},
    }


def check_jacobian_agreement(scale: SuiteScale, seed: int) -> dict:
    """Morphism Jacobian 36 exactly for diag(2,3|6); volume ratios agree
    within 10% there and for the winding map off the axis."""
    details = {}
    auto = maps.builtin("automorphism", block=[[2.0, 0.0], [0.0, 3.0]])
    morph_j = morphism_jacobian(auto.known_differential(np.zeros(3)))
    details["automorphism_morphism_jacobian"] = morph_j
    ok = abs(morph_j - 36.0) <= 1e-9
    est = analysis.jacobian_volume_ratio(
        auto, np.zeros(3), radii=(0.3, 0.15), n_samples=scale.volume_samples, seed=seed
    )
    details["automorphism_volume_ratio"] = est.value
    ok = ok and abs(est.value - 36.0) <= 0.1 * 36.0

    winding = maps.builtin("winding")
    p = np.array([0.7, 0.1, 0.05])
    fit = analysis.pansu_differential(winding, p)
    mj = morphism_jacobian(fit.morphism)
    est_w = analysis.jacobian_volume_ratio(
        winding, p, radii=(0.2, 0.1), n_samples=scale.volume_samples, seed=seed
    )
    details["winding_morphism_jacobian"] = mj
    details["winding_volume_ratio"] = est_w.value
    ok = ok and abs(est_w.value - mj) <= 0.1 * mj
    return {"name": "jacobian-agreement", "passed": bool(ok), "details": details}


def check_norm_ratio_bound(scale: SuiteScale, seed: int) -> dict:
    """|Df| / |Df|_s <= 1.1 * extrapolated H_f, and |H - H'|/H <= 10%."""
    worst_ratio = 0.0
    worst_type_gap = 0.0
    count = 0
    for desc, p in _per_map_points(scale, seed):
        fit = analysis.pansu_differential(desc, p)
        top, bottom = morphism_norms(fit.morphism)
        prof = analysis.dilatation_profile(desc, p, r0=0.1, ladder=5, seed=seed)
        worst_ratio = max(worst_ratio, (top / bottom) / prof.H_extrapolated)
        worst_type_gap = max(
            worst_type_gap,
            abs(prof.H_extrapolated - prof.H_prime_extrapolated) / prof.H_extrapolated,
        )
        count += 1
    passed = worst_ratio <= 1.1 and worst_type_gap <= 0.1
    return {
        "name": "norm-ratio-and-type-equivalence",
        "passed": bool(passed),
        "details": {
            "points": count,
            "worst_norm_ratio_over_H": worst_ratio,
            "worst_type_gap": worst_type_gap,
        },
    }


def check_branch_locus(scale: SuiteScale, seed: int) -> dict:
    """Scan flags exactly the cells meeting the t-axis (no false positives
    beyond distance 0.2)."""
    scan = analysis.local_injectivity_scan(
        maps.builtin("winding"),
        (np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0])),
        grid_n=scale.branch_grid,
        ball_radius=0.3,
        seed=seed,
    )
    if scan.flagged.shape[0] == 0:
        return {"name": "branch-locus", "passed": False, "details": {"flagged": 0}}
    rho = np.hypot(scan.flagged[:, 0], scan.flagged[:, 1])
    axis_points = int((rho < 1e-12).sum())
    passed = rho.max() <= 0.2 and axis_points == scale.branch_grid
    return {
        "name": "branch-locus",
        "passed": bool(passed),
        "details": {
            "flagged": int(scan.flagged.shape[0]),
            "max_flagged_radius": float(rho.max()),
            "axis_points_flagged": axis_points,
            "scanned": scan.points_scanned,
        },
    }


def check_area_formula(scale: SuiteScale, seed: int) -> dict:
    """Winding map area formula on an annular indicator within 10%, and
    exact multiplicity 2 at generic targets."""
    winding = maps.builtin("winding")
    region = (np.array([-1.0, -1.0, -0.4]), np.array([1.0, 1.0, 0.4]))

    def u(ys):
        ys = np.atleast_2d(ys)
        rho = np.hypot(ys[:, 0], ys[:, 1])
        return ((rho >= 0.25) & (rho <= 0.55) & (np.abs(ys[:, 2]) <= 0.35)).astype(float)

    chk = analysis.area_formula_check(
        winding, region, u=u, n_samples=scale.area_samples, j_cells=4, seed=seed
    )
    rng = rng_for(seed, "area-multiplicity")
    mult_ok = True
    for _ in range(scale.multiplicity_targets):
        rho = rng.uniform(0.25, 0.55)
        psi = rng.uniform(0.0, 2.0 * np.pi)
        y = np.array([rho * np.cos(psi), rho * np.sin(psi), rng.uniform(-0.3, 0.3)])
        res = analysis.multiplicity_count(winding, y, region, starts=96, seed=seed)
        if res.count != 2:
            mult_ok = False
            break
    passed = chk.gap <= 0.1 and mult_ok
    return {
        "name": "area-formula",
        "passed": bool(passed),
        "details": {
            "lhs": chk.lhs,
            "rhs": chk.rhs,
            "gap": chk.gap,
            "multiplicity_exact": mult_ok,
            "targets": scale.multiplicity_targets,
        },
    }


def check_ko_inequality(scale: SuiteScale, seed: int) -> dict:
    """Implied outer constants: 1 +- 10% for conformal planar maps; the
    winding constant finite and refinement-stable within 15%."""
    details = {}
    plane = builtin_frame("abelian(2)")
    family = modulus.rectangle_family(1.0, 1.0, 100)
    ok = True
    for name, desc in (
        ("identity", maps.builtin("identity", frame=plane)),
        ("dilation2", maps.builtin("dilation", lam=2.0, frame=plane)),
    ):
        rep = modulus.ko_check(desc, family, Q=2.0, grid_shape=(20, 20))
        details[name] = rep.implied_K
        ok = ok and abs(rep.implied_K - 1.0) <= 0.1
    winding = maps.builtin("winding")
    radial = modulus.radial_family(0.3, 0.9, 36, heights=np.linspace(-0.3, 0.3, 7))
    r1 = modulus.ko_check(winding, radial, Q=4.0, grid_shape=scale.ko_grids[0])
    r2 = modulus.ko_check(winding, radial, Q=4.0, grid_shape=scale.ko_grids[1])
    details["winding_K"] = [r1.implied_K, r2.implied_K]
    stable = (
        np.isfinite(r1.implied_K)
        and np.isfinite(r2.implied_K)
        and abs(r2.implied_K - r1.implied_K) <= 0.15 * r1.implied_K
    )
    ok = ok and stable
    return {"name": "ko-inequality", "passed": bool(ok), "details": details}


def check_determinism(scale: SuiteScale, seed: int) -> dict:
    """A seeded profile serializes identically across two runs."""
    desc = maps.builtin("winding")
    p = np.array([0.6, 0.2, 0.1])
    a = analysis.dilatation_profile(desc, p, r0=0.2, ladder=4, seed=seed).to_dict()
    b = analysis.dilatation_profile(desc, p, r0=0.2, ladder=4, seed=seed).to_dict()
    from .util import json_dumps

    passed = json_dumps(a) == json_dumps(b)
    return {"name": "determinism", "passed": bool(passed), "details": {"repeats": 2}}


CHECKS = [
    check_algebra_laws,
    check_tangent_cone,
    check_ball_box,
    check_distance_laws,
    check_modulus_oracle,
    check_lip_equals_differential_norm,
    check_jacobian_agreement,
    check_norm_ratio_bound,
    check_branch_locus,
    check_area_formula,
    check_ko_inequality,
    check_determinism,
]


def run_suite(seed: int = 0, scale: str = "quick", names=None) -> tuple[dict, dict]:
    """Run the battery.

    Returns (report, timings): the report is fully determined by (seed,
    scale) and safe to serialize byte-identically; wall-clock timings are
    kept separate so they never leak into output files.
    """
    chosen = SCALES[scale]
    results = []
    timings = {}
    for check in CHECKS:
        if names and check.__name__ not in names:
            continue
        t0 = time.perf_counter()
        out = check(chosen, seed)
        timings[out["name"]] = time.perf_counter() - t0
        results.append(out)
    report = {
        "passed": all(r["passed"] for r in results),
        "scale": scale,
        "seed": seed,
        "checks": results,
    }
    return report, timings
