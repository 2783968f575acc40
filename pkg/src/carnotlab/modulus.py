"""Numerical p-modulus of finite curve families over grid densities, and
the outer-distortion (geometric-definition) inequality check.

The modulus program min sum rho^p * mu(cell) subject to per-curve line
integrals >= 1 is solved by penalized projected first-order descent; the
returned density is rescaled to exact admissibility, so the reported
value is always an upper bound of the discrete program.  Line integrals
use exact segment-cell intersection lengths, never vertex sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import AdmissibilityError
from .maps import MapDescriptor

LENGTH_FLOOR = 1e-6


class EmptyFamilyError(ValueError):
    """Every curve fell below the length floor; the modulus is 0 by convention."""

    def __init__(self, message):
        super().__init__(message)
        self.value = 0.0


@dataclass
class CurveFamily:
    """Polyline curves with arc length measured in the first
    `horizontal_dims` coordinates (the chart's horizontal layer)."""

    curves: list
    bounds: tuple
    horizontal_dims: int | None = None

    def __post_init__(self):
        self.curves = [np.atleast_2d(np.asarray(c, dtype=float)) for c in self.curves]
        lo, hi = self.bounds
        self.bounds = (np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        if self.horizontal_dims is None:
            self.horizontal_dims = int(self.bounds[0].shape[0])

    @property
    def dim(self) -> int:
        return int(self.bounds[0].shape[0])

    def segment_lengths(self, curve: np.ndarray) -> np.ndarray:
        deltas = np.diff(curve[:, : self.horizontal_dims], axis=0)
        return np.linalg.norm(deltas, axis=1)

    def curve_lengths(self) -> np.ndarray:
        return np.array([self.segment_lengths(c).sum() for c in self.curves])

    def filtered(self, floor: float = LENGTH_FLOOR) -> "CurveFamily":
        keep = [c for c in self.curves if self.segment_lengths(c).sum() >= floor]
        return CurveFamily(keep, self.bounds, self.horizontal_dims)

    def subset(self, indices) -> "CurveFamily":
        return CurveFamily([self.curves[i] for i in indices], self.bounds, self.horizontal_dims)

    def mapped(self, desc: MapDescriptor, refine: int = 1) -> "CurveFamily":
        """Image family under a map; segments may be subdivided first so
        curved images stay polyline-faithful."""
        out = []
        for c in self.curves:
            if refine > 1:
                pieces = [c[:1]]
                for a, b in zip(c[:-1], c[1:]):
                    ts = np.linspace(0.0, 1.0, refine + 1)[1:]
                    pieces.append(a[None, :] + ts[:, None] * (b - a)[None, :])
                c = np.concatenate(pieces, axis=0)
            out.append(desc(c))
        pts = np.concatenate(out, axis=0)
        pad = 0.02 * (pts.max(axis=0) - pts.min(axis=0) + 1e-12)
        return CurveFamily(
            out, (pts.min(axis=0) - pad, pts.max(axis=0) + pad), self.horizontal_dims
        )


def rectangle_family(width: float, height: float, n_curves: int) -> CurveFamily:
    """Horizontal segments crossing the width x height rectangle."""
    ys = (np.arange(n_curves) + 0.5) * height / n_curves
    curves = [np.array([[0.0, y], [width, y]]) for y in ys]
    return CurveFamily(curves, (np.zeros(2), np.array([width, height])))


def radial_family(
    rho_inner: float,
    rho_outer: float,
    n_angles: int,
    heights,
    bounds_pad: float = 0.1,
) -> CurveFamily:
    """Radial horizontal segments in the Heisenberg chart, avoiding the
    t-axis (radial directions are horizontal in this convention)."""
    heights = np.asarray(heights, dtype=float)
    curves = []
    for t in heights:
        for k in range(n_angles):
            phi = 2.0 * np.pi * k / n_angles
            a = np.array([rho_inner * np.cos(phi), rho_inner * np.sin(phi), t])
            b = np.array([rho_outer * np.cos(phi), rho_outer * np.sin(phi), t])
            curves.append(np.stack([a, b]))
    b = rho_outer + bounds_pad
    t_lo, t_hi = heights.min() - bounds_pad, heights.max() + bounds_pad
    return CurveFamily(
        curves,
        (np.array([-b, -b, t_lo]), np.array([b, b, t_hi])),
        horizontal_dims=2,
    )


@dataclass
class DensityGrid:
    bounds: tuple
    shape: tuple
    values: np.ndarray  # flat, one per cell

    def __post_init__(self):
        lo, hi = self.bounds
        self.bounds = (np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        self.shape = tuple(int(s) for s in self.shape)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)

    @property
    def cell_widths(self) -> np.ndarray:
        lo, hi = self.bounds
        return (hi - lo) / np.asarray(self.shape, dtype=float)

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.cell_widths))

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        lo, _ = self.bounds
        ij = np.floor((np.atleast_2d(points) - lo) / self.cell_widths).astype(int)
        ij = np.clip(ij, 0, np.asarray(self.shape) - 1)
        return np.ravel_multi_index(ij.T, self.shape)

    def centers(self) -> np.ndarray:
        lo, _ = self.bounds
        axes = [
            lo[k] + (np.arange(self.shape[k]) + 0.5) * self.cell_widths[k]
            for k in range(len(self.shape))
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_dict(self) -> dict:
        return {
            "bounds": [self.bounds[0].tolist(), self.bounds[1].tolist()],
            "shape": list(self.shape),
            "values": self.values.tolist(),
        }


def line_integral_matrix(family: CurveFamily, grid: DensityGrid) -> sparse.csr_matrix:
    """Exact segment-cell intersection lengths: rows are curves, columns
    cells; (A rho) is the vector of line integrals of a cell density."""
    lo, _ = grid.bounds
    widths = grid.cell_widths
    n_cells = int(np.prod(grid.shape))
    rows, cols, vals = [], [], []
    for ci, curve in enumerate(family.curves):
        seg_ds = family.segment_lengths(curve)
        for (a, b), ds in zip(zip(curve[:-1], curve[1:]), seg_ds):
            if ds == 0.0:
                continue
            # parameter values where the segment crosses any grid plane
            ts = [0.0, 1.0]
            for k in range(family.dim):
                if b[k] == a[k]:
                    continue
                i0 = int(np.floor((min(a[k], b[k]) - lo[k]) / widths[k])) + 1
                i1 = int(np.floor((max(a[k], b[k]) - lo[k]) / widths[k]))
                for i in range(i0, i1 + 1):
                    t = (lo[k] + i * widths[k] - a[k]) / (b[k] - a[k])
                    if 0.0 < t < 1.0:
                        ts.append(float(t))
            ts = np.unique(ts)
            mids = a[None, :] + 0.5 * (ts[:-1] + ts[1:])[:, None] * (b - a)[None, :]
            cells = grid.cell_index(mids)
            pieces = np.diff(ts) * ds
            for cell, piece in zip(cells, pieces):
                rows.append(ci)
                cols.append(int(cell))
                vals.append(float(piece))
    mat = sparse.coo_matrix(
        (vals, (rows, cols)), shape=(len(family.curves), n_cells)
    )
    return mat.tocsr()


@dataclass
class ModulusResult:
    value: float
    rho: DensityGrid
    worst_violation: float
    iterations: int
    p: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "worst_violation": self.worst_violation,
            "iterations": self.iterations,
            "p": self.p,
            "rho": self.rho.to_dict(),
            "diagnostics": self.diagnostics,
        }


def _rescale_to_admissible(a_mat, rho, measure, p):
    integrals = a_mat @ rho
    worst = float(integrals.min())
    if worst <= 0.0:
        raise AdmissibilityError("density vanishes along some curve; cannot rescale")
    rho = rho / worst
    integrals = integrals / worst
    value = float(measure * (rho**p).sum())
    violation = float(max(0.0, 1.0 - integrals.min()))
    return rho, value, violation


def modulus_p(
    family: CurveFamily,
    grid_shape,
    p: float = 2.0,
    penalties=(1e2, 1e3, 1e4, 1e5, 1e6),
    max_iterations: int = 600,
    floor: float = LENGTH_FLOOR,
) -> ModulusResult:
    """p-modulus of the family on a uniform grid.

    Bound-constrained quasi-Newton descent of the penalized convex
    program (continuation over the penalty ladder), then exact
    feasibility rescaling: the reported value is always admissible."""
    from scipy.optimize import minimize

    if p < 1:
        raise ValueError("the modulus exponent must satisfy p >= 1")
    family = family.filtered(floor)
    if not family.curves:
        raise EmptyFamilyError("no curves of length >= floor; modulus is 0")
    if np.isscalar(grid_shape):
        grid_shape = (int(grid_shape),) * family.dim
    grid = DensityGrid(family.bounds, grid_shape, np.zeros(int(np.prod(grid_shape))))
    a_mat = line_integral_matrix(family, grid)
    measure = grid.cell_measure

    # feasible constant start
    base = a_mat @ np.ones(a_mat.shape[1])
    rho = np.full(a_mat.shape[1], 1.0 / max(base.min(), 1e-12))

    iterations = 0
    for lam in penalties:
        def fun(x, lam=lam):
            deficit = np.maximum(0.0, 1.0 - a_mat @ x)
            value = measure * (x**p).sum() + lam * (deficit**2).sum()
            grad = p * measure * x ** (p - 1.0) - 2.0 * lam * (a_mat.T @ deficit)
            return value, grad

        res = minimize(
            fun,
            rho,
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, None)] * rho.shape[0],
            options={"maxiter": max_iterations, "ftol": 1e-14, "gtol": 1e-12},
        )
        rho = res.x
        iterations += int(res.nit)
    rho, value, violation = _rescale_to_admissible(a_mat, rho, measure, p)
    grid.values = rho
    return ModulusResult(
        value=value,
        rho=grid,
        worst_violation=violation,
        iterations=iterations,
        p=float(p),
        diagnostics={"penalties": list(penalties), "curves": len(family.curves)},
    )


def _coordinate_minimum(p, measure, penalty, col, rest, x_now):
    """Exact minimizer in one cell of mu x^p + penalty sum max(0,1-rest-c x)^2."""
    if p == 2.0:
        # derivative is piecewise linear in x: scan segments between the
        # deactivation breakpoints of the curve constraints
        breaks = np.sort((1.0 - rest) / col)
        breaks = breaks[breaks > 0.0]
        candidates = np.concatenate([[0.0], breaks, [breaks[-1] + 1.0 if breaks.size else 1.0]])
        for lo_x, hi_x in zip(candidates[:-1], candidates[1:]):
            mid = 0.5 * (lo_x + hi_x)
            active = (rest + col * mid) < 1.0
            a = 2.0 * measure + 2.0 * penalty * (col[active] ** 2).sum()
            b = -2.0 * penalty * (col[active] * (1.0 - rest[active])).sum()
            x_star = -b / a
            if lo_x - 1e-15 <= x_star <= hi_x + 1e-15:
                return max(0.0, x_star)
        # derivative positive everywhere beyond the last breakpoint
        return max(0.0, float(candidates[-1]))

    def deriv(x):
        deficit = np.maximum(0.0, 1.0 - (rest + col * x))
        return p * measure * x ** (p - 1.0) - 2.0 * penalty * col @ deficit

    lo_x, hi_x = 0.0, max(x_now, 1.0)
    while deriv(hi_x) < 0.0:
        hi_x *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo_x + hi_x)
        if deriv(mid) > 0.0:
            hi_x = mid
        else:
            lo_x = mid
    return 0.5 * (lo_x + hi_x)


def modulus_p_coordinate_descent(
    family: CurveFamily,
    grid_shape,
    p: float = 2.0,
    penalty: float = 1e6,
    sweeps: int = 20000,
    tol: float = 1e-12,
    floor: float = LENGTH_FLOOR,
) -> ModulusResult:
    """Independent oracle for small instances: long-run exhaustive cyclic
    coordinate minimization of the same penalized convex program."""
    family = family.filtered(floor)
    if not family.curves:
        raise EmptyFamilyError("no curves of length >= floor; modulus is 0")
    if np.isscalar(grid_shape):
        grid_shape = (int(grid_shape),) * family.dim
    grid = DensityGrid(family.bounds, grid_shape, np.zeros(int(np.prod(grid_shape))))
    a_mat = line_integral_matrix(family, grid).toarray()
    measure = grid.cell_measure
    n_cells = a_mat.shape[1]
    base = a_mat @ np.ones(n_cells)
    rho = np.full(n_cells, 1.0 / max(base.min(), 1e-12))
    integrals = a_mat @ rho
    touched = [np.nonzero(a_mat[:, i])[0] for i in range(n_cells)]
    cols = [a_mat[touched[i], i] for i in range(n_cells)]

    iterations = 0
    for _ in range(sweeps):
        moved = 0.0
        for i in range(n_cells):
            rows = touched[i]
            if rows.size == 0:
                if rho[i] != 0.0:
                    integrals -= a_mat[:, i] * rho[i]
                    rho[i] = 0.0
                continue
            col = cols[i]
            rest = integrals[rows] - col * rho[i]
            new = _coordinate_minimum(p, measure, penalty, col, rest, rho[i])
            moved = max(moved, abs(new - rho[i]))
            integrals[rows] += col * (new - rho[i])
            rho[i] = new
            iterations += 1
        if moved < tol:
            break
    rho, value, violation = _rescale_to_admissible(a_mat, rho, measure, p)
    grid.values = rho
    return ModulusResult(
        value=value,
        rho=grid,
        worst_violation=violation,
        iterations=iterations,
        p=float(p),
        diagnostics={"solver": "coordinate-descent", "penalty": penalty},
    )


def modulus_p_constrained(
    family: CurveFamily,
    grid_shape,
    p: float = 2.0,
    floor: float = LENGTH_FLOOR,
) -> ModulusResult:
    """Second independent oracle for small instances: the constrained
    program solved directly (sequential quadratic programming), no
    penalty approximation anywhere."""
    from scipy.optimize import minimize

    family = family.filtered(floor)
    if not family.curves:
        raise EmptyFamilyError("no curves of length >= floor; modulus is 0")
    if np.isscalar(grid_shape):
        grid_shape = (int(grid_shape),) * family.dim
    grid = DensityGrid(family.bounds, grid_shape, np.zeros(int(np.prod(grid_shape))))
    a_mat = line_integral_matrix(family, grid).toarray()
    measure = grid.cell_measure
    base = a_mat @ np.ones(a_mat.shape[1])
    rho0 = np.full(a_mat.shape[1], 1.0 / max(base.min(), 1e-12))
    res = minimize(
        lambda x: (measure * (x**p).sum(), p * measure * x ** (p - 1.0)),
        rho0,
        jac=True,
        method="SLSQP",
        bounds=[(0.0, None)] * rho0.shape[0],
        constraints=[{"type": "ineq", "fun": lambda x: a_mat @ x - 1.0, "jac": lambda x: a_mat}],
        options={"maxiter": 400, "ftol": 1e-14},
    )
    rho, value, violation = _rescale_to_admissible(a_mat, res.x, measure, p)
    grid.values = rho
    return ModulusResult(
        value=value,
        rho=grid,
        worst_violation=violation,
        iterations=int(res.nit),
        p=float(p),
        diagnostics={"solver": "slsqp-constrained"},
    )


# -- the outer-distortion inequality -----------------------------------------

@dataclass
class KOReport:
    modulus: float
    weighted_image_integral: float
    implied_K: float
    admissibility_violations: list
    grid_shape: tuple
    Q: float

    def to_dict(self) -> dict:
        return {
            "modulus": self.modulus,
            "weighted_image_integral": self.weighted_image_integral,
            "implied_K": self.implied_K,
            "admissibility_violations": self.admissibility_violations,
            "grid_shape": list(self.grid_shape),
            "Q": self.Q,
        }


def admissibility_check(
    family: CurveFamily, rho: DensityGrid, tol: float = 1e-3
) -> list:
    a_mat = line_integral_matrix(family, rho)
    integrals = a_mat @ rho.values
    return [
        {"curve": int(i), "integral": float(v)}
        for i, v in enumerate(integrals)
        if v < 1.0 - tol
    ]


def ko_check(
    desc: MapDescriptor,
    family: CurveFamily,
    Q: float,
    grid_shape,
    rho: DensityGrid | None = None,
    image_grid_shape=None,
    refine: int = 4,
    domain_bounds=None,
) -> KOReport:
    """Implied outer-distortion constant K = Mod_Q(Gamma) / int N rho^Q.

    rho defaults to the optimal grid density of the image family (which is
    admissible by construction); an explicitly supplied rho is verified
    and rejected if any image curve integrates below 1 - 1e-3.
    """
    image = family.mapped(desc, refine=refine)
    if rho is None:
        img_res = modulus_p(image, image_grid_shape or grid_shape, p=Q)
        rho = img_res.rho
    violations = admissibility_check(image, rho, tol=1e-3)
    if violations:
        raise AdmissibilityError(
            f"{len(violations)} image curves fall below admissibility", violations
        )

    mod = modulus_p(family, grid_shape, p=Q)

    lo = family.bounds[0] if domain_bounds is None else np.asarray(domain_bounds[0], dtype=float)
    hi = family.bounds[1] if domain_bounds is None else np.asarray(domain_bounds[1], dtype=float)
    centers = rho.centers()
    active = rho.values > 0.0
    counts = np.zeros(centers.shape[0])
    stack = desc.enumerate_preimages(centers[active])
    if stack is None:
        raise NotImplementedError("ko_check needs a preimage enumerator on the map")
    inside = np.all(
        (stack >= lo[None, None, :] - 1e-9) & (stack <= hi[None, None, :] + 1e-9),
        axis=2,
    )
    # de-duplicate branch collisions by pairwise distance within each row
    for row_idx, (row_stack, row_in) in enumerate(zip(stack, inside)):
        pres = row_stack[row_in]
        if pres.shape[0] > 1:
            pres = np.unique(np.round(pres, 9), axis=0)
        counts[np.nonzero(active)[0][row_idx]] = pres.shape[0]
    integral = float((counts * rho.values**Q).sum() * rho.cell_measure)
    implied = mod.value / integral if integral > 0 else np.inf
    return KOReport(
        modulus=float(mod.value),
        weighted_image_integral=integral,
        implied_K=float(implied),
        admissibility_violations=[],
        grid_shape=tuple(rho.shape),
        Q=float(Q),
    )


# -- CSV interchange -----------------------------------------------------------

def family_to_csv(family: CurveFamily, path: str | Path) -> Path:
    path = Path(path)
    lines = ["curve," + ",".join(f"x{k+1}" for k in range(family.dim))]
    for ci, curve in enumerate(family.curves):
        for row in curve:
            lines.append(f"{ci}," + ",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def family_from_csv(path: str | Path, horizontal_dims: int | None = None) -> CurveFamily:
    path = Path(path)
    rows = path.read_text(encoding="utf-8").strip().splitlines()
    body = rows[1:] if rows and not rows[0].split(",")[0].lstrip("-").isdigit() else rows
    by_curve: dict[int, list] = {}
    for line in body:
        parts = line.split(",")
        cid = int(parts[0])
        by_curve.setdefault(cid, []).append([float(v) for v in parts[1:]])
    curves = [np.asarray(by_curve[k]) for k in sorted(by_curve)]
    pts = np.concatenate(curves, axis=0)
    pad = 0.02 * (pts.max(axis=0) - pts.min(axis=0) + 1e-12)
    return CurveFamily(
        curves, (pts.min(axis=0) - pad, pts.max(axis=0) + pad), horizontal_dims
    )
