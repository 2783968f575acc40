"""Privileged coordinates, frame blow-ups, and the nilpotent approximation
(tangent Carnot algebra) of a horizontal frame at a point.

The generic pipeline is exact polynomial algebra end to end:

1. an adapted basis of bracket words fixes a linear change of chart so the
   word values at the center become the standard basis;
2. the exponential coordinates of the adapted word frame are computed as a
   Lie-series jet (finite sum in total degree <= step), then inverted as a
   formal polynomial jet;
3. the frame is pushed forward through the jet and each monomial is kept
   in the blow-up limit iff its weighted degree matches its slot weight.

Frames backed by a Carnot algebra skip the jets: left translation is an
exact privileged chart and the fields are already dilation-homogeneous.
The generic pipeline is cross-checked against that exact route in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import CarnotAlgebra
from .errors import NonGeneratingError
from .fields import Poly, PolyVectorField, factorial, lie_bracket
from .frames import GrowthData, HorizontalFrame, growth_vector_at
from .util import as_point


class GroupChart:
    """Privileged chart of a Carnot model: left translation to the center."""

    def __init__(self, algebra: CarnotAlgebra, center):
        self.algebra = algebra
        self.center = as_point(center, algebra.n)
        self.weights = tuple(int(w) for w in algebra.weights)

    def to_privileged(self, points):
        return self.algebra.conjugate_difference(self.center, np.asarray(points, dtype=float))

    def from_privileged(self, coords):
        return self.algebra.bch_product(self.center, np.asarray(coords, dtype=float))


class JetChart:
    """Polynomial chart pair (forward: x -> y, inverse: y -> x), exact as
    written; forward and inverse compose to the identity through the jet
    truncation degree only, which is all blow-ups consume."""

    def __init__(self, forward: list[Poly], inverse: list[Poly], center, weights):
        self.forward = forward
        self.inverse = inverse
        self.center = np.asarray(center, dtype=float)
        self.weights = tuple(int(w) for w in weights)

    def to_privileged(self, points):
        pts = np.asarray(points, dtype=float)
        out = np.stack([p.evaluate(pts) for p in self.forward], axis=-1)
        return out

    def from_privileged(self, coords):
        ys = np.asarray(coords, dtype=float)
        return np.stack([p.evaluate(ys) for p in self.inverse], axis=-1)


@dataclass
class NilpotentApproximation:
    """Output of the tangent-cone computation at a point."""

    algebra: CarnotAlgebra
    chart: GroupChart | JetChart
    growth: GrowthData
    privileged_fields: tuple[PolyVectorField, ...]
    limit_fields: tuple[PolyVectorField, ...]
    equiregular: bool
    basis_residual: float


def _affine_transform_fields(fields, offset, matrix):
    """Push the frame through x = offset + matrix @ z (exact)."""
    n = len(offset)
    inv = np.linalg.inv(matrix)
    subs = []
    for k in range(n):
        terms = {(0,) * n: float(offset[k])}
        for l in range(n):
            if matrix[k, l] != 0.0:
                e = [0] * n
                e[l] = 1
                terms[tuple(e)] = terms.get(tuple(e), 0.0) + float(matrix[k, l])
        subs.append(Poly(n, terms))
    out = []
    for fld in fields:
        comps_x = [c.compose(subs) for c in fld.components]
        new_comps = []
        for i in range(n):
            acc = Poly(n)
            for k in range(n):
                if inv[i, k] != 0.0:
                    acc = acc + comps_x[k].scale(inv[i, k])
            new_comps.append(acc)
        out.append(PolyVectorField(tuple(new_comps)))
    return out


def _word_field(fields, word):
    """Left-normed bracket word: word (j1,...,jk) -> [X_j1,[...,X_jk]]."""
    fld = fields[word[-1]]
    for j in reversed(word[:-1]):
        fld = lie_bracket(fields[j], fld)
    return fld


def _lie_series_exponential_jet(word_fields, step: int) -> list[Poly]:
    """Degree-<=step jet of y -> exp(sum_i y_i Y_i)(0) via the Lie series
    sum_m (1/m!) V^m z_k evaluated at z=0, with V = sum_i y_i Y_i."""
    n = word_fields[0].n
    two_n = 2 * n  # variables: z_0..z_{n-1}, y_0..y_{n-1}
    lifted = []
    for fld in word_fields:
        comps = []
        for comp in fld.components:
            comps.append(Poly(two_n, {e + (0,) * n: c for e, c in comp.terms.items()}))
        lifted.append(comps)

    def apply_v(f: Poly) -> Poly:
        out = Poly(two_n)
        for i in range(n):
            y_i = Poly.var(two_n, n + i)
            for l in range(n):
                df = f.diff(l)
                if df and lifted[i][l]:
                    out = out + y_i * lifted[i][l] * df
        # drop anything beyond total y-degree step: it cannot survive z=0
        kept = {
            e: c for e, c in out.terms.items() if sum(e[n:]) <= step
        }
        return Poly(two_n, kept)

    jets = []
    for k in range(n):
        f = Poly.var(two_n, k)
        acc = Poly(two_n)
        for m in range(step + 1):
            if m > 0:
                f = apply_v(f)
                if not f:
                    break
            acc = acc + f.scale(1.0 / factorial(m))
        # evaluate at z = 0, re-index the surviving y-monomials to n variables
        terms = {}
        for e, c in acc.terms.items():
            if any(e[:n]):
                continue
            terms[e[n:]] = terms.get(e[n:], 0.0) + c
        jets.append(Poly(n, terms))
    return jets


def _invert_jet(jet: list[Poly], degree: int) -> list[Poly]:
    """Formal inverse of y -> E(y) = y + higher order, through `degree`."""
    n = len(jet)
    higher = []
    for k in range(n):
        e_lin = [0] * n
        e_lin[k] = 1
        terms = dict(jet[k].terms)
        terms.pop(tuple(e_lin), None)
        terms.pop((0,) * n, None)
        higher.append(Poly(n, terms))
    inverse = [Poly.var(n, k) for k in range(n)]
    for _ in range(degree):
        inverse = [
            Poly.var(n, k) - higher[k].compose(inverse, max_degree=degree)
            for k in range(n)
        ]
    return inverse


def _pushforward(fields, forward_jet, inverse_jet, cap: int):
    """Fields in y-coordinates where y = G(z), z = E(y): (DG . X)(E(y))."""
    n = len(forward_jet)
    jac = [[forward_jet[i].diff(k) for k in range(n)] for i in range(n)]
    out = []
    for fld in fields:
        comps_z = []
        for i in range(n):
            acc = Poly(n)
            for k in range(n):
                if jac[i][k] and fld.components[k]:
                    acc = acc + jac[i][k] * fld.components[k]
            comps_z.append(acc.truncate(cap))
        comps_y = tuple(c.compose(inverse_jet, max_degree=cap) for c in comps_z)
        out.append(PolyVectorField(comps_y))
    return out


def _structure_from_limit(limit_fields, growth: GrowthData, tol: float = 1e-9):
    """Structure constants of the algebra generated by the limit fields,
    expressed in the adapted word basis; returns (tensor, worst residual)."""
    n = limit_fields[0].n
    basis = [_word_field(limit_fields, word) for word in growth.words]
    values = np.stack([b.evaluate(np.zeros(n)) for b in basis], axis=1)
    residual = float(np.abs(values - np.eye(n)).max())
    c = np.zeros((n, n, n))
    for i in range(n):
        for j in range(i + 1, n):
            br = lie_bracket(basis[i], basis[j])
            val = br.evaluate(np.zeros(n))
            coeffs = np.linalg.solve(values, val)
            coeffs[np.abs(coeffs) <= tol] = 0.0
            # the bracket must equal the constant-coefficient combination as a field
            recon = PolyVectorField(tuple(Poly.zero(n) for _ in range(n)))
            for k, ck in enumerate(coeffs):
                if ck:
                    recon = recon + basis[k].scale(ck)
            residual = max(residual, br.max_coefficient_distance(recon))
            c[i, j, :] = coeffs
            c[j, i, :] = -coeffs
    return c, residual


def nilpotent_approximation(
    frame: HorizontalFrame,
    o,
    force_generic: bool = False,
    cap: int | None = None,
    probe_equiregularity: bool = True,
    probe_scale: float = 1e-3,
) -> NilpotentApproximation:
    """Tangent Carnot algebra, privileged chart and blow-up limit frame at o.

    Carnot models use exact left translation unless `force_generic` is set;
    the generic route builds the chart as polynomial jets.  The output
    algebra always passes its own structure validation; equiregularity is
    probed on a box of 26 neighbors and flagged, not assumed.
    """
    o = as_point(o, frame.n)
    growth = growth_vector_at(frame, o)

    equiregular = True
    if probe_equiregularity:
        offsets = np.array(
            [off for off in np.ndindex(3, 3, *(3,) * (frame.n - 2)) ], dtype=float
        ) - 1.0
        for off in offsets:
            if not off.any():
                continue
            try:
                g2 = growth_vector_at(frame, o + probe_scale * off)
                if g2.ranks != growth.ranks:
                    equiregular = False
                    break
            except NonGeneratingError:
                equiregular = False
                break

    if frame.is_group_model and not force_generic:
        algebra = frame.algebra
        chart = GroupChart(algebra, o)
        return NilpotentApproximation(
            algebra=algebra,
            chart=chart,
            growth=growth,
            privileged_fields=frame.fields,
            limit_fields=frame.fields,
            equiregular=equiregular,
            basis_residual=0.0,
        )

    step = growth.step
    weights = growth.weights
    if cap is None:
        cap = step + max(2, max(f.degree() for f in frame.fields)) + 1

    # adapted linear chart: word values at o become the standard basis
    word_fields = [_word_field(frame.fields, w) for w in growth.words]
    T = np.stack([wf.evaluate(o) for wf in word_fields], axis=1)
    z_fields = _affine_transform_fields(frame.fields, o, T)
    z_words = [_word_field(z_fields, w) for w in growth.words]

    # weighted triangular correction: exponential coordinates of the
    # adapted word frame, as a formal jet of total degree <= step
    exp_jet = _lie_series_exponential_jet(z_words, step)
    inv_jet = _invert_jet(exp_jet, step)

    privileged = _pushforward(z_fields, inv_jet, exp_jet, cap)
    limit = [
        fld.weighted_part(weights, [w - 1 for w in weights]) for fld in privileged
    ]

    c, residual = _structure_from_limit(limit, growth)
    algebra = CarnotAlgebra(growth.growth, c, name=f"tangent({frame.name}@{o.tolist()})")
    report = algebra.verify_structure()
    if not report.ok:
        raise NonGeneratingError(
            f"limit fields do not close into a stratified algebra:\n{report}"
        )
    if algebra.homogeneous_dimension() != growth.Q:
        raise NonGeneratingError(
            "homogeneous dimension of the tangent algebra disagrees with the growth data"
        )

    # chart maps: forward x -> y (privileged), inverse y -> x
    n = frame.n
    t_inv = np.linalg.inv(T)
    z_of_x = []
    for i in range(n):
        terms = {}
        const = -float(t_inv[i] @ o)
        if const:
            terms[(0,) * n] = const
        for k in range(n):
            if t_inv[i, k] != 0.0:
                e = [0] * n
                e[k] = 1
                terms[tuple(e)] = float(t_inv[i, k])
        z_of_x.append(Poly(n, terms))
    forward = [g.compose(z_of_x) for g in inv_jet]
    x_of_z = []
    for k in range(n):
        terms = {(0,) * n: float(o[k])}
        for l in range(n):
            if T[k, l] != 0.0:
                e = [0] * n
                e[l] = 1
                terms[tuple(e)] = terms.get(tuple(e), 0.0) + float(T[k, l])
        x_of_z.append(Poly(n, terms))
    inverse = [xz.compose(exp_jet) for xz in x_of_z]
    chart = JetChart(forward, inverse, o, weights)

    return NilpotentApproximation(
        algebra=algebra,
        chart=chart,
        growth=growth,
        privileged_fields=tuple(privileged),
        limit_fields=tuple(limit),
        equiregular=equiregular,
        basis_residual=residual,
    )


def scale_field(fld: PolyVectorField, weights, eps: float) -> PolyVectorField:
    """Blow-up rescaling in privileged coordinates: each monomial picks up
    eps**(weighted degree + 1), so degree-(-1) terms are invariant."""
    n = fld.n
    comps = []
    for i, comp in enumerate(fld.components):
        terms = {}
        for e, coef in comp.terms.items():
            wdeg = sum(a * w for a, w in zip(e, weights)) - weights[i]
            terms[e] = coef * eps ** (wdeg + 1)
        comps.append(Poly(n, terms))
    return PolyVectorField(tuple(comps))


def blowup_frame(
    frame: HorizontalFrame,
    o,
    eps: float,
    approx: NilpotentApproximation | None = None,
) -> HorizontalFrame:
    """Frame blown up at o by eps, expressed in privileged coordinates.

    Exact on polynomial coefficients; eps -> 0 recovers the limit fields.
    """
    if eps <= 0:
        raise ValueError(f"blow-up scale must be positive, got {eps}")
    if approx is None:
        approx = nilpotent_approximation(frame, o, probe_equiregularity=False)
    weights = approx.chart.weights
    fields = [scale_field(f, weights, eps) for f in approx.privileged_fields]
    return HorizontalFrame(
        fields,
        name=f"{frame.name}^({np.asarray(o, dtype=float).tolist()},{eps})",
        algebra=None,
    )


def blowup_convergence(
    frame: HorizontalFrame, o, eps_ladder, approx: NilpotentApproximation | None = None
) -> list[float]:
    """Max coefficient distance between the eps-blow-up and the limit frame."""
    if approx is None:
        approx = nilpotent_approximation(frame, o, probe_equiregularity=False)
    weights = approx.chart.weights
    out = []
    for eps in eps_ladder:
        worst = 0.0
        for fld, lim in zip(approx.privileged_fields, approx.limit_fields):
            scaled = scale_field(fld, weights, float(eps))
            worst = max(worst, scaled.max_coefficient_distance(lim))
        out.append(worst)
    return out
