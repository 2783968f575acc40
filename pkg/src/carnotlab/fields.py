"""Sparse polynomial algebra in n variables and polynomial vector fields.

Polynomials are dicts mapping exponent tuples to float coefficients; all
operations (product, differentiation, substitution, weighted truncation)
are exact on the coefficients, which is what makes Lie brackets and
weighted-degree blow-up bookkeeping deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class Poly:
    """Polynomial in n variables with float coefficients, sparse monomials."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict[tuple[int, ...], float] | None = None):
        self.n = int(n)
        self.terms = {}
        if terms:
            for expo, coef in terms.items():
                if coef != 0.0:
                    self.terms[tuple(int(e) for e in expo)] = float(coef)

    # -- constructors ----------------------------------------------------

    @staticmethod
    def zero(n: int) -> "Poly":
        return Poly(n)

    @staticmethod
    def const(n: int, value: float) -> "Poly":
        return Poly(n, {(0,) * n: value})

    @staticmethod
    def var(n: int, k: int) -> "Poly":
        expo = [0] * n
        expo[k] = 1
        return Poly(n, {tuple(expo): 1.0})

    # -- algebra -----------------------------------------------------------

    def copy(self) -> "Poly":
        return Poly(self.n, dict(self.terms))

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.terms)
        for expo, coef in other.terms.items():
            val = out.get(expo, 0.0) + coef
            if val == 0.0:
                out.pop(expo, None)
            else:
                out[expo] = val
        return Poly(self.n, out)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + other.scale(-1.0)

    def scale(self, factor: float) -> "Poly":
        if factor == 0.0:
            return Poly(self.n)
        return Poly(self.n, {e: c * factor for e, c in self.terms.items()})

    def __mul__(self, other: "Poly") -> "Poly":
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                val = out.get(key, 0.0) + c1 * c2
                if val == 0.0:
                    out.pop(key, None)
                else:
                    out[key] = val
        return Poly(self.n, out)

    def diff(self, k: int) -> "Poly":
        out: dict[tuple[int, ...], float] = {}
        for expo, coef in self.terms.items():
            e = expo[k]
            if e == 0:
                continue
            key = expo[:k] + (e - 1,) + expo[k + 1:]
            out[key] = out.get(key, 0.0) + coef * e
        return Poly(self.n, out)

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def weighted_part(self, weights, degree: int) -> "Poly":
        """Terms whose weighted monomial degree equals `degree`."""
        w = tuple(weights)
        return Poly(
            self.n,
            {e: c for e, c in self.terms.items() if sum(a * b for a, b in zip(e, w)) == degree},
        )

    def truncate(self, max_total_degree: int) -> "Poly":
        return Poly(self.n, {e: c for e, c in self.terms.items() if sum(e) <= max_total_degree})

    def compose(self, substitution: list["Poly"], max_degree: int | None = None) -> "Poly":
        """Substitute variable k -> substitution[k]; optionally truncate."""
        if len(substitution) != self.n:
            raise ValueError("substitution must provide one polynomial per variable")
        m = substitution[0].n
        out = Poly(m)
        for expo, coef in self.terms.items():
            term = Poly.const(m, coef)
            for k, e in enumerate(expo):
                for _ in range(e):
                    term = term * substitution[k]
                    if max_degree is not None:
                        term = term.truncate(max_degree)
            out = out + term
        if max_degree is not None:
            out = out.truncate(max_degree)
        return out

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (..., n)."""
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = np.zeros(pts.shape[:-1])
        for expo, coef in self.terms.items():
            mono = np.ones(pts.shape[:-1])
            for k, e in enumerate(expo):
                if e:
                    mono = mono * pts[..., k] ** e
            out = out + coef * mono
        return float(out[0]) if scalar else out

    def allclose(self, other: "Poly", tol: float = 1e-12) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0.0) - other.terms.get(k, 0.0)) <= tol for k in keys)

    def prune(self, tol: float) -> "Poly":
        return Poly(self.n, {e: c for e, c in self.terms.items() if abs(c) > tol})

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        bits = []
        for expo, coef in sorted(self.terms.items()):
            mono = "*".join(f"x{k}^{e}" if e > 1 else f"x{k}" for k, e in enumerate(expo) if e)
            bits.append(f"{coef:+g}" + (f"*{mono}" if mono else ""))
        return "".join(bits)


@dataclass(frozen=True)
class PolyVectorField:
    """Vector field on R^n with polynomial coefficient functions."""

    components: tuple[Poly, ...]

    @property
    def n(self) -> int:
        return len(self.components)

    @staticmethod
    def from_terms(n: int, terms) -> "PolyVectorField":
        """Build from (slot, coef, exponent-tuple) triples; slot is 0-based."""
        comps = [Poly(n) for _ in range(n)]
        for slot, coef, expo in terms:
            comps[slot] = comps[slot] + Poly(n, {tuple(expo): coef})
        return PolyVectorField(tuple(comps))

    @staticmethod
    def constant(n: int, direction) -> "PolyVectorField":
        vec = np.asarray(direction, dtype=float)
        return PolyVectorField(tuple(Poly.const(n, float(v)) for v in vec))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.stack([c.evaluate(pts) for c in self.components], axis=-1)
        return out[0] if np.asarray(points).ndim == 1 else out

    def degree(self) -> int:
        return max(c.degree() for c in self.components)

    def scale(self, factor: float) -> "PolyVectorField":
        return PolyVectorField(tuple(c.scale(factor) for c in self.components))

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        return PolyVectorField(tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "PolyVectorField") -> "PolyVectorField":
        return self + other.scale(-1.0)

    def allclose(self, other: "PolyVectorField", tol: float = 1e-12) -> bool:
        return all(a.allclose(b, tol) for a, b in zip(self.components, other.components))

    def max_coefficient_distance(self, other: "PolyVectorField") -> float:
        worst = 0.0
        for a, b in zip(self.components, other.components):
            keys = set(a.terms) | set(b.terms)
            for k in keys:
                worst = max(worst, abs(a.terms.get(k, 0.0) - b.terms.get(k, 0.0)))
        return worst

    def weighted_part(self, weights, degree_by_slot) -> "PolyVectorField":
        """Keep the terms where coefficient slot i has weighted degree `degree_by_slot[i]`."""
        return PolyVectorField(
            tuple(
                c.weighted_part(weights, d)
                for c, d in zip(self.components, degree_by_slot)
            )
        )


def lie_bracket(x: PolyVectorField, y: PolyVectorField) -> PolyVectorField:
    """Exact polynomial Lie bracket [X, Y] = (DY)X - (DX)Y."""
    if x.n != y.n:
        raise ValueError("vector fields live on charts of different dimension")
    n = x.n
    comps = []
    for i in range(n):
        acc = Poly(n)
        for j in range(n):
            acc = acc + x.components[j] * y.components[i].diff(j)
            acc = acc - y.components[j] * x.components[i].diff(j)
        comps.append(acc)
    return PolyVectorField(tuple(comps))


def term_table(fields) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flatten a list of fields into the kernel term arrays
    (expo (T,n), coef (T,), field (T,), slot (T,))."""
    expo, coef, fidx, slot = [], [], [], []
    n = fields[0].n
    for j, fld in enumerate(fields):
        for i, comp in enumerate(fld.components):
            for e, c in sorted(comp.terms.items()):
                expo.append(e)
                coef.append(c)
                fidx.append(j)
                slot.append(i)
    if not expo:
        expo = np.zeros((0, n), dtype=np.int64)
    return (
        np.asarray(expo, dtype=np.int64).reshape(-1, n),
        np.asarray(coef, dtype=float),
        np.asarray(fidx, dtype=np.int64),
        np.asarray(slot, dtype=np.int64),
    )


def factorial(k: int) -> float:
    return float(math.factorial(k))
