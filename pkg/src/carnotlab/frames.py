"""Horizontal frames of polynomial vector fields on a coordinate chart.

A frame is r polynomial fields X_1..X_r declared orthonormal; the flag of
iterated brackets gives growth vectors, weights and the homogeneous
dimension at a point.  Frames backed by a Carnot algebra (the built-in
models) carry exact group structure used elsewhere for fast paths.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .algebra import CarnotAlgebra, builtin_algebra
from .errors import IntegrationError, NonGeneratingError, StructureError
from .fields import Poly, PolyVectorField, lie_bracket, term_table
from .util import as_point

# Taylor coefficients of z / (1 - exp(-z)): the exponential-coordinate
# expression of left-invariant fields, X_j(x) = sum_k a_k ad_x^k e_j.
_DEXP_INV = (1.0, 0.5, 1.0 / 12.0, 0.0, -1.0 / 720.0, 0.0, 1.0 / 30240.0)


@dataclass(frozen=True)
class GrowthData:
    """Bracket flag data of a frame at a point."""

    point: tuple[float, ...]
    ranks: tuple[int, ...]
    growth: tuple[int, ...]
    weights: tuple[int, ...]
    step: int
    Q: int
    words: tuple[tuple[int, ...], ...]  # adapted bracket words, one per slot

    def to_dict(self) -> dict:
        return {
            "point": list(self.point),
            "ranks": list(self.ranks),
            "growth": list(self.growth),
            "weights": list(self.weights),
            "step": self.step,
            "Q": self.Q,
            "words": [list(w) for w in self.words],
        }


class HorizontalFrame:
    """r polynomial vector fields on an n-dimensional chart, declared orthonormal."""

    def __init__(
        self,
        fields,
        name: str | None = None,
        algebra: CarnotAlgebra | None = None,
        box_halfwidth: float = 1.0,
    ):
        self.fields = tuple(fields)
        if not self.fields:
            raise StructureError("a frame needs at least one field")
        self.n = self.fields[0].n
        if any(f.n != self.n for f in self.fields):
            raise StructureError("all frame fields must share the chart dimension")
        self.r = len(self.fields)
        self.name = name or f"frame(n={self.n},r={self.r})"
        self.algebra = algebra
        self.box_halfwidth = float(box_halfwidth)
        if algebra is not None and algebra.n != self.n:
            raise StructureError("attached algebra dimension does not match chart")

    def __repr__(self) -> str:
        return f"HorizontalFrame({self.name!r}, n={self.n}, r={self.r})"

    @cached_property
    def term_table(self):
        return term_table(self.fields)

    @property
    def is_group_model(self) -> bool:
        return self.algebra is not None

    def frame_matrix(self, p) -> np.ndarray:
        """Columns X_1(p)..X_r(p), shape (n, r)."""
        p = as_point(p, self.n)
        return np.stack([f.evaluate(p) for f in self.fields], axis=1)

    # -- bracket flag -----------------------------------------------------

    def bracket_flag_at(self, p, cap: int = 6, rel_tol: float = 1e-9):
        """Greedy adapted basis from iterated bracket words evaluated at p.

        Returns (ranks, selected) where selected is a list of
        (word, field, value) in nondecreasing word length; raises
        NonGeneratingError if the flag stalls before reaching n.
        """
        p = as_point(p, self.n)
        level_words: list[tuple[tuple[int, ...], PolyVectorField]] = [
            ((j,), f) for j, f in enumerate(self.fields)
        ]
        ortho: list[np.ndarray] = []
        selected: list[tuple[tuple[int, ...], PolyVectorField, np.ndarray]] = []
        ranks: list[int] = []
        level = 1
        while True:
            for word, fld in level_words:
                val = fld.evaluate(p)
                scale = np.linalg.norm(val)
                if scale == 0.0:
                    continue
                res = val.copy()
                for q in ortho:
                    res -= (q @ res) * q
                if np.linalg.norm(res) > rel_tol * scale:
                    ortho.append(res / np.linalg.norm(res))
                    selected.append((word, fld, val))
            ranks.append(len(ortho))
            if len(ortho) == self.n:
                return tuple(ranks), selected
            if level >= cap or (len(ranks) >= 2 and ranks[-1] == ranks[-2]):
                raise NonGeneratingError(
                    f"frame is not bracket generating at {p.tolist()} within {level} levels",
                    partial_ranks=tuple(ranks),
                )
            level_words = [
                ((j,) + word, lie_bracket(self.fields[j], fld))
                for j in range(self.r)
                for word, fld in level_words
            ]
            level += 1


def growth_vector_at(frame: HorizontalFrame, p, cap: int = 6, rel_tol: float = 1e-9) -> GrowthData:
    """Ranks, growth vector, weights and homogeneous dimension at p."""
    ranks, selected = frame.bracket_flag_at(p, cap=cap, rel_tol=rel_tol)
    growth = tuple(
        r - (ranks[i - 1] if i else 0) for i, r in enumerate(ranks)
    )
    weights = tuple(len(word) for word, _, _ in selected)
    q = sum(weights)
    return GrowthData(
        point=tuple(float(v) for v in as_point(p, frame.n)),
        ranks=tuple(ranks),
        growth=growth,
        weights=weights,
        step=len(ranks),
        Q=int(q),
        words=tuple(word for word, _, _ in selected),
    )


# -- flows ------------------------------------------------------------------

def _as_control_schedule(controls, total_time: float):
    """Normalize the accepted control formats to a list of (duration, fn(t))."""
    if callable(controls):
        return [(total_time, controls)]
    if isinstance(controls, (list, tuple)) and controls and isinstance(controls[0], (list, tuple)) \
            and len(controls[0]) == 2 and np.ndim(controls[0][1]) >= 1:
        return [(float(dur), np.asarray(u, dtype=float)) for dur, u in controls]
    const = np.asarray(controls, dtype=float)
    return [(total_time, const)]


def flow(frame: HorizontalFrame, controls, p, total_time: float, rtol: float = 1e-9):
    """Integrate gamma' = sum_j u_j(t) X_j(gamma) with adaptive RK45.

    `controls` may be a constant (r,) vector, a callable t -> (r,), or a
    list of (duration, constant-control) pieces.  Returns gamma(T).
    """
    p = as_point(p, frame.n)
    if total_time == 0.0:
        return p.copy()
    schedule = _as_control_schedule(controls, total_time)
    state = p.copy()
    elapsed = 0.0
    for duration, u in schedule:
        if duration <= 0.0:
            continue

        if callable(u):
            def rhs(t, x, u=u):
                mat = frame.frame_matrix(x)
                return mat @ np.asarray(u(t), dtype=float)
        else:
            def rhs(t, x, u=u):
                return frame.frame_matrix(x) @ u

        sol = solve_ivp(
            rhs, (0.0, duration), state, method="RK45", rtol=rtol, atol=1e-12
        )
        if not sol.success:
            raise IntegrationError(
                f"flow integration failed: {sol.message}",
                last_state=sol.y[:, -1],
                last_time=elapsed + sol.t[-1],
            )
        state = sol.y[:, -1]
        elapsed += duration
    return state


# -- built-in frames and the definition-file loader -------------------------

def left_invariant_frame(algebra: CarnotAlgebra, box_halfwidth: float = 1.0) -> HorizontalFrame:
    """Left-invariant horizontal frame of a Carnot algebra in exponential
    coordinates: X_j(x) = sum_k a_k ad_x^k e_j with the dexp-inverse series."""
    if algebra.step > len(_DEXP_INV):
        raise StructureError("left-invariant frame series tabulated through step 7")
    n = algebra.n
    xvars = [Poly.var(n, k) for k in range(n)]
    fields = []
    for j in range(algebra.rank):
        comps = [Poly.zero(n) for _ in range(n)]
        # current = ad_x^m e_j as polynomial vector, starting from m = 0
        current = [Poly.zero(n) for _ in range(n)]
        current[j] = Poly.const(n, 1.0)
        for m, a in enumerate(_DEXP_INV[: algebra.step]):
            if a:
                comps = [c + cur.scale(a) for c, cur in zip(comps, current)]
            # ad_x(v)_k = sum_{i,l} c[i,l,k] x_i v_l
            nxt = [Poly.zero(n) for _ in range(n)]
            for i in range(n):
                for l in range(n):
                    for k in range(n):
                        cval = algebra.brackets[i, l, k]
                        if cval != 0.0:
                            nxt[k] = nxt[k] + (xvars[i] * current[l]).scale(cval)
            current = nxt
        fields.append(PolyVectorField(tuple(comps)))
    return HorizontalFrame(
        fields, name=algebra.name, algebra=algebra, box_halfwidth=box_halfwidth
    )


def builtin_frame(name: str) -> HorizontalFrame:
    """Named frames: "heisenberg1" (alias "h1"), "engel", "abelian(n)"."""
    key = name.strip().lower()
    m = re.fullmatch(r"abelian\((\d+)\)", key)
    if key in ("heisenberg1", "h1"):
        return left_invariant_frame(builtin_algebra("heisenberg1"))
    if key == "engel":
        return left_invariant_frame(builtin_algebra("engel"))
    if m:
        n = int(m.group(1))
        fields = [PolyVectorField.constant(n, np.eye(n)[j]) for j in range(n)]
        return HorizontalFrame(fields, name=f"abelian({n})", algebra=builtin_algebra(key))
    raise KeyError(f"unknown frame {name!r}")


def parse_frame_text(text: str, name: str | None = None) -> HorizontalFrame:
    """Parse a frame definition file.

    Format: `n = <int>`, `r = <int>`, then blocks starting with `field`,
    each holding `term slot=<1-based> coef=<float> expo=<e1,...,en>` lines.
    """
    n = None
    r = None
    fields: list[list[tuple[int, float, tuple[int, ...]]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line and not line.lower().startswith("term"):
            key, _, value = line.partition("=")
            key = key.strip().lower()
            if key == "n":
                n = int(value)
            elif key == "r":
                r = int(value)
            else:
                raise StructureError(f"line {lineno}: unknown key {key!r}")
        elif line.lower().startswith("field"):
            fields.append([])
        elif line.lower().startswith("term"):
            if not fields:
                raise StructureError(f"line {lineno}: term before any field block")
            if n is None:
                raise StructureError("n must be declared before terms")
            entries = dict(
                part.split("=", 1) for part in line.split()[1:] if "=" in part
            )
            slot = int(entries["slot"]) - 1
            coef = float(entries["coef"])
            expo = tuple(int(v) for v in entries["expo"].split(","))
            if len(expo) != n or not (0 <= slot < n):
                raise StructureError(f"line {lineno}: term does not match n={n}")
            fields[-1].append((slot, coef, expo))
        else:
            raise StructureError(f"line {lineno}: unparseable line {line!r}")
    if n is None or not fields:
        raise StructureError("frame file must declare n and at least one field")
    if r is not None and r != len(fields):
        raise StructureError(f"declared r={r} but found {len(fields)} field blocks")
    return HorizontalFrame(
        [PolyVectorField.from_terms(n, terms) for terms in fields], name=name
    )


def load_frame(path: str | Path) -> HorizontalFrame:
    path = Path(path)
    return parse_frame_text(path.read_text(encoding="utf-8"), name=path.stem)
