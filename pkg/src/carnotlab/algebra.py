"""Stratified nilpotent Lie algebras and the group arithmetic they generate.

A :class:`CarnotAlgebra` is given by its layer dimensions and the dense
structure tensor c[i][j][k] with [e_i, e_j] = sum_k c_ijk e_k.  Group
elements are plain float vectors in exponential coordinates (the identity
is the zero vector, inversion is negation), and the product is the
truncated Baker-Campbell-Hausdorff series, which is exact by nilpotency.
All group operations broadcast over leading axes.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import StructureError, UnsupportedStepError

# B_{2p} / (2p)! for the even Bernoulli numbers B_2=1/6, B_4=-1/30, B_6=1/42.
_BERNOULLI_TERM = {2: 1.0 / 12.0, 4: -1.0 / 720.0, 6: 1.0 / 30240.0}
_MAX_STEP = 7

_TOL = 1e-12


@dataclass(frozen=True)
class Violation:
    axiom: str          # antisymmetry | jacobi | grading | generation
    indices: tuple      # 1-based basis indices involved
    magnitude: float

    def __str__(self) -> str:
        return f"{self.axiom} violated at {self.indices} (magnitude {self.magnitude:.3e})"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_axiom(self, axiom: str) -> list[Violation]:
        return [v for v in self.violations if v.axiom == axiom]

    def __str__(self) -> str:
        if self.ok:
            return "valid stratified algebra"
        return "\n".join(str(v) for v in self.violations)


class CarnotAlgebra:
    """Stratified nilpotent Lie algebra with dense structure tensor.

    Parameters
    ----------
    layers : layer dimensions (n_1, ..., n_s); rank r = n_1, step s.
    brackets : (n, n, n) tensor, [e_i, e_j] = sum_k brackets[i, j, k] e_k.
               Entries may be exact rationals; they are converted to float
               once at construction.
    name : optional display name.
    """

    def __init__(self, layers, brackets, name: str | None = None):
        self.layers = tuple(int(m) for m in layers)
        if any(m <= 0 for m in self.layers):
            raise StructureError("layer dimensions must be positive")
        self.n = sum(self.layers)
        self.step = len(self.layers)
        self.rank = self.layers[0]
        tensor = np.asarray(
            [[[float(v) for v in row] for row in plane] for plane in brackets]
            if not isinstance(brackets, np.ndarray)
            else brackets,
            dtype=float,
        )
        if tensor.shape != (self.n, self.n, self.n):
            raise StructureError(
                f"structure tensor shape {tensor.shape} does not match n={self.n}"
            )
        tensor = tensor.copy()
        tensor.flags.writeable = False
        self.brackets = tensor
        self.name = name or f"carnot{self.layers}"
        weights = np.concatenate(
            [np.full(m, k + 1, dtype=int) for k, m in enumerate(self.layers)]
        )
        weights.flags.writeable = False
        self.weights = weights

    # -- basic structure -------------------------------------------------

    def __repr__(self) -> str:
        return f"CarnotAlgebra(name={self.name!r}, layers={self.layers})"

    def layer_slice(self, k: int) -> slice:
        """Index slice of layer k (1-based)."""
        start = sum(self.layers[: k - 1])
        return slice(start, start + self.layers[k - 1])

    def homogeneous_dimension(self) -> int:
        return int(sum((k + 1) * m for k, m in enumerate(self.layers)))

    def bracket(self, u, v) -> np.ndarray:
        """[u, v] through the structure tensor; broadcasts over leading axes."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return np.einsum("...i,...j,ijk->...k", u, v, self.brackets)

    def ad_matrix(self, u) -> np.ndarray:
        """Matrix of ad_u = [u, .] acting on coordinates."""
        u = np.asarray(u, dtype=float)
        return np.einsum("i,ijk->kj", u, self.brackets)

    # -- validation ------------------------------------------------------

    def verify_structure(self) -> ValidationReport:
        """Check antisymmetry, the Jacobi identity, the grading, and that
        layer-1 brackets generate every higher layer."""
        c = self.brackets
        n = self.n
        w = self.weights
        found: list[Violation] = []

        anti = c + np.swapaxes(c, 0, 1)
        for i, j, k in zip(*np.nonzero(np.abs(anti) > _TOL)):
            if i <= j:
                found.append(
                    Violation("antisymmetry", (int(i) + 1, int(j) + 1, int(k) + 1),
                              float(abs(anti[i, j, k])))
                )

        jac = (
            np.einsum("ijm,mkl->ijkl", c, c)
            + np.einsum("jkm,mil->ijkl", c, c)
            + np.einsum("kim,mjl->ijkl", c, c)
        )
        bad = np.abs(jac) > _TOL
        for i, j, k in itertools.combinations(range(n), 3):
            mags = np.abs(jac[i, j, k][bad[i, j, k]])
            if mags.size:
                found.append(
                    Violation("jacobi", (i + 1, j + 1, k + 1), float(mags.max()))
                )

        for i in range(n):
            for j in range(n):
                target = w[i] + w[j]
                for k in np.nonzero(np.abs(c[i, j]) > _TOL)[0]:
                    if target > self.step or w[k] != target:
                        found.append(
                            Violation("grading", (i + 1, j + 1, int(k) + 1),
                                      float(abs(c[i, j, k])))
                        )

        for layer in range(2, self.step + 1):
            prev = np.nonzero(w == layer - 1)[0]
            first = np.nonzero(w == 1)[0]
            sl = self.layer_slice(layer)
            cols = [c[i, j, sl] for i in first for j in prev]
            dim = self.layers[layer - 1]
            rank = 0
            if cols:
                mat = np.stack(cols, axis=1)
                svals = np.linalg.svd(mat, compute_uv=False)
                if svals.size:
                    rank = int(np.sum(svals > max(1e-9 * svals[0], _TOL)))
            if rank < dim:
                found.append(Violation("generation", (layer,), float(dim - rank)))

        return ValidationReport(tuple(found))

    # -- group operations -------------------------------------------------

    def bch_product(self, x, y) -> np.ndarray:
        """Group product in exponential coordinates (truncated BCH series).

        Uses the generic-order recursion with Bernoulli coefficients; the
        series terminates exactly at the nilpotency step.
        """
        if self.step > _MAX_STEP:
            raise UnsupportedStepError(
                f"BCH recursion implemented through step {_MAX_STEP}, got {self.step}"
            )
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape[-1] != self.n or y.shape[-1] != self.n:
            raise StructureError("group element dimension mismatch")
        if self.step == 1:
            return x + y
        xy = x + y
        z = [None, xy.astype(float)]
        for m in range(1, self.step):
            acc = 0.5 * self.bracket(x - y, z[m])
            for two_p in range(2, m + 1, 2):
                coef = _BERNOULLI_TERM.get(two_p)
                if coef is None:
                    raise UnsupportedStepError(
                        f"Bernoulli coefficients beyond order {max(_BERNOULLI_TERM)} not tabulated"
                    )
                total = np.zeros_like(xy)
                for comp in _compositions(m, two_p):
                    v = xy
                    for k in reversed(comp):
                        v = self.bracket(z[k], v)
                    total = total + v
                acc = acc + coef * total
            z.append(acc / (m + 1))
        out = z[1]
        for m in range(2, self.step + 1):
            out = out + z[m]
        return out

    def inverse(self, x) -> np.ndarray:
        """Group inverse; in exponential coordinates this is negation."""
        return -np.asarray(x, dtype=float)

    def dilate(self, lam: float, x) -> np.ndarray:
        """Anisotropic dilation: coordinate i scales by lam**w_i."""
        if lam <= 0:
            raise ValueError(f"dilation factor must be positive, got {lam}")
        x = np.asarray(x, dtype=float)
        return x * (float(lam) ** self.weights)

    def conjugate_difference(self, p, q) -> np.ndarray:
        """Group difference p^{-1} * q (the displacement of q seen from p)."""
        return self.bch_product(self.inverse(p), q)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def bch_closed_order4(algebra: CarnotAlgebra, x, y) -> np.ndarray:
    """Hard-coded BCH series through bracket length 4.

    Internal oracle for the recursion: exact for algebras of step <= 4.
    """
    if algebra.step > 4:
        raise UnsupportedStepError("closed form tabulated through step 4 only")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    br = algebra.bracket
    c = br(x, y)
    out = x + y + 0.5 * c
    if algebra.step >= 3:
        out = out + (br(x, c) - br(y, c)) / 12.0
    if algebra.step >= 4:
        out = out - br(y, br(x, c)) / 24.0
    return out


@dataclass(frozen=True)
class HomogeneousNorm:
    """Homogeneous quasi-norm: exactly 1-homogeneous under the dilations.

    kind "max-power": max_i |x_i|^(1/w_i).
    kind "sum-power": (sum_i |x_i|^(W/w_i))^(1/W) with W = 2*max(w).
    """

    weights: tuple[int, ...]
    kind: str = "max-power"

    def __post_init__(self):
        if self.kind not in ("max-power", "sum-power"):
            raise ValueError(f"unknown homogeneous norm kind {self.kind!r}")

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if x.shape[-1] != w.shape[0]:
            raise ValueError("weights do not match point dimension")
        if self.kind == "max-power":
            vals = np.abs(x) ** (1.0 / w)
            out = vals.max(axis=-1)
        else:
            big = 2.0 * w.max()
            out = (np.abs(x) ** (big / w)).sum(axis=-1) ** (1.0 / big)
        return float(out) if out.ndim == 0 else out


def norm_for(algebra: CarnotAlgebra, kind: str = "max-power") -> HomogeneousNorm:
    return HomogeneousNorm(tuple(int(w) for w in algebra.weights), kind)


# -- built-in algebras and the definition-file loader ----------------------

def _heisenberg1() -> CarnotAlgebra:
    c = np.zeros((3, 3, 3))
    c[0, 1, 2] = 1.0
    c[1, 0, 2] = -1.0
    return CarnotAlgebra((2, 1), c, name="heisenberg1")


def _engel() -> CarnotAlgebra:
    c = np.zeros((4, 4, 4))
    c[0, 1, 2] = 1.0
    c[1, 0, 2] = -1.0
    c[0, 2, 3] = 1.0
    c[2, 0, 3] = -1.0
    return CarnotAlgebra((2, 1, 1), c, name="engel")


def _abelian(n: int) -> CarnotAlgebra:
    return CarnotAlgebra((n,), np.zeros((n, n, n)), name=f"abelian({n})")


def builtin_algebra(name: str) -> CarnotAlgebra:
    """Named algebras: "heisenberg1" (alias "h1"), "engel", "abelian(n)"."""
    key = name.strip().lower()
    if key in ("heisenberg1", "h1"):
        return _heisenberg1()
    if key == "engel":
        return _engel()
    m = re.fullmatch(r"abelian\((\d+)\)", key)
    if m:
        return _abelian(int(m.group(1)))
    raise KeyError(f"unknown algebra {name!r}")


def parse_algebra_text(text: str, name: str | None = None) -> CarnotAlgebra:
    """Parse an algebra definition file.

    Format: `n = <int>`, `layers = n1,n2,...`, then one `bracket i j k value`
    line per nonzero structure constant (1-based indices, value may be a
    rational like 1/2).  Antisymmetric counterparts are filled in
    automatically; declaring both orientations inconsistently is an error.
    """
    n = None
    layers = None
    quads: list[tuple[int, int, int, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            key = key.strip().lower()
            if key == "n":
                n = int(value)
            elif key == "layers":
                layers = tuple(int(v) for v in value.replace(",", " ").split())
            else:
                raise StructureError(f"line {lineno}: unknown key {key!r}")
            continue
        parts = line.split()
        if parts[0].lower() != "bracket" or len(parts) != 5:
            raise StructureError(f"line {lineno}: expected 'bracket i j k value'")
        i, j, k = (int(p) for p in parts[1:4])
        value = float(Fraction(parts[4]))
        quads.append((i, j, k, value))

    if layers is None:
        raise StructureError("missing 'layers =' declaration")
    if n is None:
        n = sum(layers)
    if n != sum(layers):
        raise StructureError(f"n={n} does not match sum(layers)={sum(layers)}")

    c = np.zeros((n, n, n))
    for i, j, k, value in quads:
        if not (1 <= i <= n and 1 <= j <= n and 1 <= k <= n):
            raise StructureError(f"bracket indices ({i},{j},{k}) out of range 1..{n}")
        for a, b, v in ((i - 1, j - 1, value), (j - 1, i - 1, -value)):
            if c[a, b, k - 1] != 0.0 and c[a, b, k - 1] != v:
                raise StructureError(
                    f"conflicting declarations for bracket ({a + 1},{b + 1}) -> {k}"
                )
            c[a, b, k - 1] = v
    return CarnotAlgebra(layers, c, name=name)


def load_algebra(path: str | Path) -> CarnotAlgebra:
    path = Path(path)
    return parse_algebra_text(path.read_text(encoding="utf-8"), name=path.stem)
