"""Layer-respecting linear maps between Carnot algebras.

A graded morphism is determined by its first-layer block on a generated
algebra: higher layers are induced through bracket compatibility, which
is how fitted differentials are extended here.  Block structure makes
commuting with dilations exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import CarnotAlgebra
from .util import sphere_directions


@dataclass
class GradedMorphism:
    source: CarnotAlgebra
    target: CarnotAlgebra
    matrix: np.ndarray          # (target.n, source.n), block by layer
    residual: float = 0.0       # fit / bracket-compatibility quality
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape != (self.target.n, self.source.n):
            raise ValueError("morphism matrix shape does not match algebras")

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return v @ self.matrix.T

    def layer_block(self, k: int) -> np.ndarray:
        return self.matrix[self.target.layer_slice(k), self.source.layer_slice(k)]

    def layer_leakage(self) -> float:
        """Largest matrix entry outside the layer-diagonal blocks."""
        mask = np.ones_like(self.matrix, dtype=bool)
        for k in range(1, min(self.source.step, self.target.step) + 1):
            mask[self.target.layer_slice(k), self.source.layer_slice(k)] = False
        return float(np.abs(self.matrix[mask]).max()) if mask.any() else 0.0

    def bracket_residual(self) -> float:
        """max over basis pairs of |A[e_i,e_j] - [A e_i, A e_j]|."""
        worst = 0.0
        n = self.source.n
        for i in range(n):
            for j in range(i + 1, n):
                lhs = self.apply(self.source.brackets[i, j])
                rhs = self.target.bracket(self.matrix[:, i], self.matrix[:, j])
                worst = max(worst, float(np.abs(lhs - rhs).max()))
        return worst

    def commutes_with_dilations(self, lam: float) -> float:
        lhs = self.matrix * (lam ** np.asarray(self.source.weights, dtype=float))[None, :]
        rhs = (lam ** np.asarray(self.target.weights, dtype=float))[:, None] * self.matrix
        return float(np.abs(lhs - rhs).max())

    def compose(self, inner: "GradedMorphism") -> "GradedMorphism":
        """self after inner (self . inner)."""
        if inner.target is not self.source and inner.target.layers != self.source.layers:
            raise ValueError("morphism composition layer mismatch")
        return GradedMorphism(
            source=inner.source,
            target=self.target,
            matrix=self.matrix @ inner.matrix,
            residual=self.residual + inner.residual,
        )

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "residual": float(self.residual),
            "source_layers": list(self.source.layers),
            "target_layers": list(self.target.layers),
            "meta": self.meta,
        }


def _bracket_pair_matrix(algebra: CarnotAlgebra, layer: int) -> tuple[np.ndarray, list]:
    """Matrix of (v1, w_layer) -> [v1, w_layer] into layer+1, with pair index."""
    first = range(algebra.layer_slice(1).start, algebra.layer_slice(1).stop)
    mid = range(algebra.layer_slice(layer).start, algebra.layer_slice(layer).stop)
    out_slice = algebra.layer_slice(layer + 1)
    pairs = [(i, j) for i in first for j in mid]
    mat = np.stack([algebra.brackets[i, j, out_slice] for i, j in pairs], axis=1)
    return mat, pairs


def extend_first_layer(
    source: CarnotAlgebra,
    target: CarnotAlgebra,
    first_block: np.ndarray,
    tol: float = 1e-8,
) -> GradedMorphism:
    """Extend a first-layer block to a full graded morphism by bracket
    compatibility; the returned residual measures how compatible the
    block actually is (zero for genuine morphisms)."""
    first_block = np.asarray(first_block, dtype=float)
    if first_block.shape != (target.rank, source.rank):
        raise ValueError("first-layer block shape mismatch")
    if source.step != target.step and source.step > target.step:
        # higher source layers must map to zero; handled by the same solve
        pass
    n_s, n_t = source.n, target.n
    matrix = np.zeros((n_t, n_s))
    matrix[target.layer_slice(1), source.layer_slice(1)] = first_block
    residual = 0.0
    blocks = {1: first_block}
    for layer in range(1, source.step):
        b_src, pairs = _bracket_pair_matrix(source, layer)
        if layer + 1 > target.step:
            # brackets must die; residual accounts for any that cannot
            blocks[layer + 1] = np.zeros((0, source.layers[layer]))
            continue
        rhs_cols = []
        a1 = blocks[1]
        a_mid = blocks[layer]
        src1 = source.layer_slice(1)
        srcm = source.layer_slice(layer)
        tgt1 = target.layer_slice(1)
        tgtm = target.layer_slice(layer)
        for i, j in pairs:
            v1 = np.zeros(n_t)
            v1[tgt1] = a1[:, i - src1.start]
            vm = np.zeros(n_t)
            vm[tgtm] = a_mid[:, j - srcm.start]
            rhs_cols.append(target.bracket(v1, vm)[target.layer_slice(layer + 1)])
        rhs = np.stack(rhs_cols, axis=1)
        block, res, *_ = np.linalg.lstsq(b_src.T, rhs.T, rcond=None)
        block = block.T
        residual = max(residual, float(np.abs(block @ b_src - rhs).max()))
        blocks[layer + 1] = block
        matrix[target.layer_slice(layer + 1), source.layer_slice(layer + 1)] = block
    return GradedMorphism(source, target, matrix, residual=residual)


def morphism_norms(
    morphism: GradedMorphism, samples: int = 4096
) -> tuple[float, float]:
    """(max, min) of |A v| over a dense sample of the unit sphere of the
    source first layer (Euclidean norms in the orthonormal frames)."""
    dirs = sphere_directions(samples, morphism.source.rank)
    block = morphism.layer_block(1)
    values = np.linalg.norm(dirs @ block.T, axis=1)
    return float(values.max()), float(values.min())


def morphism_jacobian(morphism: GradedMorphism) -> float:
    """Volume scaling of the unit ball: product over layers of |det block|
    (dilation-commuting block maps scale Lebesgue measure by exactly this)."""
    out = 1.0
    for k in range(1, morphism.source.step + 1):
        block = morphism.layer_block(k)
        if block.shape[0] != block.shape[1]:
            return 0.0
        out *= abs(float(np.linalg.det(block)))
    return out
