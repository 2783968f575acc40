"""Numerical laboratory for Carnot groups, sub-Riemannian metrics, and
quasiregular map diagnostics.

The package is organised around a handful of concrete objects:

* :mod:`carnotlab.algebra` -- stratified nilpotent Lie algebras and the
  group arithmetic they generate (products, inverses, dilations,
  homogeneous norms).
* :mod:`carnotlab.fields` / :mod:`carnotlab.frames` -- polynomial vector
  fields, horizontal frames, Lie brackets, growth vectors, flows and
  frame blow-ups.
* :mod:`carnotlab.tangent` -- privileged coordinates and the nilpotent
  approximation (tangent group) of a frame at a point.
* :mod:`carnotlab.metric` -- Carnot-Caratheodory distances, sphere
  sampling, Monte Carlo ball volumes and volume-scaling reports.
* :mod:`carnotlab.modulus` -- p-modulus of finite curve families on grid
  densities and the outer-distortion inequality check.
* :mod:`carnotlab.maps` -- built-in example maps with exact auxiliary
  data (preimages, known differentials).
* :mod:`carnotlab.analysis` -- dilatation profiles, Lipschitz constants,
  blow-up differentials, Jacobians, multiplicity and branch-set scans.
* :mod:`carnotlab.cli` -- batch front-end with reproducible seeded runs.
"""

__version__ = "0.1.0"

from .algebra import CarnotAlgebra, HomogeneousNorm, builtin_algebra
from .frames import HorizontalFrame, builtin_frame

__all__ = [
    "CarnotAlgebra",
    "HomogeneousNorm",
    "HorizontalFrame",
    "builtin_algebra",
    "builtin_frame",
    "__version__",
]
