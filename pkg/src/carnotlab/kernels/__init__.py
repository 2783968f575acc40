"""Hot kernels: compiled core with a pure numpy fallback, selected at import.

Set ``CARNOTLAB_PURE_KERNELS=1`` to force the fallback (used by the kernel
benchmark and by the cross-backend agreement tests).
"""

from __future__ import annotations

import os

from . import pure

if os.environ.get("CARNOTLAB_PURE_KERNELS"):
    _impl = pure
else:
    try:
        from . import _compiled as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = pure

BACKEND: str = "pure" if _impl is pure else "compiled"

heisenberg_distance = _impl.heisenberg_distance
propagate = _impl.propagate
propagate_with_grad = _impl.propagate_with_grad

__all__ = [
    "BACKEND",
    "heisenberg_distance",
    "propagate",
    "propagate_with_grad",
    "pure",
]
