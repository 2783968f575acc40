"""Shared plumbing: seeded random streams, low-discrepancy sequences,
deterministic serialization."""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)

# Golden ratio fraction used for 1-d low-discrepancy angle sequences.
_GOLDEN = 0.6180339887498949


def rng_for(seed: int, *key) -> np.random.Generator:
    """Independent generator for a (seed, task-key) pair.

    The key parts are hashed with crc32 so the stream depends only on the
    declared task identity, never on call order.
    """
    parts = [int(seed) & 0xFFFFFFFF]
    for part in key:
        if isinstance(part, (int, np.integer)):
            parts.append(int(part) & 0xFFFFFFFF)
        else:
            parts.append(zlib.crc32(str(part).encode("utf-8")))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(parts)))


def halton(count: int, dim: int, start: int = 1) -> np.ndarray:
    """First `count` Halton points in [0,1)^dim (prime bases, index from `start`)."""
    if dim > len(_PRIMES):
        raise ValueError(f"halton supports dim <= {len(_PRIMES)}")
    out = np.empty((count, dim))
    idx = np.arange(start, start + count, dtype=np.int64)
    for d in range(dim):
        base = _PRIMES[d]
        value = np.zeros(count)
        denom = 1.0
        i = idx.copy()
        while np.any(i > 0):
            denom *= base
            value += (i % base) / denom
            i //= base
        out[:, d] = value
    return out


def circle_directions(count: int) -> np.ndarray:
    """`count` golden-angle directions on the unit circle, shape (count, 2)."""
    theta = 2.0 * np.pi * np.mod(_GOLDEN * np.arange(count), 1.0)
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


def sphere_directions(count: int, dim: int) -> np.ndarray:
    """Low-discrepancy directions on the unit sphere of R^dim."""
    if dim == 1:
        signs = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
        return signs[:, None]
    if dim == 2:
        return circle_directions(count)
    # Halton points pushed through the inverse Gaussian CDF, then normalized.
    from scipy.special import ndtri

    u = halton(count, dim, start=7)
    g = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    norms = np.linalg.norm(g, axis=1)
    norms[norms == 0.0] = 1.0
    return g / norms[:, None]


def json_dumps(payload) -> str:
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path: str | Path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json_dumps(payload), encoding="utf-8")
    return path


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def as_point(value, n: int | None = None) -> np.ndarray:
    """Coerce a point-like value to a float64 vector, optionally checking length."""
    p = np.asarray(value, dtype=float).reshape(-1)
    if n is not None and p.shape[0] != n:
        raise ValueError(f"expected a point of dimension {n}, got {p.shape[0]}")
    return p
