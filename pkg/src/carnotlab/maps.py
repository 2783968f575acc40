"""Catalog of example maps with exact auxiliary data.

Every evaluator is batched: it accepts (..., n) arrays of chart points.
Descriptors optionally carry an exact preimage enumerator (used as the
oracle for multiplicity and image-volume tests) and the first-layer block
of the known differential at a point.

The Heisenberg convention is fixed once for the whole catalog:
X = d/dx - (y/2) d/dt, Y = d/dy + (x/2) d/dt, group law
(x,y,t)*(x',y',t') = (x+x', y+y', t+t'+(xy'-yx')/2).

The winding map doubles the angle; preserving horizontality then forces
the radius to shrink by sqrt(2) (angle doubling doubles the swept area
t' = r^2 phi'/2, and (r/sqrt 2)^2 * 2 = r^2 restores it).  Its branch set
is the t-axis and it is 2-to-1 onto its image off the axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InsufficientPointsError, StructureError
from .fields import Poly
from .frames import HorizontalFrame, builtin_frame
from .morphism import GradedMorphism, extend_first_layer
from .util import as_point, halton

WINDING_RADIAL = 1.0 / np.sqrt(2.0)
WINDING_ANGLE = 2


@dataclass
class MapDescriptor:
    name: str
    domain: HorizontalFrame
    target: HorizontalFrame
    fn: Callable[[np.ndarray], np.ndarray]
    preimages: Callable[[np.ndarray], np.ndarray] | None = None
    preimages_batch: Callable[[np.ndarray], np.ndarray] | None = None
    known_differential: Callable[[np.ndarray], GradedMorphism] | None = None
    branch_distance: Callable[[np.ndarray], np.ndarray] | None = None
    metadata: dict = field(default_factory=dict)

    def __call__(self, points):
        return self.fn(np.asarray(points, dtype=float))

    def enumerate_preimages(self, targets: np.ndarray) -> np.ndarray | None:
        """(B, k, n) stack of preimages for a batch of targets, or None.

        Degenerate branches may repeat a preimage; consumers treat rows
        as candidate sets.
        """
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        if self.preimages_batch is not None:
            return self.preimages_batch(targets)
        if self.preimages is not None:
            per = [np.atleast_2d(self.preimages(y)) for y in targets]
            k = max(p.shape[0] for p in per)
            out = np.stack(
                [np.vstack([p] + [p[-1:]] * (k - p.shape[0])) for p in per]
            )
            return out
        return None

    def __repr__(self) -> str:
        return f"MapDescriptor({self.name!r}: {self.domain.name} -> {self.target.name})"


def _h1():
    return builtin_frame("heisenberg1")


def identity_map(frame: HorizontalFrame | None = None) -> MapDescriptor:
    frame = frame or _h1()
    eye = GradedMorphism(frame.algebra, frame.algebra, np.eye(frame.n)) if frame.algebra else None
    return MapDescriptor(
        name="identity",
        domain=frame,
        target=frame,
        fn=lambda pts: np.array(pts, dtype=float, copy=True),
        preimages=lambda y: np.asarray(y, dtype=float)[None, :],
        preimages_batch=lambda ys: np.asarray(ys, dtype=float)[:, None, :],
        known_differential=(lambda p, m=eye: m) if eye is not None else None,
        metadata={"branch_set": "empty"},
    )


def translation_map(g, frame: HorizontalFrame | None = None) -> MapDescriptor:
    frame = frame or _h1()
    alg = frame.algebra
    if alg is None:
        raise StructureError("translation requires a group model frame")
    g = as_point(g, frame.n)
    eye = GradedMorphism(alg, alg, np.eye(frame.n))
    return MapDescriptor(
        name=f"translation({g.tolist()})",
        domain=frame,
        target=frame,
        fn=lambda pts: alg.bch_product(g, np.asarray(pts, dtype=float)),
        preimages=lambda y: alg.bch_product(alg.inverse(g), as_point(y, frame.n))[None, :],
        preimages_batch=lambda ys: alg.bch_product(
            alg.inverse(g), np.asarray(ys, dtype=float)
        )[:, None, :],
        known_differential=lambda p: eye,
        metadata={"branch_set": "empty"},
    )


def dilation_map(lam: float, frame: HorizontalFrame | None = None) -> MapDescriptor:
    frame = frame or _h1()
    alg = frame.algebra
    if alg is None:
        raise StructureError("dilation requires a group model frame")
    if lam <= 0:
        raise ValueError("dilation factor must be positive")
    morph = GradedMorphism(
        alg, alg, np.diag(float(lam) ** np.asarray(alg.weights, dtype=float))
    )
    return MapDescriptor(
        name=f"dilation({lam:g})",
        domain=frame,
        target=frame,
        fn=lambda pts: alg.dilate(lam, pts),
        preimages=lambda y: alg.dilate(1.0 / lam, as_point(y, frame.n))[None, :],
        preimages_batch=lambda ys: alg.dilate(1.0 / lam, np.asarray(ys, dtype=float))[
            :, None, :
        ],
        known_differential=lambda p: morph,
        metadata={"branch_set": "empty", "lambda": float(lam)},
    )


def automorphism_map(first_block, frame: HorizontalFrame | None = None) -> MapDescriptor:
    """Graded automorphism from an invertible first-layer block; higher
    layers are induced by bracket compatibility."""
    frame = frame or _h1()
    alg = frame.algebra
    if alg is None:
        raise StructureError("automorphism requires a group model frame")
    block = np.asarray(first_block, dtype=float)
    morph = extend_first_layer(alg, alg, block)
    if morph.residual > 1e-8:
        raise StructureError(
            f"first-layer block does not induce a graded morphism (residual {morph.residual:.2e})"
        )
    if abs(np.linalg.det(morph.matrix)) < 1e-12:
        raise StructureError("automorphism block is singular")
    mat = morph.matrix
    inv = np.linalg.inv(mat)
    return MapDescriptor(
        name=f"automorphism({block.tolist()})",
        domain=frame,
        target=frame,
        fn=lambda pts: np.asarray(pts, dtype=float) @ mat.T,
        preimages=lambda y: (as_point(y, frame.n) @ inv.T)[None, :],
        preimages_batch=lambda ys: (np.asarray(ys, dtype=float) @ inv.T)[:, None, :],
        known_differential=lambda p: morph,
        metadata={"branch_set": "empty"},
    )


def winding_map() -> MapDescriptor:
    frame = _h1()
    alg = frame.algebra

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        x, y, t = pts[..., 0], pts[..., 1], pts[..., 2]
        rho = np.hypot(x, y)
        # z^2 / |z| scaled: doubles the angle, radius -> rho/sqrt(2)
        with np.errstate(invalid="ignore", divide="ignore"):
            cx = np.where(rho > 0.0, (x * x - y * y) / rho, 0.0)
            cy = np.where(rho > 0.0, (2.0 * x * y) / rho, 0.0)
        out = np.stack([WINDING_RADIAL * cx, WINDING_RADIAL * cy, t], axis=-1)
        return out

    def preimages(y):
        y = as_point(y, 3)
        rho = np.hypot(y[0], y[1])
        if rho == 0.0:
            return np.array([[0.0, 0.0, y[2]]])
        psi = np.arctan2(y[1], y[0])
        r = rho / WINDING_RADIAL
        out = []
        for phi in (psi / 2.0, psi / 2.0 + np.pi):
            out.append([r * np.cos(phi), r * np.sin(phi), y[2]])
        return np.asarray(out)

    def preimages_batch(ys):
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        rho = np.hypot(ys[:, 0], ys[:, 1])
        psi = np.arctan2(ys[:, 1], ys[:, 0])
        r = rho / WINDING_RADIAL
        out = np.empty((ys.shape[0], 2, 3))
        for k, shift in enumerate((0.0, np.pi)):
            phi = psi / 2.0 + shift
            out[:, k, 0] = r * np.cos(phi)
            out[:, k, 1] = r * np.sin(phi)
            out[:, k, 2] = ys[:, 2]
        # axis targets have the single axis preimage, repeated
        on_axis = rho == 0.0
        out[on_axis, :, 0] = 0.0
        out[on_axis, :, 1] = 0.0
        return out

    def known_differential(p):
        p = as_point(p, 3)
        rho = np.hypot(p[0], p[1])
        if rho == 0.0:
            raise ValueError("the winding map is not differentiable on the t-axis")
        phi = np.arctan2(p[1], p[0])

        def rot(a):
            return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])

        block = rot(2 * phi) @ np.diag([WINDING_RADIAL, 1.0 / WINDING_RADIAL]) @ rot(phi).T
        return extend_first_layer(alg, alg, block)

    return MapDescriptor(
        name="winding",
        domain=frame,
        target=frame,
        fn=fn,
        preimages=preimages,
        preimages_batch=preimages_batch,
        known_differential=known_differential,
        branch_distance=lambda pts: np.hypot(
            np.asarray(pts, dtype=float)[..., 0], np.asarray(pts, dtype=float)[..., 1]
        ),
        metadata={"branch_set": "t-axis", "degree": WINDING_ANGLE},
    )


def builtin(name: str, **kwargs) -> MapDescriptor:
    """Named maps: identity, translation(g), dilation(lam),
    automorphism(block), winding."""
    key = name.strip().lower()
    if key == "identity":
        return identity_map(kwargs.get("frame"))
    if key == "winding":
        return winding_map()
    if key.startswith("translation"):
        g = kwargs.get("g")
        if g is None:
            inner = key[len("translation"):].strip("()")
            g = [float(v) for v in inner.split(",")]
        return translation_map(g, kwargs.get("frame"))
    if key.startswith("dilation"):
        lam = kwargs.get("lam")
        if lam is None:
            lam = float(key[len("dilation"):].strip("()"))
        return dilation_map(lam, kwargs.get("frame"))
    if key.startswith("automorphism"):
        block = kwargs.get("block")
        if block is None:
            inner = key[len("automorphism"):].strip("()")
            vals = [float(v) for v in inner.replace(";", ",").split(",")]
            side = int(round(len(vals) ** 0.5))
            block = np.asarray(vals).reshape(side, side)
        return automorphism_map(block, kwargs.get("frame"))
    raise KeyError(f"unknown map {name!r}")


def compose(outer: MapDescriptor, inner: MapDescriptor) -> MapDescriptor:
    """outer after inner; preimage enumerators compose when both exist."""
    if outer.domain.n != inner.target.n or outer.domain.name != inner.target.name:
        raise StructureError(
            f"cannot compose {outer.name} after {inner.name}: "
            f"{inner.target.name} does not match {outer.domain.name}"
        )
    pre = None
    pre_batch = None
    if outer.preimages is not None and inner.preimages is not None:
        def pre(y, _po=outer.preimages, _pi=inner.preimages):
            mids = _po(y)
            outs = [np.atleast_2d(_pi(m)) for m in np.atleast_2d(mids)]
            stacked = np.concatenate(outs, axis=0)
            # de-duplicate coincident branches
            keep = []
            for row in stacked:
                if not any(np.allclose(row, k, atol=1e-12) for k in keep):
                    keep.append(row)
            return np.asarray(keep)

    if outer.preimages_batch is not None and inner.preimages_batch is not None:
        def pre_batch(ys, _po=outer.preimages_batch, _pi=inner.preimages_batch):
            mids = _po(np.atleast_2d(ys))  # (B, k1, n)
            B, k1, n = mids.shape
            deep = _pi(mids.reshape(B * k1, n))  # (B*k1, k2, n)
            k2 = deep.shape[1]
            return deep.reshape(B, k1 * k2, n)

    branch = None
    if inner.branch_distance is not None:
        branch = inner.branch_distance
    return MapDescriptor(
        name=f"{outer.name}.{inner.name}",
        domain=inner.domain,
        target=outer.target,
        fn=lambda pts: outer.fn(inner.fn(np.asarray(pts, dtype=float))),
        preimages=pre,
        preimages_batch=pre_batch,
        branch_distance=branch,
        metadata={"composed": [outer.name, inner.name]},
    )


def random_probe_points(
    descriptor: MapDescriptor,
    count: int,
    exclusion_radius: float = 0.0,
    box_halfwidth: float | None = None,
    skip: int = 0,
) -> np.ndarray:
    """Low-discrepancy points in the domain box at distance >= exclusion
    from the declared branch locus."""
    if count == 0:
        return np.zeros((0, descriptor.domain.n))
    n = descriptor.domain.n
    half = box_halfwidth if box_halfwidth is not None else descriptor.domain.box_halfwidth
    out = []
    start = 1 + skip
    attempts = 0
    while len(out) < count:
        batch = halton(max(count * 2, 64), n, start=start)
        start += batch.shape[0]
        pts = (2.0 * batch - 1.0) * half
        if descriptor.branch_distance is not None and exclusion_radius > 0.0:
            pts = pts[descriptor.branch_distance(pts) >= exclusion_radius]
        out.extend(pts)
        attempts += 1
        if attempts > 64:
            raise InsufficientPointsError(
                f"could not find {count} probe points outside the exclusion zone"
            )
    return np.asarray(out[:count])


# -- map definition files -----------------------------------------------------

def parse_map_text(text: str, name: str | None = None) -> MapDescriptor:
    """Parse a map definition file.

    Two kinds: `kind = polynomial` with one `component` block per target
    coordinate (frame-file term syntax), or `kind = radial` declaring a
    radius-angle transform (r, phi, t) -> (radial_scale * r,
    angle_multiplier * phi, t) on the Heisenberg chart.
    """
    lines = [
        ln.split("#", 1)[0].strip()
        for ln in text.splitlines()
        if ln.split("#", 1)[0].strip()
    ]
    header = {}
    body_start = 0
    for i, ln in enumerate(lines):
        if ln.lower().startswith("component"):
            body_start = i
            break
        if "=" in ln:
            k, _, v = ln.partition("=")
            header[k.strip().lower()] = v.strip()
    else:
        body_start = len(lines)

    kind = header.get("kind", "polynomial").lower()
    domain = builtin_frame(header.get("domain", "heisenberg1"))
    target = builtin_frame(header.get("target", header.get("domain", "heisenberg1")))

    if kind == "radial":
        scale = float(header["radial_scale"])
        mult = int(header["angle_multiplier"])

        def fn(pts):
            pts = np.asarray(pts, dtype=float)
            x, y, t = pts[..., 0], pts[..., 1], pts[..., 2]
            rho = np.hypot(x, y)
            phi = np.arctan2(y, x)
            return np.stack(
                [scale * rho * np.cos(mult * phi), scale * rho * np.sin(mult * phi), t],
                axis=-1,
            )

        return MapDescriptor(
            name=name or f"radial({scale:g},{mult})",
            domain=domain,
            target=target,
            fn=fn,
            branch_distance=lambda pts: np.hypot(
                np.asarray(pts, dtype=float)[..., 0], np.asarray(pts, dtype=float)[..., 1]
            ),
            metadata={"radial_scale": scale, "angle_multiplier": mult},
        )

    if kind != "polynomial":
        raise StructureError(f"unknown map kind {kind!r}")

    n = domain.n
    comps: list[Poly] = []
    current: dict | None = None
    for ln in lines[body_start:]:
        if ln.lower().startswith("component"):
            if current is not None:
                comps.append(Poly(n, current))
            current = {}
        elif ln.lower().startswith("term"):
            if current is None:
                raise StructureError("term before any component block")
            entries = dict(part.split("=", 1) for part in ln.split()[1:] if "=" in part)
            expo = tuple(int(v) for v in entries["expo"].split(","))
            current[expo] = current.get(expo, 0.0) + float(entries["coef"])
    if current is not None:
        comps.append(Poly(n, current))
    if len(comps) != target.n:
        raise StructureError(
            f"map file declares {len(comps)} components for a {target.n}-dimensional target"
        )

    def fn(pts, _comps=tuple(comps)):
        pts = np.asarray(pts, dtype=float)
        return np.stack([c.evaluate(pts) for c in _comps], axis=-1)

    return MapDescriptor(name=name or "polynomial-map", domain=domain, target=target, fn=fn)


def load_map(path: str | Path) -> MapDescriptor:
    path = Path(path)
    return parse_map_text(path.read_text(encoding="utf-8"), name=path.stem)
