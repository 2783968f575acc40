import numpy as np
import pytest

from carnotlab import kernels
from carnotlab.algebra import builtin_algebra
from carnotlab.frames import builtin_frame
from carnotlab.kernels import pure


def _h1_setup(rng, batch=16, segs=8):
    frame = builtin_frame("heisenberg1")
    expo, coef, fidx, slot = frame.term_table
    x0 = rng.normal(size=(batch, 3)) * 0.5
    controls = rng.normal(size=(batch, segs, 2))
    return frame, (expo, coef, fidx, slot), x0, controls


def test_heisenberg_distance_basic_values():
    d = kernels.heisenberg_distance
    assert d(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)
    assert d(np.array([0.0, -2.0, 0.0])) == pytest.approx(2.0)
    # a purely vertical displacement costs a full circular loop
    for t in (0.25, 1.0, 4.0):
        assert d(np.array([0.0, 0.0, t])) == pytest.approx(2.0 * np.sqrt(np.pi * t), rel=1e-10)


def test_heisenberg_distance_homogeneity_and_symmetry():
    alg = builtin_algebra("heisenberg1")
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(500, 3))
    d = kernels.heisenberg_distance(pts)
    for lam in (0.5, 2.0, 7.0):
        np.testing.assert_allclose(
            kernels.heisenberg_distance(alg.dilate(lam, pts)), lam * d, rtol=1e-9
        )
    np.testing.assert_allclose(kernels.heisenberg_distance(-pts), d, rtol=1e-12)


def test_heisenberg_distance_triangle_inequality():
    alg = builtin_algebra("heisenberg1")
    rng = np.random.default_rng(1)
    p, q = rng.normal(size=(2, 300, 3))
    dpq = kernels.heisenberg_distance(alg.conjugate_difference(p, q))
    dp = kernels.heisenberg_distance(p)
    dq = kernels.heisenberg_distance(q)
    assert np.all(dq <= dp + dpq + 1e-9)


def test_heisenberg_distance_against_theta_scan():
    # independent oracle: minimize arc length over a dense turning-angle grid
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(50, 3))
    theta = np.linspace(1e-6, 2 * np.pi - 1e-9, 400000)
    ratio = (theta - np.sin(theta)) / (8.0 * np.sin(theta / 2.0) ** 2)
    for p in pts:
        rho = np.hypot(p[0], p[1])
        mu = abs(p[2]) / rho**2
        idx = np.searchsorted(ratio, mu)
        if idx >= theta.size:
            continue
        th = theta[idx]
        brute = th * rho / (2.0 * np.sin(th / 2.0))
        assert kernels.heisenberg_distance(p) == pytest.approx(brute, rel=1e-4)


def test_backends_agree_distance():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(1000, 3)) * np.array([1.0, 1.0, 5.0])
    np.testing.assert_allclose(
        pure.heisenberg_distance(pts), kernels.heisenberg_distance(pts), rtol=1e-12
    )


def test_propagate_matches_bch_on_h1():
    # a constant-control RK4 segment on a nilpotent model is exact:
    # the endpoint is the group product with the first-layer increment
    rng = np.random.default_rng(4)
    frame, table, x0, controls = _h1_setup(rng, batch=8, segs=5)
    alg = frame.algebra
    dt = 1.0 / controls.shape[1]
    end = kernels.propagate(*table, x0, controls, dt)
    expected = x0.copy()
    for seg in range(controls.shape[1]):
        inc = np.zeros((8, 3))
        inc[:, :2] = controls[:, seg, :] * dt
        expected = alg.bch_product(expected, inc)
    np.testing.assert_allclose(end, expected, atol=1e-13)


def test_propagate_matches_bch_on_engel():
    rng = np.random.default_rng(5)
    frame = builtin_frame("engel")
    expo, coef, fidx, slot = frame.term_table
    alg = frame.algebra
    x0 = rng.normal(size=(6, 4)) * 0.4
    controls = rng.normal(size=(6, 4, 2))
    dt = 0.25
    end = kernels.propagate(expo, coef, fidx, slot, x0, controls, dt)
    expected = x0.copy()
    for seg in range(4):
        inc = np.zeros((6, 4))
        inc[:, :2] = controls[:, seg, :] * dt
        expected = alg.bch_product(expected, inc)
    np.testing.assert_allclose(end, expected, atol=1e-13)


def test_backends_agree_propagate():
    rng = np.random.default_rng(6)
    frame, table, x0, controls = _h1_setup(rng)
    a = pure.propagate(*table, x0, controls, 0.125, 2)
    b = kernels.propagate(*table, x0, controls, 0.125, 2)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("impl", [pure, kernels])
def test_propagate_grad_matches_finite_differences(impl):
    rng = np.random.default_rng(7)
    frame, table, x0, controls = _h1_setup(rng, batch=3, segs=4)
    dt = 0.25
    bar = rng.normal(size=(3, 3))
    end, grad = impl.propagate_with_grad(*table, x0, controls, dt, bar, 2)
    np.testing.assert_allclose(end, impl.propagate(*table, x0, controls, dt, 2), atol=1e-14)

    h = 1e-6
    for seg in (0, 3):
        for j in (0, 1):
            up = controls.copy()
            up[:, seg, j] += h
            dn = controls.copy()
            dn[:, seg, j] -= h
            fd = (
                (impl.propagate(*table, x0, up, dt, 2) - impl.propagate(*table, x0, dn, dt, 2))
                / (2 * h)
                * bar
            ).sum(axis=1)
            np.testing.assert_allclose(grad[:, seg, j], fd, rtol=1e-6, atol=1e-8)


def test_backends_agree_grad():
    rng = np.random.default_rng(8)
    frame, table, x0, controls = _h1_setup(rng, batch=5, segs=6)
    bar = rng.normal(size=(5, 3))
    ea, ga = pure.propagate_with_grad(*table, x0, controls, 0.2, bar, 1)
    eb, gb = kernels.propagate_with_grad(*table, x0, controls, 0.2, bar, 1)
    np.testing.assert_allclose(ea, eb, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(ga, gb, rtol=1e-10, atol=1e-12)
