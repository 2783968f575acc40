import numpy as np
import pytest

from carnotlab import kernels
from carnotlab.frames import builtin_frame
from carnotlab.metric import (
    DegenerateSamplingError,
    DistanceOptions,
    ball_box_report,
    ball_points,
    ball_volume,
    batch_upper_distance,
    bounding_box_halfwidths,
    cc_distance,
    cc_sphere_sample,
    exact_distance_function,
)

H1 = builtin_frame("heisenberg1")
FAST = DistanceOptions(segments=32, restarts=4, descent_steps=80)


def h1_exact(p, q):
    return float(exact_distance_function(H1)(p, np.atleast_2d(q))[0])


class TestDistanceSolver:
    def test_horizontal_segment(self):
        res = cc_distance(H1, np.zeros(3), np.array([1.0, 0.0, 0.0]), FAST)
        assert res.converged
        assert res.endpoint_error < 1e-6
        assert res.value == pytest.approx(1.0, abs=1e-3)

    def test_same_point(self):
        res = cc_distance(H1, np.ones(3), np.ones(3))
        assert res.value == 0.0
        assert res.converged

    def test_vertical_law(self):
        # d(0, (0,0,tau)) = 2 sqrt(pi tau); ratios across tau check homogeneity
        values = {}
        for tau in (0.25, 1.0, 4.0):
            res = cc_distance(H1, np.zeros(3), np.array([0.0, 0.0, tau]), FAST)
            assert res.converged, res.diagnostics
            values[tau] = res.value
            assert res.value == pytest.approx(2.0 * np.sqrt(np.pi * tau), rel=0.01)
        assert values[1.0] / values[0.25] == pytest.approx(2.0, rel=0.02)
        assert values[4.0] / values[1.0] == pytest.approx(2.0, rel=0.02)

    def test_against_exact_oracle_random_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            q = rng.normal(size=3) * np.array([1.0, 1.0, 0.5])
            res = cc_distance(H1, np.zeros(3), q, FAST)
            assert res.converged
            assert res.value == pytest.approx(h1_exact(np.zeros(3), q), rel=0.02)

    def test_upper_bound_and_horizontal_lower_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(3):
            q = rng.normal(size=3)
            res = cc_distance(H1, np.zeros(3), q, FAST)
            exact = h1_exact(np.zeros(3), q)
            assert res.value >= exact * (1.0 - 1e-6)  # upper-bound semantics
            assert res.value >= np.hypot(q[0], q[1]) * (1.0 - 1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        q = rng.normal(size=3)
        a = cc_distance(H1, np.zeros(3), q, FAST).value
        b = cc_distance(H1, q, np.zeros(3), FAST).value
        assert a == pytest.approx(b, rel=0.02)

    def test_left_invariance(self):
        rng = np.random.default_rng(3)
        alg = H1.algebra
        q = rng.normal(size=3) * 0.8
        g = rng.normal(size=3) * 0.8
        a = cc_distance(H1, np.zeros(3), q, FAST).value
        b = cc_distance(H1, g, alg.bch_product(g, q), FAST).value
        assert a == pytest.approx(b, rel=0.02)

    def test_dilation_homogeneity(self):
        rng = np.random.default_rng(4)
        q = rng.normal(size=3) * 0.7
        a = cc_distance(H1, np.zeros(3), q, FAST).value
        b = cc_distance(H1, np.zeros(3), H1.algebra.dilate(2.0, q), FAST).value
        assert b / a == pytest.approx(2.0, rel=0.02)

    def test_triangle_inequality_with_slack(self):
        rng = np.random.default_rng(5)
        for _ in range(3):
            p, mid, q = rng.normal(size=(3, 3)) * 0.7
            dpq = cc_distance(H1, p, q, FAST).value
            dpm = cc_distance(H1, p, mid, FAST).value
            dmq = cc_distance(H1, mid, q, FAST).value
            assert dpq <= (dpm + dmq) * 1.03

    def test_abelian_distance(self):
        frame = builtin_frame("abelian(2)")
        res = cc_distance(frame, np.zeros(2), np.array([3.0, 4.0]), FAST)
        assert res.value == pytest.approx(5.0, rel=1e-3)


class TestSphereSample:
    def test_h1_unit_sphere_axes(self):
        sample = cc_sphere_sample(H1, np.zeros(3), 1.0, 16)
        assert sample.achieved == 16
        pts = sample.points
        for axis_pt in ([1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]):
            dists = np.linalg.norm(pts - np.array(axis_pt, dtype=float), axis=1)
            assert dists.min() < 0.45  # 16 golden-angle rays cover the circle

    def test_radial_accuracy(self):
        sample = cc_sphere_sample(H1, np.array([0.3, -0.2, 0.4]), 0.5, 32)
        d = exact_distance_function(H1)(np.array([0.3, -0.2, 0.4]), sample.points)
        np.testing.assert_allclose(d, 0.5, rtol=0.02)
        assert sample.max_radial_error <= 0.02

    def test_homogeneity_of_sphere_points(self):
        r = 0.7
        sample = cc_sphere_sample(H1, np.zeros(3), r, 24)
        rescaled = H1.algebra.dilate(1.0 / r, sample.points)
        d = kernels.heisenberg_distance(rescaled)
        np.testing.assert_allclose(d, 1.0, rtol=0.02)

    def test_abelian_circle(self):
        frame = builtin_frame("abelian(2)")
        sample = cc_sphere_sample(frame, np.zeros(2), 1.0, 12)
        np.testing.assert_allclose(np.linalg.norm(sample.points, axis=1), 1.0, rtol=1e-6)

    def test_rejects_bad_radius(self):
        with pytest.raises(ValueError):
            cc_sphere_sample(H1, np.zeros(3), 0.0, 4)


class TestBallPoints:
    def test_points_inside_ball(self):
        pts = ball_points(H1, np.zeros(3), 0.8, 64, seed=1)
        d = kernels.heisenberg_distance(pts)
        assert d.max() <= 0.8 * 1.001
        assert pts.shape[0] >= 64

    def test_translated_center(self):
        x = np.array([0.5, 0.5, -0.3])
        pts = ball_points(H1, x, 0.5, 48, seed=2)
        d = exact_distance_function(H1)(x, pts)
        assert d.max() <= 0.5 * 1.001


class TestBallVolume:
    def test_abelian_disc(self):
        frame = builtin_frame("abelian(2)")
        est = ball_volume(frame, np.zeros(2), 1.0, 200_000, seed=3)
        assert est.volume == pytest.approx(np.pi, abs=3.5 * est.std_error)

    def test_h1_doubling_ratio(self):
        v1 = ball_volume(H1, np.zeros(3), 0.5, 300_000, seed=4)
        v2 = ball_volume(H1, np.zeros(3), 1.0, 300_000, seed=5)
        assert v2.volume / v1.volume == pytest.approx(16.0, rel=0.1)

    def test_monotone_ladder(self):
        vols = [
            ball_volume(H1, np.zeros(3), r, 50_000, seed=6).volume
            for r in (1.0, 0.5, 0.25)
        ]
        assert vols[0] > vols[1] > vols[2]

    def test_workers_equivalence(self):
        a = ball_volume(H1, np.zeros(3), 1.0, 150_000, seed=7, workers=1)
        b = ball_volume(H1, np.zeros(3), 1.0, 150_000, seed=7, workers=3)
        assert a.volume == b.volume
        assert a.hits == b.hits

    def test_zero_hits_raises(self):
        # an absurd radius in a huge box cannot be hit
        frame = builtin_frame("abelian(2)")
        with pytest.raises(DegenerateSamplingError):
            # shrink hit probability to zero by sampling a hand-made box
            from carnotlab import metric

            orig = metric.bounding_box_halfwidths
            metric.bounding_box_halfwidths = lambda f, r: np.array([1e9, 1e9])
            try:
                ball_volume(frame, np.zeros(2), 1e-6, 1000, seed=8)
            finally:
                metric.bounding_box_halfwidths = orig

    def test_h1_box_contains_ball(self):
        # no ball point escapes the analytic bounding box, and the box is
        # tight in t: half-circle geodesics reach within 1% of the bound
        half = bounding_box_halfwidths(H1, 1.0)
        pts = ball_points(H1, np.zeros(3), 1.0, 4096, seed=13)
        assert np.all(np.abs(pts) <= half[None, :] * 1.0001)
        theta = np.pi
        rho = 2.0 * np.sin(theta / 2.0) / theta
        apex = np.array([rho, 0.0, (theta - np.sin(theta)) / (2.0 * theta**2)])
        assert kernels.heisenberg_distance(apex) == pytest.approx(1.0, rel=1e-9)
        assert apex[2] >= 0.99 * half[2]

    def test_h1_ball_volume_against_quadrature(self):
        # independent oracle: 2D polar quadrature of the membership set
        rho = np.linspace(1e-6, 1.0, 1200)
        t = np.linspace(0.0, 1.0 / (2.0 * np.pi), 1200)
        R, T = np.meshgrid(rho, t, indexing="ij")
        pts = np.stack([R.ravel(), np.zeros(R.size), T.ravel()], axis=1)
        inside = (kernels.heisenberg_distance(pts) <= 1.0).reshape(R.shape)
        vol = 2.0 * (2.0 * np.pi) * np.trapezoid(
            np.trapezoid(inside.astype(float), t, axis=1) * rho, rho
        )
        est = ball_volume(H1, np.zeros(3), 1.0, 400_000, seed=21)
        assert est.volume == pytest.approx(vol, rel=0.01)


class TestBallBox:
    def test_h1_slope(self):
        report = ball_box_report(H1, np.zeros(3), r0=1.0, ladder=4, n_samples=80_000, seed=9)
        assert report.Q_expected == 4
        assert report.fitted_slope == pytest.approx(4.0, abs=0.2)

    def test_abelian_slope(self):
        frame = builtin_frame("abelian(3)")
        report = ball_box_report(frame, np.zeros(3), r0=1.0, ladder=4, n_samples=60_000, seed=10)
        assert report.Q_expected == 3
        assert report.fitted_slope == pytest.approx(3.0, abs=0.15)

    @pytest.mark.slow
    def test_engel_slope(self):
        frame = builtin_frame("engel")
        report = ball_box_report(frame, np.zeros(4), r0=1.0, ladder=4, n_samples=20_000, seed=11)
        assert report.Q_expected == 7
        assert report.fitted_slope == pytest.approx(7.0, abs=0.5)


def test_batch_upper_distance_bounds_exact():
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(40, 3)) * np.array([0.8, 0.8, 0.3])
    ub = batch_upper_distance(H1, np.zeros(3), pts)
    exact = kernels.heisenberg_distance(pts)
    assert np.all(ub >= exact * (1 - 1e-9))
    assert np.median(ub / exact) < 1.25
