import numpy as np
import pytest

from carnotlab.errors import InsufficientPointsError, StructureError
from carnotlab.frames import builtin_frame
from carnotlab.maps import (
    WINDING_RADIAL,
    builtin,
    compose,
    parse_map_text,
    random_probe_points,
)
from carnotlab.morphism import morphism_jacobian, morphism_norms


def test_identity():
    f = builtin("identity")
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(10, 3))
    np.testing.assert_array_equal(f(pts), pts)


def test_winding_at_axis_and_horizontal_point():
    f = builtin("winding")
    # the radial factor keeps horizontal curves horizontal: r -> r/sqrt(2)
    np.testing.assert_allclose(
        f(np.array([1.0, 0.0, 0.0])), [WINDING_RADIAL, 0.0, 0.0], atol=1e-15
    )
    # angle doubling: phi = pi/2 maps to phi = pi
    np.testing.assert_allclose(
        f(np.array([0.0, 2.0, 0.5])), [-2.0 * WINDING_RADIAL, 0.0, 0.5], atol=1e-12
    )


def test_winding_fixes_t_axis():
    f = builtin("winding")
    axis = np.stack([np.zeros(5), np.zeros(5), np.linspace(-2, 2, 5)], axis=1)
    np.testing.assert_array_equal(f(axis), axis)


def test_winding_preserves_horizontality():
    # push a horizontal curve through and check t' = (x y' - y x')/2
    f = builtin("winding")
    s = np.linspace(0.0, 1.0, 20001)
    # a horizontal spiral-ish curve: x = 1 + s, y = s, t from the area integral
    x = 1.0 + s
    y = s
    t = np.concatenate([[0.0], np.cumsum(0.5 * (x[:-1] * np.diff(y) - y[:-1] * np.diff(x)))])
    curve = np.stack([x, y, t], axis=1)
    image = f(curve)
    xi, yi, ti = image[:, 0], image[:, 1], image[:, 2]
    lhs = np.diff(ti)
    rhs = 0.5 * (xi[:-1] * np.diff(yi) - yi[:-1] * np.diff(xi))
    np.testing.assert_allclose(lhs, rhs, atol=1e-7)


def test_winding_preimages_roundtrip():
    f = builtin("winding")
    rng = np.random.default_rng(1)
    for _ in range(1000):
        y = rng.normal(size=3)
        pres = f.preimages(y)
        assert pres.shape[0] == 2
        for p in pres:
            np.testing.assert_allclose(f(p), y, atol=1e-10)


def test_preimage_roundtrip_all_builtins():
    rng = np.random.default_rng(2)
    maps = [
        builtin("identity"),
        builtin("translation", g=[0.3, -0.5, 0.2]),
        builtin("dilation", lam=2.0),
        builtin("automorphism", block=[[2.0, 0.0], [0.0, 3.0]]),
    ]
    for f in maps:
        for _ in range(1000):
            y = rng.normal(size=3)
            pres = f.preimages(y)
            for p in pres:
                np.testing.assert_allclose(f(p), y, atol=1e-10)


def test_dilation_is_automorphism_of_group_law():
    f = builtin("dilation", lam=2.0)
    alg = builtin_frame("heisenberg1").algebra
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(2, 1000, 3))
    np.testing.assert_allclose(
        f(alg.bch_product(x, y)), alg.bch_product(f(x), f(y)), atol=1e-12
    )


def test_automorphism_diag_2_3_induces_6_on_t():
    f = builtin("automorphism", block=[[2.0, 0.0], [0.0, 3.0]])
    np.testing.assert_allclose(f(np.array([1.0, 1.0, 1.0])), [2.0, 3.0, 6.0])
    morph = f.known_differential(np.zeros(3))
    assert morphism_jacobian(morph) == pytest.approx(36.0)
    top, bottom = morphism_norms(morph)
    assert top == pytest.approx(3.0, rel=1e-3)
    assert bottom == pytest.approx(2.0, rel=1e-3)


def test_automorphism_rejects_singular_block():
    with pytest.raises(StructureError):
        builtin("automorphism", block=[[1.0, 0.0], [1.0, 0.0]])


def test_compose_identity_is_noop():
    f = builtin("winding")
    g = compose(builtin("identity"), f)
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(8, 3))
    np.testing.assert_array_equal(g(pts), f(pts))


def test_compose_dilations_multiplies():
    g = compose(builtin("dilation", lam=2.0), builtin("dilation", lam=3.0))
    h = builtin("dilation", lam=6.0)
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(8, 3))
    np.testing.assert_allclose(g(pts), h(pts), atol=1e-12)


def test_compose_winding_twice_has_four_preimages():
    g = compose(builtin("winding"), builtin("winding"))
    y = np.array([0.4, 0.1, -0.2])
    pres = g.preimages(y)
    assert pres.shape[0] == 4
    for p in pres:
        np.testing.assert_allclose(g(p), y, atol=1e-9)


def test_compose_frame_mismatch():
    f2 = builtin("identity", frame=builtin_frame("abelian(2)"))
    with pytest.raises(StructureError):
        compose(f2, builtin("winding"))


def test_random_probe_points_exclusion():
    f = builtin("winding")
    pts = random_probe_points(f, 200, exclusion_radius=0.1)
    assert pts.shape == (200, 3)
    assert np.hypot(pts[:, 0], pts[:, 1]).min() >= 0.1


def test_random_probe_points_zero_count():
    assert random_probe_points(builtin("identity"), 0).shape == (0, 3)


def test_random_probe_points_exhaustion():
    f = builtin("winding")
    with pytest.raises(InsufficientPointsError):
        random_probe_points(f, 10, exclusion_radius=10.0)


def test_parse_radial_map_matches_winding():
    text = """
    kind = radial
    domain = heisenberg1
    radial_scale = 0.7071067811865476
    angle_multiplier = 2
    """
    f = parse_map_text(text)
    g = builtin("winding")
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(50, 3))
    np.testing.assert_allclose(f(pts), g(pts), atol=1e-12)


def test_parse_polynomial_map():
    text = """
    kind = polynomial
    domain = heisenberg1
    component
    term coef=2 expo=1,0,0
    component
    term coef=3 expo=0,1,0
    component
    term coef=6 expo=0,0,1
    """
    f = parse_map_text(text)
    np.testing.assert_allclose(f(np.array([1.0, 1.0, 1.0])), [2.0, 3.0, 6.0])
