import numpy as np
import pytest

from carnotlab.fields import Poly, PolyVectorField, lie_bracket, term_table


def heis_fields():
    # X = d/dx - (y/2) d/dt, Y = d/dy + (x/2) d/dt
    X = PolyVectorField.from_terms(3, [(0, 1.0, (0, 0, 0)), (2, -0.5, (0, 1, 0))])
    Y = PolyVectorField.from_terms(3, [(1, 1.0, (0, 0, 0)), (2, 0.5, (1, 0, 0))])
    return X, Y


def random_field(rng, n, degree=2, terms=4):
    entries = []
    for _ in range(terms):
        slot = int(rng.integers(n))
        expo = tuple(int(e) for e in rng.integers(0, degree + 1, size=n))
        entries.append((slot, float(rng.normal()), expo))
    return PolyVectorField.from_terms(n, entries)


def test_poly_evaluate_and_arithmetic():
    p = Poly(2, {(1, 0): 2.0, (0, 2): -1.0, (0, 0): 3.0})  # 2x - y^2 + 3
    assert p.evaluate(np.array([1.0, 2.0])) == pytest.approx(2 - 4 + 3)
    q = Poly.var(2, 0) * Poly.var(2, 1)  # xy
    assert (p * q).evaluate(np.array([2.0, 3.0])) == pytest.approx(
        p.evaluate(np.array([2.0, 3.0])) * 6.0
    )
    assert (p - p).terms == {}
    assert p.diff(0).terms == {(0, 0): 2.0}
    assert p.diff(1).terms == {(0, 1): -2.0}


def test_poly_compose():
    p = Poly(2, {(2, 0): 1.0})  # x^2
    sub = [Poly(2, {(0, 1): 1.0, (0, 0): 1.0}), Poly.var(2, 1)]  # x -> y + 1
    composed = p.compose(sub)
    pts = np.array([[0.3, -0.7], [1.1, 0.4]])
    np.testing.assert_allclose(composed.evaluate(pts), (pts[:, 1] + 1.0) ** 2)


def test_heisenberg_bracket():
    X, Y = heis_fields()
    b = lie_bracket(X, Y)
    expected = PolyVectorField.from_terms(3, [(2, 1.0, (0, 0, 0))])  # d/dt
    assert b.allclose(expected, tol=0)


def test_bracket_self_is_zero():
    rng = np.random.default_rng(0)
    for _ in range(10):
        X = random_field(rng, 3)
        assert lie_bracket(X, X).allclose(PolyVectorField.from_terms(3, []), tol=0)


def test_engel_type_brackets():
    # X1 = d/dx, X2 = d/dy + x d/dz + x^2 d/dw
    X1 = PolyVectorField.from_terms(4, [(0, 1.0, (0, 0, 0, 0))])
    X2 = PolyVectorField.from_terms(
        4, [(1, 1.0, (0, 0, 0, 0)), (2, 1.0, (1, 0, 0, 0)), (3, 1.0, (2, 0, 0, 0))]
    )
    b12 = lie_bracket(X1, X2)
    expected12 = PolyVectorField.from_terms(
        4, [(2, 1.0, (0, 0, 0, 0)), (3, 2.0, (1, 0, 0, 0))]
    )
    assert b12.allclose(expected12, tol=0)
    b112 = lie_bracket(X1, b12)
    expected112 = PolyVectorField.from_terms(4, [(3, 2.0, (0, 0, 0, 0))])
    assert b112.allclose(expected112, tol=0)


def test_bracket_bilinear_antisymmetric():
    rng = np.random.default_rng(1)
    for _ in range(10):
        X, Y, Z = (random_field(rng, 3) for _ in range(3))
        a, b = rng.normal(size=2)
        lin = lie_bracket(X.scale(a) + Y.scale(b), Z)
        combo = lie_bracket(X, Z).scale(a) + lie_bracket(Y, Z).scale(b)
        assert lin.allclose(combo, tol=1e-10)
        assert lie_bracket(X, Y).allclose(lie_bracket(Y, X).scale(-1.0), tol=0)


def test_bracket_degree_bound():
    rng = np.random.default_rng(2)
    X = random_field(rng, 3, degree=3)
    Y = random_field(rng, 3, degree=2)
    assert lie_bracket(X, Y).degree() <= X.degree() + Y.degree()


def test_term_table_matches_direct_evaluation():
    X, Y = heis_fields()
    expo, coef, fidx, slot = term_table([X, Y])
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(20, 3))
    u = rng.normal(size=(20, 2))
    direct = u[:, :1] * X.evaluate(pts) + u[:, 1:] * Y.evaluate(pts)
    from carnotlab.kernels import pure

    via_table = pure._field_velocity(expo, coef, fidx, slot, pts, u)
    np.testing.assert_allclose(via_table, direct, atol=1e-14)


def test_weighted_part():
    X = PolyVectorField.from_terms(
        3, [(0, 1.0, (0, 0, 0)), (2, -0.5, (0, 1, 0)), (2, -0.5, (2, 1, 0))]
    )
    weights = (1, 1, 2)
    limit = X.weighted_part(weights, [w - 1 for w in weights])
    expected = PolyVectorField.from_terms(3, [(0, 1.0, (0, 0, 0)), (2, -0.5, (0, 1, 0))])
    assert limit.allclose(expected, tol=0)
