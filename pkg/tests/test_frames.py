import numpy as np
import pytest

from carnotlab.errors import NonGeneratingError, StructureError
from carnotlab.fields import PolyVectorField
from carnotlab.frames import (
    HorizontalFrame,
    builtin_frame,
    flow,
    growth_vector_at,
    left_invariant_frame,
    parse_frame_text,
)
from carnotlab.algebra import builtin_algebra


def engel_type_frame():
    X1 = PolyVectorField.from_terms(4, [(0, 1.0, (0, 0, 0, 0))])
    X2 = PolyVectorField.from_terms(
        4, [(1, 1.0, (0, 0, 0, 0)), (2, 1.0, (1, 0, 0, 0)), (3, 1.0, (2, 0, 0, 0))]
    )
    return HorizontalFrame([X1, X2], name="engel-type")


def test_builtin_heisenberg_fields():
    frame = builtin_frame("heisenberg1")
    X = PolyVectorField.from_terms(3, [(0, 1.0, (0, 0, 0)), (2, -0.5, (0, 1, 0))])
    Y = PolyVectorField.from_terms(3, [(1, 1.0, (0, 0, 0)), (2, 0.5, (1, 0, 0))])
    assert frame.fields[0].allclose(X, tol=0)
    assert frame.fields[1].allclose(Y, tol=0)


def test_left_invariant_fields_are_identity_at_origin():
    for name in ("heisenberg1", "engel"):
        frame = builtin_frame(name)
        mat = frame.frame_matrix(np.zeros(frame.n))
        np.testing.assert_allclose(mat, np.eye(frame.n)[:, : frame.r], atol=0)


def test_left_invariant_frame_matches_product_derivative():
    # X_j(g) must be the derivative of g * (eps e_j) at eps = 0
    alg = builtin_algebra("engel")
    frame = left_invariant_frame(alg)
    rng = np.random.default_rng(0)
    eps = 1e-6
    for _ in range(10):
        g = rng.normal(size=4)
        for j in range(2):
            e = np.zeros(4)
            e[j] = eps
            fd = (alg.bch_product(g, e) - alg.bch_product(g, -e)) / (2 * eps)
            np.testing.assert_allclose(frame.fields[j].evaluate(g), fd, atol=1e-8)


def test_growth_heisenberg():
    frame = builtin_frame("heisenberg1")
    rng = np.random.default_rng(1)
    for _ in range(5):
        g = growth_vector_at(frame, rng.normal(size=3))
        assert g.ranks == (2, 3)
        assert g.growth == (2, 1)
        assert g.weights == (1, 1, 2)
        assert g.Q == 4


def test_growth_abelian():
    g = growth_vector_at(builtin_frame("abelian(2)"), [0.0, 0.0])
    assert g.ranks == (2,)
    assert g.Q == 2


def test_growth_engel():
    for frame in (builtin_frame("engel"), engel_type_frame()):
        g = growth_vector_at(frame, np.zeros(4))
        assert g.ranks == (2, 3, 4)
        assert g.growth == (2, 1, 1)
        assert g.Q == 7
        assert g.step == 3


def test_non_generating_raises():
    fields = [PolyVectorField.from_terms(2, [(0, 1.0, (0, 0))])]
    frame = HorizontalFrame(fields)
    with pytest.raises(NonGeneratingError) as exc:
        growth_vector_at(frame, np.zeros(2))
    assert exc.value.partial_ranks[0] == 1


def test_flow_straight_line():
    frame = builtin_frame("heisenberg1")
    end = flow(frame, np.array([1.0, 0.0]), np.zeros(3), 1.0)
    np.testing.assert_allclose(end, [1.0, 0.0, 0.0], atol=1e-9)


def test_flow_zero_time():
    frame = builtin_frame("heisenberg1")
    p = np.array([0.3, -0.2, 0.9])
    np.testing.assert_array_equal(flow(frame, np.array([1.0, 1.0]), p, 0.0), p)


def test_flow_commutator_square():
    # tracing e^X e^Y e^-X e^-Y from the identity lands on (0, 0, 1)
    frame = builtin_frame("heisenberg1")
    pieces = [
        (1.0, (1.0, 0.0)),
        (1.0, (0.0, 1.0)),
        (1.0, (-1.0, 0.0)),
        (1.0, (0.0, -1.0)),
    ]
    end = flow(frame, pieces, np.zeros(3), 4.0)
    np.testing.assert_allclose(end, [0.0, 0.0, 1.0], atol=1e-6)


def test_flow_reversed_controls_return():
    frame = builtin_frame("engel")
    rng = np.random.default_rng(2)
    controls = [(0.5, tuple(rng.normal(size=2))) for _ in range(4)]
    p = rng.normal(size=4) * 0.3
    out = flow(frame, controls, p, 2.0)
    back = [(d, tuple(-np.asarray(u))) for d, u in reversed(controls)]
    home = flow(frame, back, out, 2.0)
    np.testing.assert_allclose(home, p, atol=1e-8)


def test_flow_time_dependent_control():
    frame = builtin_frame("abelian(2)")
    end = flow(frame, lambda t: np.array([np.cos(t), np.sin(t)]), np.zeros(2), np.pi)
    np.testing.assert_allclose(end, [np.sin(np.pi), 1 - np.cos(np.pi)], atol=1e-8)


def test_parse_frame_text():
    frame = parse_frame_text(
        """
        n = 3
        r = 2
        field
        term slot=1 coef=1 expo=0,0,0
        term slot=3 coef=-0.5 expo=0,1,0
        field
        term slot=2 coef=1 expo=0,0,0
        term slot=3 coef=0.5 expo=1,0,0
        """
    )
    ref = builtin_frame("heisenberg1")
    for built, expected in zip(frame.fields, ref.fields):
        assert built.allclose(expected, tol=0)


def test_parse_frame_errors():
    with pytest.raises(StructureError):
        parse_frame_text("n = 2\nterm slot=1 coef=1 expo=0,0\n")
    with pytest.raises(StructureError):
        parse_frame_text("n = 2\nr = 3\nfield\nterm slot=1 coef=1 expo=0,0\n")


def test_frame_matrix_shape():
    frame = builtin_frame("engel")
    mat = frame.frame_matrix([0.5, -0.3, 0.2, 0.1])
    assert mat.shape == (4, 2)
    np.testing.assert_allclose(mat[:, 0], frame.fields[0].evaluate(np.array([0.5, -0.3, 0.2, 0.1])))


def test_flow_blowup_raises_integration_error():
    from carnotlab.errors import IntegrationError

    # x' = x^2 escapes to infinity at t = 1; the stepper must fail with
    # the last good state attached
    field = PolyVectorField.from_terms(1, [(0, 1.0, (2,))])
    frame = HorizontalFrame([field], name="blowup")
    with pytest.raises(IntegrationError) as exc:
        flow(frame, np.array([1.0]), np.array([1.0]), 2.0)
    assert exc.value.last_state is not None
    assert exc.value.last_state[0] > 1.0
