import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from persistlam.dynsys import (
    TWO_PI,
    CoordinateKind,
    MapSystem,
    StateSpace,
    check_holomorphy,
    complex_view,
    eval_map,
    jacobian,
    real_view,
    wrap_angle,
)
from persistlam.errors import InputError, NumericError
from persistlam.scenarios import get_scenario

MIXED = StateSpace(2, (CoordinateKind.ANGLE, CoordinateKind.LINE))
finite = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False, allow_infinity=False)


@given(finite, finite, st.integers(min_value=-5, max_value=5))
@settings(max_examples=200, deadline=None)
def test_difference_ignores_full_turns(theta, y, turns):
    a = np.array([theta + TWO_PI * turns, y])
    b = np.array([theta, y])
    assert_allclose(MIXED.difference(a, b), [0.0, 0.0], atol=1e-9, rtol=0)


@given(finite, finite)
@settings(max_examples=200, deadline=None)
def test_wrap_lands_in_fundamental_domain(theta, y):
    wrapped = MIXED.wrap(np.array([theta, y]))
    assert 0.0 <= wrapped[0] < TWO_PI
    assert wrapped[1] == y


@pytest.mark.parametrize("theta", [-3.03e-52, -1e-17, -0.0, -TWO_PI])
def test_wrap_of_tiny_negative_angles_is_zero(theta):
    assert MIXED.wrap(np.array([theta, 1.0]))[0] == 0.0
    assert wrap_angle(theta) == 0.0


def test_difference_stays_below_half_turn():
    d = MIXED.difference(np.array([np.pi - 1e-17, 0.0]), np.array([0.0, 0.0]))
    assert -np.pi <= d[0] < np.pi


def test_j_squares_to_minus_identity():
    J = StateSpace.complex(2).j_matrix()
    assert_allclose(J @ J, -np.eye(4), atol=0, rtol=0)


def test_angle_cannot_be_complex_paired():
    with pytest.raises(InputError):
        StateSpace(2, (CoordinateKind.ANGLE, CoordinateKind.LINE), ((0, 1),))


def test_factor_kinds_must_match_dimension():
    with pytest.raises(InputError):
        StateSpace(3, (CoordinateKind.LINE, CoordinateKind.LINE))


def test_eval_map_rejects_wrong_dimension():
    sys = get_scenario("doubling").system()
    with pytest.raises(InputError):
        eval_map(sys, np.zeros((4, 3)))


def test_eval_map_reports_non_finite_values():
    sys = MapSystem(StateSpace.lines(1), lambda x, p: 1.0 / x, name="reciprocal")
    with pytest.raises(NumericError):
        eval_map(sys, np.array([[0.0]]))


def test_eval_map_wraps_angles():
    sys = get_scenario("doubling", {"eps": 0.0}).system()
    out = eval_map(sys, np.array([[4.0, 0.0]]))
    assert_allclose(out, [[np.mod(8.0, TWO_PI), 0.0]], atol=1e-14, rtol=0)


@pytest.mark.parametrize("name", ["doubling", "solenoid", "circle", "torus", "henon", "endomorphism"])
def test_analytic_jacobian_matches_finite_differences(name, rng):
    sys = get_scenario(name).system()
    x = rng.uniform(0.1, 1.0, size=(16, sys.space.n))
    assert_allclose(jacobian(sys, x), jacobian(sys, x, h=1e-6), atol=1e-6, rtol=0)


@given(st.floats(min_value=-3.0, max_value=3.0), st.floats(min_value=-3.0, max_value=3.0))
@settings(max_examples=50, deadline=None)
def test_affine_map_jacobian_is_constant(a, b):
    A = np.array([[a, 1.0], [0.5, b]])
    sys = MapSystem(StateSpace.lines(2), lambda x, p: x @ A.T + 1.0)
    x = np.array([[0.3, -0.7], [2.0, 1.0]])
    assert_allclose(jacobian(sys, x), np.broadcast_to(A, (2, 2, 2)), atol=1e-8, rtol=0)


def test_henon_and_endomorphism_are_holomorphic(rng):
    for name in ("henon", "endomorphism"):
        sys = get_scenario(name).system()
        x = rng.uniform(-1.0, 1.0, size=(32, 4))
        assert check_holomorphy(sys, x) <= 1e-12


def test_conjugation_is_not_holomorphic():
    def conj(x, p):
        out = np.array(x, dtype=float)
        out[..., 1] = -out[..., 1]
        return out

    sys = MapSystem(StateSpace.complex(1), conj)
    assert check_holomorphy(sys, np.array([[0.2, 0.3]])) > 1.0


def test_holomorphy_needs_complex_pairs():
    with pytest.raises(InputError):
        check_holomorphy(get_scenario("doubling").system(), np.zeros((1, 2)))


def test_complex_and_real_views_are_inverse(rng):
    values = rng.normal(size=(5, 4))
    assert_allclose(real_view(complex_view(values)), values, atol=0, rtol=0)
