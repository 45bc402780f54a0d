from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from persistlam.dynsys import TWO_PI
from persistlam.errors import InputError, SchemeError, TruncationError
from persistlam.inverse_limit import (
    build_preorbit_space,
    check_branches,
    doubling_scheme,
    preorbit_distance,
    quadratic_scheme,
    random_codes,
    shift_code,
    truncation_gap,
)
from persistlam.lamination import TransversalCode, node_params


def test_codes_enumerate_every_branch_word():
    codes = doubling_scheme(3, 16).codes()
    assert len(codes) == 8
    assert codes[0] == TransversalCode((0, 0, 0))
    assert codes[-1] == TransversalCode((1, 1, 1))


def test_history_is_a_preorbit():
    scheme = doubling_scheme(2, 16)
    hist = scheme.history_points(TransversalCode((1, 0)), np.array([[1.0]]))
    for k in range(2):
        assert_allclose(scheme.base_map(hist[k + 1]), hist[k], atol=1e-12, rtol=0)


def test_branch_check_passes_on_doubling_and_quadratic():
    doubling = doubling_scheme(2, 32)
    assert check_branches(doubling, node_params(doubling.axes).reshape(-1, 1)) <= 1e-10
    quadratic = quadratic_scheme(0.2, 1, 16, 8)
    assert check_branches(quadratic, node_params(quadratic.axes).reshape(-1, 2)) <= 1e-10


def test_branch_check_rejects_a_wrong_solver():
    scheme = replace(doubling_scheme(1, 16), preimage=lambda u, b: u / 3.0)
    with pytest.raises(SchemeError):
        check_branches(scheme, np.array([[1.0]]))


def test_branch_check_rejects_critical_values():
    scheme = replace(doubling_scheme(1, 16), critical_values=(np.array([1.0]),))
    with pytest.raises(SchemeError):
        check_branches(scheme, np.array([[1.0005]]))


def test_quadratic_scheme_needs_critical_value_in_the_hole():
    with pytest.raises(InputError):
        quadratic_scheme(0.8, 1, 16, 8)


def test_preorbit_distance_weights_deeper_terms():
    scheme = doubling_scheme(1, 16)
    u = np.array([1.0])
    assert preorbit_distance(scheme, TransversalCode((0,)), u, TransversalCode((0,)), u) == 0.0
    # x_1 differ by half a turn, capped at 1 and halved
    assert_allclose(preorbit_distance(scheme, TransversalCode((0,)), u, TransversalCode((1,)), u), 0.5,
                    atol=1e-15, rtol=0)


def test_forward_shift_recodes_the_leading_symbol():
    scheme = doubling_scheme(2, 16)
    code, u = shift_code(scheme, TransversalCode((0, 1)), np.array([[4.0]]))
    assert code == TransversalCode((1, 0))
    assert_allclose(u, [[8.0 - TWO_PI]], atol=1e-14, rtol=0)


def test_inverse_shift_consumes_the_leading_symbol():
    scheme = doubling_scheme(2, 16)
    code, u = shift_code(scheme, TransversalCode((1, 0)), np.array([[1.0]]), "inverse", lambda c: 1)
    assert code == TransversalCode((0, 1))
    assert_allclose(u, [[(1.0 + TWO_PI) / 2.0]], atol=1e-15, rtol=0)


@given(st.floats(min_value=0.01, max_value=TWO_PI), st.lists(st.integers(0, 1), min_size=3, max_size=3))
@settings(max_examples=100, deadline=None)
def test_inverse_then_forward_restores_the_preorbit(u0, word):
    scheme = doubling_scheme(3, 16)
    code = TransversalCode(tuple(word))
    back, u_back = shift_code(scheme, code, np.array([[u0]]), "inverse")
    again, u_again = shift_code(scheme, back, u_back, "forward")
    assert again == code
    assert_allclose(u_again, [[u0]], atol=1e-12, rtol=0)


def test_shift_needs_a_symbol():
    with pytest.raises(TruncationError):
        shift_code(doubling_scheme(0, 16), TransversalCode(), np.array([[1.0]]))


def test_shift_rejects_unknown_direction_and_tail():
    scheme = doubling_scheme(1, 16)
    with pytest.raises(InputError):
        shift_code(scheme, TransversalCode((0,)), np.array([[1.0]]), "sideways")
    with pytest.raises(InputError):
        shift_code(scheme, TransversalCode((0,)), np.array([[1.0]]), "inverse", 2)


def test_truncation_gap_halves_with_depth():
    assert truncation_gap(doubling_scheme(5, 16)) == 1.0 / 32.0


def test_preorbit_space_shares_base_points_across_codes():
    lam = build_preorbit_space(doubling_scheme(3, 16))
    assert len(lam.codes) == 8
    assert_allclose(lam.points[0], lam.points[-1], atol=0, rtol=0)
    gap = lam.code_metric(lam.codes[0], np.array([1.0]), lam.codes[-1], np.array([1.0]))
    assert 0.0 < gap <= 1.0


def test_random_codes_are_reproducible():
    scheme = doubling_scheme(4, 16)
    assert random_codes(scheme, 5, seed=3) == random_codes(scheme, 5, seed=3)
    assert all(c.depth == 4 for c in random_codes(scheme, 5))
