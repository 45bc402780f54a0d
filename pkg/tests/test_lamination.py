import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from persistlam.dynsys import TWO_PI, CoordinateKind, StateSpace
from persistlam.errors import DomainError, InputError
from persistlam.lamination import (
    Axis,
    DiscreteLamination,
    GridInterpolant,
    MarkedRegion,
    TransversalCode,
    build_lamination,
    curve_lamination,
    evaluate_immersion,
    leaf_distance,
    plaque_neighborhood,
    product_lamination,
)
from persistlam.models import RunConfig

PLANE = StateSpace.lines(2)


def unit_circle(nodes: int = 128) -> DiscreteLamination:
    return curve_lamination("unit", PLANE, Axis.circle(nodes), lambda u: np.stack([np.cos(u), np.sin(u)], axis=-1))


def test_axis_needs_enough_nodes():
    with pytest.raises(InputError):
        Axis.line(0.0, 1.0, 4)


def test_line_axis_includes_endpoints():
    axis = Axis.line(-1.0, 1.0, 9)
    assert axis.nodes[0] == -1.0
    assert_allclose(axis.nodes[-1], 1.0, atol=1e-15, rtol=0)
    assert axis.spacing == 0.25


@given(st.floats(min_value=-20.0, max_value=20.0), st.floats(min_value=-20.0, max_value=20.0))
@settings(max_examples=200, deadline=None)
def test_circle_delta_is_shortest_way_round(a, b):
    axis = Axis.circle(16)
    d = axis.delta(a, b)
    assert -np.pi - 1e-12 <= d <= np.pi + 1e-12
    assert_allclose(np.mod(a - b - d + np.pi, TWO_PI) - np.pi, 0.0, atol=1e-9, rtol=0)


def test_codes_must_be_distinct():
    points = np.zeros((2, 8, 2))
    with pytest.raises(InputError):
        DiscreteLamination("dup", PLANE, (Axis.circle(8),), (TransversalCode((0,)), TransversalCode((0,))), points)


def test_points_shape_is_checked():
    with pytest.raises(InputError):
        DiscreteLamination("bad", PLANE, (Axis.circle(8),), (TransversalCode(),), np.zeros((1, 9, 2)))


def test_interpolant_reproduces_nodes_and_smooth_functions():
    axis = Axis.circle(64)
    values = np.sin(axis.nodes)[:, None]
    interp = GridInterpolant((axis,), values)
    assert_allclose(interp(axis.nodes[:, None]), values, atol=1e-12, rtol=0)
    u = np.linspace(0.0, TWO_PI, 97)[:, None]
    assert_allclose(interp(u)[:, 0], np.sin(u[:, 0]), atol=1e-5, rtol=0)


def test_two_dimensional_interpolant_is_exact_on_cubics():
    axes = (Axis.line(0.0, 1.0, 9), Axis.line(-1.0, 1.0, 11))
    mesh = np.stack(np.meshgrid(axes[0].nodes, axes[1].nodes, indexing="ij"), axis=-1)
    values = mesh[..., 0] ** 3 - 2.0 * mesh[..., 0] * mesh[..., 1] ** 2
    interp = GridInterpolant(axes, values)
    u = np.array([[0.33, 0.1], [0.9, -0.77], [0.05, 0.5]])
    assert_allclose(interp(u)[:, 0], u[:, 0] ** 3 - 2.0 * u[:, 0] * u[:, 1] ** 2, atol=1e-12, rtol=0)


def test_tensor_spline_is_twice_differentiable_across_cell_edges():
    axes = (Axis.line(0.0, 1.0, 9), Axis.circle(8))
    values = np.zeros((9, 8))
    values[3, 3] = 1.0
    interp = GridInterpolant(axes, values)
    y = axes[1].nodes[3] + 0.3 * axes[1].spacing
    h = 1e-5
    xs = axes[0].nodes[4] + h * np.arange(-2, 3)
    f = interp(np.stack([xs, np.full(5, y)], axis=-1))[:, 0]
    left1, right1 = (f[2] - f[1]) / h, (f[3] - f[2]) / h
    left2 = (f[2] - 2.0 * f[1] + f[0]) / h**2
    right2 = (f[4] - 2.0 * f[3] + f[2]) / h**2
    assert abs(left1 - right1) < 2e-2
    assert abs(left2 - right2) < 0.5


def test_clamped_line_spline_reproduces_cubics_up_to_the_ends():
    axis = Axis.line(-1.0, 2.0, 10)
    interp = GridInterpolant((axis,), axis.nodes**3 - axis.nodes)
    u = np.array([-1.0, -0.99, 1.97, 2.0])
    assert_allclose(interp(u[:, None])[:, 0], u**3 - u, atol=1e-12, rtol=0)


def test_axis_reduce_maps_tiny_negatives_to_the_origin():
    assert Axis.circle(16).reduce(np.array([-3.03e-52]))[0] == 0.0


def test_evaluate_immersion_rejects_parameters_off_a_line_axis():
    lam = curve_lamination("seg", PLANE, Axis.line(0.0, 1.0, 16), lambda u: np.stack([u, u * u], axis=-1))
    with pytest.raises(DomainError):
        evaluate_immersion(lam, TransversalCode(), np.array([1.5]))


def test_immersion_domain_check_is_per_call():
    lam = curve_lamination("seg", PLANE, Axis.line(0.0, 1.0, 16), lambda u: np.stack([u, u * u], axis=-1))
    assert len(lam._interpolants) == len(lam.codes)
    just_outside = np.array([1.0 + 0.5 * lam.axes[0].spacing])
    with pytest.raises(DomainError):
        evaluate_immersion(lam, TransversalCode(), just_outside)
    interp = lam.interpolant(0)
    assert interp.extrapolate_cells == 1.0
    assert_allclose(interp(just_outside[:, None])[0], [just_outside[0], just_outside[0] ** 2], atol=1e-9, rtol=0)


def test_leaf_distance_is_arclength_on_the_unit_circle():
    lam = unit_circle()
    code = TransversalCode()
    assert_allclose(leaf_distance(lam, code, np.array([0.0]), np.array([np.pi / 2])), np.pi / 2, atol=1e-5, rtol=0)
    # the shorter way round
    assert_allclose(leaf_distance(lam, code, np.array([0.1]), np.array([TWO_PI - 0.1])), 0.2, atol=1e-5, rtol=0)


def test_plaque_neighborhood_has_the_requested_diameter():
    lam = unit_circle()
    box = plaque_neighborhood(lam, TransversalCode(), np.array([1.0]), 0.3)
    assert_allclose(box.hi - box.lo, [0.3], atol=1e-5, rtol=0)


def test_plaque_neighborhood_saturates_on_short_leaves():
    lam = curve_lamination("seg", PLANE, Axis.line(0.0, 0.1, 16), lambda u: np.stack([u, 0.0 * u], axis=-1))
    box = plaque_neighborhood(lam, TransversalCode(), np.array([0.05]), 1.0)
    assert_allclose([box.lo[0], box.hi[0]], [0.0, 0.1], atol=1e-15, rtol=0)


def test_marked_region_bump_is_one_inside_and_zero_outside():
    axes = (Axis.line(-2.0, 2.0, 41),)
    region = MarkedRegion(center=(0.0,), inner=(0.5,), outer=(1.0,))
    rho, grad = region.rho(axes, np.array([[0.0], [0.4], [0.75], [1.5]]))
    assert_allclose(rho[:2], [1.0, 1.0], atol=0, rtol=0)
    assert 0.0 < rho[2] < 1.0
    assert rho[3] == 0.0
    assert grad[2, 0] < 0.0


def test_marked_region_needs_nested_boxes():
    with pytest.raises(InputError):
        MarkedRegion(center=(0.0,), inner=(1.0,), outer=(0.5,))


def test_product_lamination_concatenates_codes_axes_and_coordinates():
    first = curve_lamination("a", StateSpace(1, (CoordinateKind.ANGLE,)), Axis.circle(8), lambda u: u[:, None],
                             codes=(TransversalCode((0,)), TransversalCode((1,))))
    second = unit_circle(16)
    product = product_lamination(first, second)
    assert len(product.codes) == 2
    assert product.d == 2
    assert product.space.n == 3
    assert product.points.shape == (2, 8, 16, 3)
    assert product.code_metric(product.codes[0], np.zeros(2), product.codes[1], np.zeros(2)) == 1.0


def test_single_leaf_tube_radius_defaults_to_a_quarter():
    assert unit_circle().tube_radius == 0.25


def test_distance_between_uses_code_metric_across_leaves():
    lam = curve_lamination("two", PLANE, Axis.circle(16), lambda u, k: np.stack([np.cos(u), np.sin(u) + k], axis=-1),
                           codes=(TransversalCode((0,)), TransversalCode((1,))))
    assert lam.distance_between(0, np.array([0.0]), 1, np.array([0.0])) == 1.0
    assert lam.distance_between(0, np.array([0.0]), 0, np.array([0.0])) == 0.0


def test_build_lamination_from_a_run_config():
    lam = build_lamination(RunConfig(scenario="solenoid", grid={"nodes": 16, "depth": 2}))
    assert lam.name == "solenoid"
    assert len(lam.codes) == 4
    assert lam.codes[0].depth == 2
