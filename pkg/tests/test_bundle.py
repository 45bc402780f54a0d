import numpy as np
import pytest
from numpy.testing import assert_allclose

from persistlam.bundle import (
    PlaneField,
    Section,
    build_normal_frames,
    frame_continuity,
    grid_derivative,
    section_to_immersion,
    tangent_planes_fd,
)
from persistlam.dynsys import CoordinateKind, StateSpace
from persistlam.errors import GeometryError, InputError, NumericError
from persistlam.lamination import Axis, curve_lamination

PLANE = StateSpace.lines(2)


@pytest.fixture
def unit_circle():
    return curve_lamination("unit", PLANE, Axis.circle(128), lambda u: np.stack([np.cos(u), np.sin(u)], axis=-1))


def test_periodic_derivative_is_fourth_order_accurate():
    axis = Axis.circle(64)
    assert_allclose(grid_derivative(np.sin(axis.nodes), 0, axis), np.cos(axis.nodes), atol=1e-5, rtol=0)


def test_one_sided_stencils_are_exact_on_cubics():
    axis = Axis.line(-1.0, 2.0, 16)
    u = axis.nodes
    assert_allclose(grid_derivative(u ** 3 - u, 0, axis), 3.0 * u ** 2 - 1.0, atol=1e-10, rtol=0)


def test_angle_values_are_differenced_across_the_cut():
    axis = Axis.circle(32)
    space = StateSpace(1, (CoordinateKind.ANGLE,))
    deriv = grid_derivative(axis.nodes[:, None], 0, axis, space)
    assert_allclose(deriv, np.ones((32, 1)), atol=1e-10, rtol=0)


def test_frames_are_orthonormal_and_transverse(unit_circle):
    frames = build_normal_frames(unit_circle)
    n = frames.matrices
    gram = np.swapaxes(n, -1, -2) @ n
    assert_allclose(gram, np.ones_like(gram), atol=1e-12, rtol=0)
    assert_allclose(np.swapaxes(n, -1, -2) @ frames.tangents, 0.0, atol=1e-8, rtol=0)
    assert frame_continuity(unit_circle, frames) < 2.0


def test_frame_hint_must_match_shape(unit_circle):
    with pytest.raises(InputError):
        build_normal_frames(unit_circle, hint=np.zeros((1, 4, 2, 1)))


def test_tangent_hint_is_rejected(unit_circle):
    tangents = build_normal_frames(unit_circle).tangents
    with pytest.raises(GeometryError):
        build_normal_frames(unit_circle, hint=tangents)


def test_section_norms_and_tube_check(unit_circle):
    zero = Section.zero(unit_circle)
    assert zero.values.shape == (1, 128, 1)
    assert zero.sup_norm() == 0.0

    bump = Section(np.full((1, 128, 1), 0.3))
    assert_allclose(bump.distance(zero), 0.3, atol=1e-15, rtol=0)
    assert_allclose((bump - bump.scaled(0.5)).sup_norm(), 0.15, atol=1e-15, rtol=0)
    bump.check_tube(0.5)
    with pytest.raises(InputError):
        bump.check_tube(0.2)

    broken = Section(np.full((1, 128, 1), np.nan))
    with pytest.raises(NumericError):
        broken.check_tube(1.0)


def test_zero_section_immerses_the_base_points(unit_circle):
    frames = build_normal_frames(unit_circle)
    immersed = section_to_immersion(unit_circle, frames, Section.zero(unit_circle))
    assert_allclose(immersed.at_nodes(), unit_circle.flat_points(), atol=0, rtol=0)


def test_constant_section_moves_to_a_concentric_circle(unit_circle):
    frames = build_normal_frames(unit_circle)
    immersed = section_to_immersion(unit_circle, frames, Section(np.full((1, 128, 1), 0.1)))
    radii = np.linalg.norm(immersed.at_nodes()[0], axis=-1)
    assert_allclose(radii, np.full(128, radii[0]), atol=1e-12, rtol=0)
    assert_allclose(abs(radii[0] - 1.0), 0.1, atol=1e-12, rtol=0)
    # between nodes as well
    off_node = np.linalg.norm(immersed(0, np.array([[0.01], [3.3]])), axis=-1)
    assert_allclose(off_node, radii[:2], atol=1e-6, rtol=0)


def test_zero_section_has_flat_planes(unit_circle):
    frames = build_normal_frames(unit_circle)
    planes = tangent_planes_fd(unit_circle, frames, Section.zero(unit_circle))
    assert planes.matrices.shape == (1, 128, 1, 1)
    assert planes.sup_norm() <= 1e-10


def test_plane_field_norm_is_spectral():
    field = PlaneField(np.array([[[[3.0, 0.0], [0.0, 4.0]]]]))
    assert field.sup_norm() == 4.0
    assert field.distance(field) == 0.0
