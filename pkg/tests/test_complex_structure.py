import numpy as np
import pytest
from numpy.testing import assert_allclose

from persistlam.bundle import PlaneField, Section
from persistlam.complex_structure import (
    ambient_planes,
    deform_family,
    disk_grid,
    holomorphy_residual_section,
    j_invariance_residual,
    parameter_cr_residual,
)
from persistlam.dynsys import DeformationFamily, StateSpace
from persistlam.errors import InputError
from persistlam.models import GridConfig, Variant
from persistlam.scenarios import get_scenario
from tests.conftest import build


@pytest.fixture
def endomorphism():
    return build("endomorphism", GridConfig(nodes=16))


def test_disk_grid_orders_rings_outward():
    grid = disk_grid(1.0, 2, 4)
    assert len(grid) == 9
    assert grid[0] == 0j
    assert_allclose([abs(t) for t in grid[1:5]], 0.5, atol=1e-15, rtol=0)
    assert_allclose(grid[5], 1.0, atol=1e-15, rtol=0)
    assert_allclose(grid[6], 1j, atol=1e-15, rtol=0)


def test_complex_lines_are_j_invariant_and_real_lines_are_not():
    space = StateSpace.complex(1)
    _, complex_line = j_invariance_residual(np.eye(2)[None], space)
    assert complex_line <= 1e-15
    per_node, real_line = j_invariance_residual(np.array([[[1.0], [0.0]]]), space)
    assert per_node.shape == (1,)
    assert_allclose(real_line, 1.0, atol=1e-15, rtol=0)


def test_j_invariance_needs_complex_pairs():
    with pytest.raises(InputError):
        j_invariance_residual(np.eye(2)[None], StateSpace.lines(2))


def test_flat_planes_span_the_leaf_tangents(endomorphism):
    _, lam, frames, _, _ = endomorphism
    vectors = ambient_planes(frames, PlaneField.zero(lam))
    assert_allclose(vectors, frames.tangents, atol=0, rtol=0)
    _, residual = j_invariance_residual(vectors, lam.space)
    assert residual <= 1e-12


def test_zero_section_of_the_complex_line_is_holomorphic(endomorphism):
    _, lam, frames, _, _ = endomorphism
    residual, error_bar = holomorphy_residual_section(lam, frames, Section.zero(lam))
    assert residual <= 1e-12
    assert error_bar <= 1e-12


def test_conjugate_section_is_not_holomorphic(endomorphism):
    _, lam, frames, _, _ = endomorphism
    u = lam.leaf_params()
    values = 0.01 * np.stack([u[:, 0], -u[:, 1]], axis=-1)[None]
    residual, _ = holomorphy_residual_section(lam, frames, Section(values))
    assert_allclose(residual, 0.01, atol=1e-12, rtol=0)


def test_holomorphy_needs_complex_leaves(circle):
    _, lam, frames, _, _ = circle
    with pytest.raises(InputError):
        holomorphy_residual_section(lam, frames, Section.zero(lam))


def test_parameter_cr_vanishes_for_affine_functions_of_t():
    radius, rings, angles = 0.1, 2, 8
    values = {t: np.array([0.3 + 0.1j - 2.0j * t, 4.0 * t]) for t in disk_grid(radius, rings, angles)}
    assert parameter_cr_residual(values, radius, rings, angles) <= 1e-12


def test_parameter_cr_truncation_on_a_quadratic_is_second_order_in_the_angle():
    radius, rings, angles = 0.1, 2, 8
    values = {t: np.array([t * t]) for t in disk_grid(radius, rings, angles)}
    expected = 0.5 * radius * (1.0 - np.cos(2.0 * np.pi / angles))
    assert_allclose(parameter_cr_residual(values, radius, rings, angles), expected, atol=1e-12, rtol=0)


def test_parameter_cr_of_the_real_part_is_one_half():
    radius, rings, angles = 0.1, 3, 12
    values = {t: np.array([t.real]) for t in disk_grid(radius, rings, angles)}
    assert_allclose(parameter_cr_residual(values, radius, rings, angles), 0.5, atol=1e-12, rtol=0)


def test_parameter_cr_needs_an_interior_ring():
    values = {t: np.array([t]) for t in disk_grid(0.1, 1, 8)}
    with pytest.raises(InputError):
        parameter_cr_residual(values, 0.1, 1, 8)


def test_parameter_cr_sees_the_conjugate():
    radius, rings, angles = 0.1, 2, 8
    values = {t: np.array([np.conj(t)]) for t in disk_grid(radius, rings, angles)}
    assert_allclose(parameter_cr_residual(values, radius, rings, angles), 1.0, atol=1e-12, rtol=0)


def test_deformation_through_the_real_part_is_not_holomorphic(circle):
    scenario, lam, frames, dynamics, cfg = circle
    family = DeformationFamily(lambda t: scenario.with_params(eps=0.1 + t.real).system(), disk_radius=0.05,
                               name="circle-eps")
    result = deform_family(family, lam, frames, Variant.CONTRACTED, dynamics, cfg, radius=0.05, rings=2, angles=8)
    report = result.report
    assert len(report.members) == 17
    assert all(m.converged for m in report.members)
    assert_allclose(report.largest_ring, 0.05, atol=1e-15, rtol=0)
    assert report.parameter_cr_residual > 0.1
    expected = get_scenario("circle", {"eps": 0.15}).oracle(lam)
    assert_allclose(result.sections[result.t_grid[9]].values, expected, atol=1e-9, rtol=0)


def test_parameter_grid_must_fit_the_family_disk(circle):
    scenario, lam, frames, dynamics, cfg = circle
    family = DeformationFamily(lambda t: scenario.system(), disk_radius=0.01)
    with pytest.raises(InputError):
        deform_family(family, lam, frames, Variant.CONTRACTED, dynamics, cfg, radius=0.02)
