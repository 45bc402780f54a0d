import numpy as np
import pytest
from numpy.testing import assert_allclose

from persistlam.bundle import Section, tangent_planes_fd
from persistlam.errors import GeometryError, HyperbolicityViolation, ImmersionViolation
from persistlam.graph_transform import iterate_to_fixed_point
from persistlam.models import GridConfig, Variant
from persistlam.tangent import (
    PlaneTransport,
    bump_leibniz,
    coordinate_splitting,
    divided_difference_sup,
    estimate_normal_hyperbolicity,
    growth_factors,
    iterate_plane_field,
    plane_contraction_ratios,
    regularity_consistent,
    regularity_profile,
    transport_plane_contracted,
    transport_plane_expanded,
)
from tests.conftest import build


def test_expanded_transport_divides_by_the_normal_rate():
    M = np.array([[2.0, 0.0], [0.0, 10.0]])
    assert_allclose(transport_plane_expanded(M, np.array([[0.3]]), 1), [[0.06]], atol=1e-15, rtol=0)


def test_contracted_transport_multiplies_by_the_normal_rate():
    M = np.array([[1.0, 0.0], [0.2, 0.5]])
    assert_allclose(transport_plane_contracted(M, np.array([[0.4]]), 1), [[0.4]], atol=1e-15, rtol=0)


def test_degenerate_blocks_are_reported():
    with pytest.raises(HyperbolicityViolation):
        transport_plane_expanded(np.array([[1.0, 0.0], [0.0, 0.0]]), np.zeros((1, 1)), 1)
    with pytest.raises(ImmersionViolation):
        transport_plane_contracted(np.array([[0.0, 0.0], [0.0, 1.0]]), np.zeros((1, 1)), 1)


def test_bump_leibniz_adds_the_gradient_term():
    out = bump_leibniz(np.array([0.5]), np.array([[2.0]]), np.array([[0.1]]), np.array([[[0.4]]]))
    assert_allclose(out, [[[0.4]]], atol=1e-15, rtol=0)


def test_circle_planes_match_the_section_derivative(circle):
    scenario, lam, frames, dynamics, cfg = circle
    sys = scenario.system()
    s_star, _ = iterate_to_fixed_point(sys, lam, frames, Section.zero(lam), Variant.CONTRACTED, dynamics, cfg)
    planes, report = iterate_plane_field(sys, lam, frames, s_star, Variant.CONTRACTED, dynamics, cfg)
    assert report.converged
    assert_allclose(planes.matrices, tangent_planes_fd(lam, frames, s_star).matrices, atol=1e-5, rtol=0)

    transport = PlaneTransport(sys, lam, frames, s_star, Variant.CONTRACTED, dynamics, cfg)
    ratios = plane_contraction_ratios(transport, pairs=10, seed=2)
    assert_allclose(ratios, 0.5, atol=1e-6, rtol=0)


def test_doubling_planes_are_small_and_converge(doubling):
    scenario, lam, frames, dynamics, cfg = doubling
    sys = scenario.system()
    s_star, _ = iterate_to_fixed_point(sys, lam, frames, Section.zero(lam), Variant.EXPANDED, dynamics, cfg)
    planes, report = iterate_plane_field(sys, lam, frames, s_star, Variant.EXPANDED, dynamics, cfg)
    assert report.converged
    assert report.sup_norm < 0.1


def test_plane_ball_violation_is_raised(circle):
    scenario, lam, frames, dynamics, cfg = circle
    sys = scenario.system()
    s_star, _ = iterate_to_fixed_point(sys, lam, frames, Section.zero(lam), Variant.CONTRACTED, dynamics, cfg)
    with pytest.raises(HyperbolicityViolation):
        iterate_plane_field(sys, lam, frames, s_star, Variant.CONTRACTED, dynamics, cfg, plane_eps=1e-3)


def test_doubling_rates():
    scenario, lam, _, dynamics, _ = build("doubling", GridConfig(nodes=64))
    estimate = estimate_normal_hyperbolicity(scenario.system(), lam, scenario.splitting(), dynamics, samples=32)
    assert estimate.hyperbolic
    assert_allclose(estimate.lambda_, 0.2, atol=1e-6, rtol=0)
    assert estimate.r_max == 3
    assert estimate.samples == 32


def test_circle_rates_allow_every_order(circle):
    scenario, lam, _, dynamics, _ = circle
    estimate = estimate_normal_hyperbolicity(scenario.system(), lam, scenario.splitting(), dynamics)
    assert_allclose(estimate.lambda_, 0.5, atol=1e-9, rtol=0)
    assert estimate.r_max == 6


def test_identity_is_not_hyperbolic():
    scenario, lam, _, dynamics, _ = build("identity", GridConfig(nodes=32))
    estimate = estimate_normal_hyperbolicity(scenario.system(), lam, scenario.splitting(), dynamics)
    assert not estimate.hyperbolic
    assert estimate.r_max == 0


def test_splitting_dimensions_must_add_up(doubling):
    scenario, lam, _, dynamics, _ = doubling
    with pytest.raises(GeometryError):
        estimate_normal_hyperbolicity(scenario.system(), lam, coordinate_splitting(2, [0], [1]), dynamics)


def test_coordinate_splitting_columns():
    splitting = coordinate_splitting(4, [2], [3])
    x = np.zeros((5, 4))
    assert splitting.stable(x).shape == (5, 4, 1)
    assert_allclose(splitting.unstable(x)[0, :, 0], [0.0, 0.0, 0.0, 1.0], atol=0, rtol=0)
    assert coordinate_splitting(2, [], [1]).stable(x[:, :2]).shape == (5, 2, 0)


def test_divided_differences_of_a_sine():
    h = 2.0 * np.pi / 256
    values = np.sin(h * np.arange(256))
    assert_allclose(divided_difference_sup(values, h, 1), 1.0, atol=1e-3, rtol=0)
    assert_allclose(divided_difference_sup(values, h, 2), 1.0, atol=1e-3, rtol=0)


def test_regularity_consistency_reads_growth():
    profile = {1: [1.0, 1.0], 2: [1.0, 1.2], 3: [1.0, 4.0]}
    assert growth_factors(profile)[3] == 4.0
    assert regularity_consistent(profile, 2)
    assert not regularity_consistent(profile, 1)
    assert not regularity_consistent(profile, 3)


def test_regularity_profile_of_a_smooth_function_does_not_grow():
    samples = [(2.0 * np.pi / n, np.sin(2.0 * np.pi * np.arange(n) / n)) for n in (256, 1024)]
    profile = regularity_profile(samples, max_order=3)
    assert sorted(profile) == [1, 2, 3]
    assert all(len(sups) == 2 for sups in profile.values())
    assert all(abs(g - 1.0) < 1e-2 for g in growth_factors(profile).values())
    assert not regularity_consistent(profile, 2)
