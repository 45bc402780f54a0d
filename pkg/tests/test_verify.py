import numpy as np
import pytest
from numpy.testing import assert_allclose

from persistlam.bundle import Section, section_to_immersion
from persistlam.errors import HypothesisError, InputError
from persistlam.graph_transform import iterate_to_fixed_point
from persistlam.models import GridConfig, Variant
from persistlam.verify import (
    ContainmentReport,
    ImmersedLamination,
    bounded_preorbit_containment,
    exact_orbit,
    injectivity_margin,
    plaque_expansiveness_probe,
    plaque_growth_check,
    shadow_check_backward,
    shadow_check_forward,
    surviving_core,
)
from tests.conftest import build


@pytest.fixture
def circle_fixed(circle):
    scenario, lam, frames, dynamics, cfg = circle
    s_star, _ = iterate_to_fixed_point(scenario.system(), lam, frames, Section.zero(lam), Variant.CONTRACTED,
                                       dynamics, cfg)
    return scenario, lam, frames, dynamics, cfg, s_star


# ===========================================
# INJECTIVITY
# ===========================================

def test_every_node_of_a_rotation_survives(circle):
    _, lam, _, dynamics, _ = circle
    core = surviving_core(lam, dynamics, steps=5)
    assert core.shape == (1, 64)
    assert core.all()


def test_surviving_core_needs_the_inverse(doubling):
    _, lam, _, dynamics, _ = doubling
    with pytest.raises(InputError):
        surviving_core(lam, dynamics, steps=2, backward=True)


def test_embedded_circle_is_injective(circle):
    _, lam, frames, _, _ = circle
    nodes = section_to_immersion(lam, frames, Section.zero(lam)).at_nodes()
    near = injectivity_margin(lam, nodes, eps0=0.5)
    far = injectivity_margin(lam, nodes, eps0=1.0)
    assert near.injective
    assert near.margin > 0.45
    assert far.margin >= near.margin
    assert near.pairs_checked > far.pairs_checked


def test_figure_eight_is_not_injective():
    _, lam, frames, _, _ = build("figure_eight", GridConfig(nodes=64))
    nodes = section_to_immersion(lam, frames, Section.zero(lam)).at_nodes()
    result = injectivity_margin(lam, nodes, eps0=0.5)
    assert not result.injective
    assert result.margin < 1e-12
    assert result.to_dict()["injective"] is False


# ===========================================
# SHADOWING
# ===========================================

def test_exact_orbit_is_shadowed_by_its_own_root(circle_fixed):
    scenario, lam, frames, dynamics, cfg, s_star = circle_fixed
    sys = scenario.system()
    pseudo, ambient = exact_orbit(sys, lam, frames, s_star, dynamics, 0, 3, length=12)
    assert len(pseudo) == 12 and ambient.shape == (12, 2)
    result = shadow_check_forward(sys, lam, frames, s_star, pseudo, ambient, 0.05, cfg, dynamics, tol=1e-9)
    assert result.success
    assert result.code == ""
    assert result.leaf_distance <= 1e-9
    assert_allclose(result.u, lam.leaf_params()[3], atol=1e-9, rtol=0)


def test_backward_shadowing_runs_along_preorbits(circle_fixed):
    scenario, lam, frames, dynamics, cfg, s_star = circle_fixed
    sys = scenario.system()
    pseudo, ambient = exact_orbit(sys, lam, frames, s_star, dynamics, 0, 10, length=12, backward=True)
    result = shadow_check_backward(sys, lam, frames, s_star, pseudo, ambient, 0.05, cfg, dynamics, tol=1e-9)
    assert result.success


def test_short_orbits_violate_the_hypotheses(circle_fixed):
    scenario, lam, frames, dynamics, cfg, s_star = circle_fixed
    sys = scenario.system()
    pseudo, ambient = exact_orbit(sys, lam, frames, s_star, dynamics, 0, 0, length=5)
    with pytest.raises(HypothesisError):
        shadow_check_forward(sys, lam, frames, s_star, pseudo, ambient, 0.05, cfg, dynamics)


def test_ambient_orbit_far_from_the_pseudo_orbit_is_rejected(circle_fixed):
    scenario, lam, frames, dynamics, cfg, s_star = circle_fixed
    sys = scenario.system()
    pseudo, ambient = exact_orbit(sys, lam, frames, s_star, dynamics, 0, 0, length=12)
    with pytest.raises(HypothesisError):
        shadow_check_forward(sys, lam, frames, s_star, pseudo, ambient + np.array([0.3, 0.0]), 0.05, cfg,
                             dynamics)


# ===========================================
# CONTAINMENT
# ===========================================

def test_points_of_the_immersed_circle_stay_contained(circle_fixed):
    scenario, lam, frames, _, cfg, s_star = circle_fixed
    immersed = ImmersedLamination(lam, frames, s_star, cfg)
    report = bounded_preorbit_containment(scenario.system(), immersed, immersed.node_points[::8], steps=3)
    assert report.bounded == 8
    assert report.contained == 8
    assert report.worst <= 1e-6
    assert report.fraction == 1.0


def test_points_off_the_leaf_are_not_contained(circle_fixed):
    scenario, lam, frames, _, cfg, s_star = circle_fixed
    immersed = ImmersedLamination(lam, frames, s_star, cfg)
    off = immersed.node_points[5:6] + np.array([0.3, 0.0])
    report = bounded_preorbit_containment(scenario.system(), immersed, off, steps=0)
    assert report.bounded == 1
    assert report.contained == 0
    assert report.unresolved == 0
    assert_allclose(report.worst, 0.3, atol=1e-8, rtol=0)
    assert report.fraction == 0.0


def test_empty_containment_counts_as_complete():
    report = ContainmentReport(sampled=10, bounded=0, contained=0, unresolved=0, worst=0.0, tolerance=1e-3)
    assert report.fraction == 1.0
    assert report.to_dict()["fraction"] == 1.0


# ===========================================
# EXPANSIVENESS
# ===========================================

def test_single_leaf_probe_collapses(circle):
    _, lam, _, dynamics, _ = circle
    profile = plaque_expansiveness_probe(lam, dynamics, eps=0.2, trial_count=16, seed=3)
    assert profile.collapsed
    assert profile.verdict == "collapsed"
    assert profile.profile[-1] == 0.0
    assert profile.to_dict()["verdict"] == "collapsed"


def test_identity_levels_never_separate():
    _, lam, _, dynamics, _ = build("identity", GridConfig(nodes=32))
    profile = plaque_expansiveness_probe(lam, dynamics, eps=0.02, trial_count=32, seed=0)
    assert not profile.collapsed
    assert profile.verdict == "inconclusive"
    assert profile.profile[-1] >= 0.01 - 1e-12
    assert profile.surviving[-1] == profile.trials


def test_probe_is_reproducible(circle):
    _, lam, _, dynamics, _ = circle
    first = plaque_expansiveness_probe(lam, dynamics, eps=0.2, trial_count=8, seed=11)
    second = plaque_expansiveness_probe(lam, dynamics, eps=0.2, trial_count=8, seed=11)
    assert first.to_dict() == second.to_dict()


def test_rotations_keep_plaques_of_full_size(circle):
    _, lam, _, dynamics, _ = circle
    growth = plaque_growth_check(lam, dynamics, eps=0.2, steps=3)
    assert growth.passed
    assert growth.delta == 0.2


def test_doubling_needs_smaller_plaques(doubling):
    _, lam, _, dynamics, _ = doubling
    growth = plaque_growth_check(lam, dynamics, eps=0.2, steps=3)
    assert growth.passed
    assert growth.delta <= 0.05 + 1e-15
