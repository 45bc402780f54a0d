import numpy as np
import pytest
from numpy.testing import assert_allclose

from persistlam.errors import InputError
from persistlam.hyperbolic import (
    build_stable_lamination,
    build_unstable_lamination,
    persist_hyperbolic,
    splitting_frames,
    strong_stable_alignment,
    thicken,
)
from persistlam.models import GridConfig
from persistlam.scenarios import get_scenario
from persistlam.tangent import coordinate_splitting
from tests.conftest import build

TORUS_GRID = GridConfig(nodes=16, secondary_nodes=8, depth=1, thick_nodes=9)
HORSESHOE_GRID = GridConfig(nodes=16, depth=3, thick_nodes=9)


@pytest.fixture(scope="module")
def torus_result():
    scenario, lam, _, dynamics, cfg = build("torus", TORUS_GRID)
    result = persist_hyperbolic(scenario.system(), lam, scenario.splitting(), dynamics, cfg,
                                thick_nodes=TORUS_GRID.thick_nodes, scenario=scenario.name)
    return scenario, lam, result


def test_thickening_adds_a_disk_axis(circle):
    _, lam, _, _, _ = circle
    thick = thicken(lam, coordinate_splitting(2, [0], []).stable, 1, 0.1, 9, name="thick")
    assert thick.d == 2
    assert thick.points.shape == (1, 64, 9, 2)
    assert_allclose(thick.points[0, :, 4], lam.points[0], atol=1e-15, rtol=0)
    assert_allclose(thick.points[0, 0, 0], [-0.1, 0.0], atol=1e-15, rtol=0)


def test_thickening_needs_an_odd_disk_grid(circle):
    _, lam, _, _, _ = circle
    with pytest.raises(InputError):
        thicken(lam, coordinate_splitting(2, [0], []).stable, 1, 0.1, 10, name="thick")


def test_splitting_frames_span_the_normal_directions():
    scenario, lam, _, _, _ = build("torus", TORUS_GRID)
    frames = splitting_frames(lam, scenario.splitting())
    assert frames.matrices.shape == (2, 16 * 8, 4, 2)
    assert_allclose(np.abs(frames.matrices[0, 0]), np.eye(4)[:, 2:], atol=1e-12, rtol=0)


def test_torus_persists_as_the_intersection(torus_result):
    scenario, lam, result = torus_result
    assert result.stable_report.converged
    assert result.unstable_report.converged
    assert result.min_singular > 1e-3
    assert_allclose(result.section.values, scenario.oracle(lam), atol=1e-3, rtol=0)
    assert result.invariance_residual <= 1e-3


def test_torus_unstable_direction_is_exact_without_interpolation(torus_result):
    scenario, lam, result = torus_result
    assert_allclose(result.section.values[..., 0], scenario.oracle(lam)[..., 0], atol=1e-9, rtol=0)


def test_one_sided_splitting_runs_the_plain_transform(circle):
    scenario, lam, _, dynamics, cfg = circle
    result = persist_hyperbolic(scenario.system(), lam, scenario.splitting(), dynamics, cfg)
    assert result.stable is None and result.stable_report is None
    assert result.unstable_report.converged
    assert_allclose(result.section.values, scenario.oracle(lam), atol=1e-9, rtol=0)


def test_unstable_lamination_needs_an_inverse(doubling):
    scenario, lam, _, dynamics, cfg = doubling
    with pytest.raises(InputError):
        build_unstable_lamination(scenario.system(), lam, scenario.splitting(), dynamics, cfg)


def test_henon_stable_hint_is_the_kernel_at_zero_jacobian():
    scenario = get_scenario("henon", {"b": 0.0})
    lam = scenario.build_lamination(GridConfig(nodes=16, secondary_nodes=8, depth=1))
    alignment = strong_stable_alignment(scenario.system(), lam, scenario.splitting().stable, samples=32)
    assert alignment <= 1e-10


def test_torus_result_does_not_depend_on_the_thread_count(torus_result):
    scenario, lam, serial = torus_result
    _, _, _, dynamics, cfg = build("torus", TORUS_GRID)
    threaded = persist_hyperbolic(scenario.system(), lam, scenario.splitting(), dynamics,
                                  cfg.model_copy(update={"threads": 3}),
                                  thick_nodes=TORUS_GRID.thick_nodes, scenario=scenario.name)
    assert np.array_equal(threaded.section.values, serial.section.values)
    assert threaded.stable_report.model_dump() == serial.stable_report.model_dump()
    assert threaded.unstable_report.model_dump() == serial.unstable_report.model_dump()


def test_horseshoe_stable_leaves_follow_the_stable_directions():
    scenario, lam, _, dynamics, cfg = build("horseshoe", HORSESHOE_GRID, eps=0.0)
    stable = build_stable_lamination(scenario.system(), lam, scenario.splitting(), dynamics, cfg,
                                     thick_nodes=HORSESHOE_GRID.thick_nodes, scenario=scenario.name)
    assert stable.report.converged
    assert stable.inclusion_gap() <= 1e-10
    points = stable.immersion().at_nodes().reshape(len(lam.codes), lam.nodes_per_leaf, 9, 3)
    tangent = points[:, :, 5] - points[:, :, 3]
    tangent /= np.linalg.norm(tangent, axis=-1, keepdims=True)
    sine = np.linalg.norm(np.cross(tangent, scenario.stable_directions(lam)), axis=-1)
    assert np.max(sine) <= 1e-3


def test_horseshoe_persists_to_the_perturbed_periodic_points():
    scenario, lam, _, dynamics, cfg = build("horseshoe", HORSESHOE_GRID)
    result = persist_hyperbolic(scenario.system(), lam, scenario.splitting(), dynamics, cfg,
                                thick_nodes=HORSESHOE_GRID.thick_nodes, scenario=scenario.name)
    assert result.stable_report.converged
    assert result.unstable_report.converged
    assert result.min_singular > 1e-3
    assert_allclose(result.section.values, scenario.oracle(lam), atol=1e-6, rtol=0)
