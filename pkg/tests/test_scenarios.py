import numpy as np
import pytest
from numpy.testing import assert_allclose

from persistlam.errors import InputError, SchemeError
from persistlam.models import GridConfig, Pipeline, Variant
from persistlam.scenarios import CATALOG, coded_periodic_orbits, get_scenario


def test_catalog_names():
    assert set(CATALOG) == {
        "circle", "planar_circle", "solenoid", "doubling", "torus", "henon", "endomorphism", "identity",
        "figure_eight", "horseshoe",
    }
    for name, cls in CATALOG.items():
        assert cls.name == name
        assert cls.description


def test_unknown_scenario_and_parameter():
    with pytest.raises(InputError):
        get_scenario("pendulum")
    with pytest.raises(InputError) as info:
        get_scenario("circle", {"mu": 2.0})
    assert "known" in info.value.to_dict()["context"]


def test_parameters_merge_over_defaults():
    scenario = get_scenario("circle", {"eps": 0.2})
    assert scenario.params["eps"] == 0.2
    assert scenario.params["lam"] == 0.5
    updated = scenario.with_params(lam=0.25)
    assert updated.params == {**scenario.params, "lam": 0.25}
    assert scenario.params["lam"] == 0.5


def test_variants_follow_the_normal_behaviour():
    assert get_scenario("circle").variant == Variant.CONTRACTED
    assert get_scenario("doubling").variant == Variant.EXPANDED
    assert get_scenario("doubling").pipeline == Pipeline.EXPANDED


def test_unperturbed_maps_drop_the_perturbation():
    f = get_scenario("circle").unperturbed()
    assert f.params["eps"] == 0.0
    x = np.array([[0.0, 1.3]])
    assert_allclose(f.rule(x, f.params)[0], [0.0, 1.3 + np.pi / 4.0], atol=1e-15, rtol=0)


def test_circle_oracle_is_invariant():
    scenario = get_scenario("circle")
    lam = scenario.build_lamination(GridConfig(nodes=64))
    x = scenario.oracle(lam)[0, :, 0]
    theta = lam.leaf_params()[:, 0]
    sys = scenario.system()
    image = sys.rule(np.stack([x, theta], axis=-1), sys.params)
    # alpha is eight cells
    assert_allclose(image[:, 0], np.roll(x, -8), atol=1e-14, rtol=0)


def test_doubling_oracle_is_invariant():
    scenario = get_scenario("doubling")
    lam = scenario.build_lamination(GridConfig(nodes=256))
    y = scenario.oracle(lam)[0, :, 0]
    theta = lam.leaf_params()[:, 0]
    sys = scenario.system()
    image = sys.rule(np.stack([theta, y], axis=-1), sys.params)
    assert_allclose(image[:, 1], y[(2 * np.arange(256)) % 256], atol=1e-12, rtol=0)


def test_doubling_oracle_needs_a_rigid_base():
    scenario = get_scenario("doubling", {"base_eps": 0.01})
    assert scenario.oracle(scenario.build_lamination(GridConfig(nodes=64))) is None


@pytest.mark.parametrize("name,grid", [
    ("circle", GridConfig(nodes=16)),
    ("planar_circle", GridConfig(nodes=16)),
    ("doubling", GridConfig(nodes=16)),
    ("identity", GridConfig(nodes=16)),
    ("figure_eight", GridConfig(nodes=16)),
    ("horseshoe", GridConfig(nodes=16, depth=2)),
    ("solenoid", GridConfig(nodes=16, depth=2)),
])
def test_frames_match_the_lamination(name, grid):
    scenario = get_scenario(name)
    lam = scenario.build_lamination(grid)
    frames = scenario.frames(lam)
    assert frames.matrices.shape == (len(lam.codes), lam.nodes_per_leaf, lam.space.n, lam.normal_dim)
    codes = np.zeros(lam.nodes_per_leaf, dtype=int)
    image_codes, image_u = scenario.dynamics(lam).forward(codes, lam.leaf_params())
    assert image_u.shape == lam.leaf_params().shape
    assert np.all((image_codes >= 0) & (image_codes < len(lam.codes)))


def test_solenoid_oracle_has_one_row_per_code():
    scenario = get_scenario("solenoid")
    lam = scenario.build_lamination(GridConfig(nodes=16, depth=3))
    assert len(lam.codes) == 8
    assert scenario.oracle(lam).shape == (8, lam.nodes_per_leaf, 1)


def test_scenarios_without_a_family():
    assert get_scenario("circle").family() is None
    assert get_scenario("henon").family() is not None


def test_coded_orbits_are_periodic_with_their_itinerary():
    scenario = get_scenario("horseshoe")
    words = scenario.words(4)
    c = -6.0 + np.linspace(-0.5, 0.5, 5)
    x = coded_periodic_orbits(words, c, 0.1)
    assert x.shape == (16, 4, 5)
    assert np.all((x > 0) == (words[:, :, None] == 1))
    image = x ** 2 + c + 0.1 * np.roll(x, 1, axis=1)
    assert_allclose(image, np.roll(x, -1, axis=1), atol=1e-12, rtol=0)


def test_coded_orbits_need_a_horseshoe():
    with pytest.raises(SchemeError):
        coded_periodic_orbits(np.array([[0, 1]]), np.array([0.5]), 0.1)


def test_horseshoe_shift_rotates_the_itinerary():
    scenario = get_scenario("horseshoe")
    lam = scenario.build_lamination(GridConfig(nodes=8, depth=3))
    dynamics = scenario.dynamics(lam)
    codes = np.arange(len(lam.codes))
    u = np.zeros((codes.size, 1))
    ahead, same_u = dynamics.forward(codes, u)
    assert [lam.codes[c].symbols for c in ahead] == [code.symbols[1:] + code.symbols[:1] for code in lam.codes]
    assert_allclose(same_u, u, atol=0, rtol=0)
    back, _ = dynamics.inverse(ahead, u)
    assert np.array_equal(back, codes)


def test_horseshoe_oracle_is_invariant():
    scenario = get_scenario("horseshoe")
    lam = scenario.build_lamination(GridConfig(nodes=16, depth=3))
    frames = scenario.frames(lam)
    moved = lam.flat_points() + np.einsum("cpnk,cpk->cpn", frames.matrices, scenario.oracle(lam))
    sys = scenario.system()
    ahead, _ = scenario.dynamics(lam).forward(np.arange(len(lam.codes)), np.zeros((len(lam.codes), 1)))
    assert_allclose(sys.rule(moved, sys.params), moved[ahead], atol=1e-10, rtol=0)
    assert np.max(np.abs(scenario.oracle(lam))) > 1e-3
