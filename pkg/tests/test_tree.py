import math
from dataclasses import replace

import pytest

from branchmpc.dynamics import VehicleState
from branchmpc.policies import ConstantSpeed, VelocityTrack
from branchmpc.tree import TimeGrid, build_tree, collapse_to_truth, estimate_branching_step


def test_branching_step_examples():
    grid = TimeGrid(1.0, 20)
    assert estimate_branching_step(VehicleState(40, 10), ConstantSpeed(), 50, grid) == 1
    assert estimate_branching_step(VehicleState(0, 0), ConstantSpeed(), 50, grid) == 20
    assert estimate_branching_step(VehicleState(60, 0), ConstantSpeed(), 50, grid) == 0


def test_branching_step_matches_scan():
    grid = TimeGrid(0.2, 50)
    k = estimate_branching_step(VehicleState(0, 7.3), ConstantSpeed(), 50, grid)
    scan = next(i for i in range(51) if 7.3 * i * 0.2 >= 50)
    assert k == scan


def test_traffic_light_tree(traffic_light):
    tree = build_tree(traffic_light, TimeGrid.from_config(traffic_light), None, traffic_light.av)
    assert [c.name for c in tree.children] == ["green", "red"]
    assert tree.root.probability == 1.0
    assert tree.probabilities == [0.5, 0.5]
    assert all(c.t_start == tree.t_br + 1 and c.parent == 0 for c in tree.children)


def test_merging_tree(merging):
    grid = TimeGrid.from_config(merging)
    tree = build_tree(merging, grid, merging.hv, merging.av)
    assert [c.name for c in tree.children] == ["fast", "keep", "slow"]
    # HV at 50 m, 10 m/s, s_br = 60 m: one second
    assert tree.t_br == 5
    assert tree.dt_obs_steps == 3


def test_observation_window_shrinks(merging, caplog):
    grid = TimeGrid.from_config(merging)
    tree = build_tree(merging, grid, merging.hv, merging.av, branch_step=grid.horizon_steps - 1)
    assert tree.dt_obs_steps == 1
    assert "does not fit" in caplog.text


def test_empty_outcomes_rejected(merging):
    with pytest.raises(ValueError):
        build_tree(replace(merging, outcomes=()), TimeGrid.from_config(merging), merging.hv,
                   merging.av)


def test_tiling(merging):
    tree = build_tree(merging, TimeGrid.from_config(merging), merging.hv, merging.av)
    for c in tree.children:
        covered = list(range(tree.root.t_start, tree.root.t_end + 1)) + \
            list(range(c.t_start, c.t_end + 1))
        assert covered == list(range(tree.horizon + 1))


def test_collapse(traffic_light, merging):
    tree = build_tree(traffic_light, TimeGrid.from_config(traffic_light), None, traffic_light.av)
    red = collapse_to_truth(tree, 2)
    assert red.probabilities == [0.0, 1.0] and red.root.probability == 0.0
    assert collapse_to_truth(red, 2) == red
    m = build_tree(merging, TimeGrid.from_config(merging), merging.hv, merging.av)
    assert collapse_to_truth(m, 3).probabilities == [0.0, 0.0, 1.0]
    with pytest.raises(KeyError):
        collapse_to_truth(m, 7)


def test_collapse_not_before_observation(merging):
    tree = build_tree(merging, TimeGrid.from_config(merging, start_step=4), merging.hv, merging.av)
    earliest = 4 + tree.t_br + tree.dt_obs_steps
    with pytest.raises(ValueError):
        collapse_to_truth(tree, 1, t_now=earliest - 1)
    assert collapse_to_truth(tree, 1, t_now=earliest).truth == 1


def test_with_probabilities(merging):
    tree = build_tree(merging, TimeGrid.from_config(merging), merging.hv, merging.av)
    assert tree.with_probabilities([0.2, 0.3, 0.5]).probabilities == [0.2, 0.3, 0.5]
    with pytest.raises(ValueError):
        tree.with_probabilities([0.2, 0.3, 0.6])
    with pytest.raises(ValueError):
        tree.with_probabilities([0.5, 0.5])


def test_past_branching_point(merging):
    hv = VehicleState(65, 10)
    tree = build_tree(merging, TimeGrid.from_config(merging), hv, merging.av)
    assert tree.t_br == 0 and tree.root.probability == 0.0
    assert math.isclose(sum(tree.probabilities), 1.0, abs_tol=1e-12)
