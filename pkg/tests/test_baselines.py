from dataclasses import replace

import numpy as np
import pytest

from branchmpc.baselines import contingency_plan, prescient_plan, robust_plan
from branchmpc.planner import Planner, collision_margin, crossing_time


def test_robust_stops_before_light(traffic_light):
    for probs in [(0.9, 0.1), (0.1, 0.9)]:
        cfg = replace(traffic_light, decision=replace(traffic_light.decision, probabilities=probs))
        plan = robust_plan(cfg)
        assert np.array_equal(plan.inputs[0], plan.inputs[1])
        assert plan.s_a.max() <= cfg.geometry.s_conflict


def test_robust_follows_every_merge_branch(merging):
    plan = robust_plan(merging)
    sc, dt = merging.geometry.s_conflict, merging.grid.dt
    for j in range(3):
        assert crossing_time(plan.s_a[j], sc, dt) > crossing_time(plan.s_h[j], sc, dt)
    for j in range(3):
        m = collision_margin(plan.s_a[j], plan.s_h[j], merging)
        assert m.min() >= 0


def test_robust_single_branch_equals_branch(junction):
    a = robust_plan(junction)
    b = Planner(junction, "branch").plan(junction.av, junction.hv)
    assert abs(a.cost - b.cost) <= 1e-6
    assert np.allclose(a.inputs, b.inputs, atol=1e-4)


def test_prescient_green_cruises(traffic_light):
    plan = prescient_plan(traffic_light, 1)
    assert plan.leg_names == ["green"]
    assert np.allclose(plan.v_a, traffic_light.weights.v_ref_av, atol=1e-4)


def test_prescient_red_stops_smoothly(traffic_light):
    plan = prescient_plan(traffic_light, 2)
    assert plan.s_a.max() <= traffic_light.geometry.s_conflict
    assert plan.inputs.min() > traffic_light.constraints.u_min + 1.0


def test_contingency_nominal_cruises_and_brakes_abruptly(traffic_light):
    plan = contingency_plan(traffic_light)
    green, red = plan.leg("green"), plan.leg("red")
    assert np.allclose(plan.v_a[green], traffic_light.weights.v_ref_av, atol=1e-3)
    assert plan.s_a[red].max() <= traffic_light.geometry.s_conflict
    branch = Planner(traffic_light, "branch").plan(traffic_light.av, None)
    assert plan.inputs[red].min() < branch.inputs[branch.leg("red")].min()


def test_contingency_ignores_probabilities(traffic_light):
    a = contingency_plan(traffic_light)
    cfg = replace(traffic_light, decision=replace(traffic_light.decision, probabilities=(0.1, 0.9)))
    b = contingency_plan(cfg)
    assert np.array_equal(a.inputs, b.inputs)


def test_contingency_single_branch_equals_prescient(junction):
    a = contingency_plan(junction)
    b = prescient_plan(junction, 1)
    assert abs(a.cost - b.cost) <= 1e-6


def test_contingency_matches_branch_as_red_vanishes(traffic_light):
    c = contingency_plan(traffic_light)
    gaps = []
    for p in [0.1, 0.01, 0.001]:
        cfg = replace(traffic_light, decision=replace(traffic_light.decision,
                                                      probabilities=(1 - p, p)))
        b = Planner(cfg, "branch").plan(cfg.av, None)
        gaps.append(abs(b.leg_costs[b.leg("green")] - c.leg_costs[c.leg("green")]))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1.0
