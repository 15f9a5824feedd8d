from dataclasses import fields, replace

import numpy as np
import pytest

from branchmpc.config import from_dict, to_dict
from branchmpc.sim import SimConfig, draw_truth, run_closed_loop, run_sweep, sweep_distribution


def _same(a, b):
    for f in fields(a):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, np.ndarray):
            assert np.array_equal(x, y, equal_nan=True), f.name
        else:
            assert x == y, f.name


def test_seed_determinism(merging):
    a = run_closed_loop(merging, "branch", seed=7, trial=3)
    b = run_closed_loop(merging, "branch", seed=7, trial=3)
    _same(a, b)


def test_common_random_numbers():
    dist = (0.3, 0.4, 0.3)
    draws = [draw_truth(dist, 11, i) for i in range(200)]
    assert draws == [draw_truth(dist, 11, i) for i in range(200)]
    assert set(draws) == {0, 1, 2}
    assert draws != [draw_truth(dist, 12, i) for i in range(200)]


def test_trial_bookkeeping(merging):
    res = run_closed_loop(merging, "branch", truth_index=2)
    assert res.total_cost == pytest.approx(res.stage_costs.sum(), rel=1e-12)
    steps = [e.step for e in res.events]
    assert steps == sorted(steps)
    assert len(res.av_s) == len(res.av_u) + 1 == len(res.stage_costs) + 1
    assert not res.collision and res.fallbacks == 0


@pytest.mark.parametrize("truth", [0, 1, 2])
def test_detection_timing(merging, truth):
    res = run_closed_loop(merging, "branch", truth_index=truth)
    crossed = res.event_step("branch")
    assert res.hv_s[crossed] >= merging.geometry.s_br > res.hv_s[crossed - 1]
    assert res.event_step("detect") == crossed + merging.obs_steps


def test_prescient_green_never_slows(traffic_light):
    res = run_closed_loop(traffic_light, "prescient", truth_index=0)
    assert np.allclose(res.av_v, traffic_light.weights.v_ref_av, atol=1e-3)
    assert res.event_step("detect") is None


def test_robust_green_slows_unnecessarily(traffic_light):
    pres = run_closed_loop(traffic_light, "prescient", truth_index=0)
    rob = run_closed_loop(traffic_light, "robust", truth_index=0)
    assert rob.av_v.min() < traffic_light.weights.v_ref_av - 2.0
    assert rob.total_cost > pres.total_cost + 100


def test_red_light_is_respected(traffic_light):
    for planner in ("branch", "robust", "contingency", "prescient"):
        res = run_closed_loop(traffic_light, planner, truth_index=1)
        assert not res.collision
        assert res.av_s.max() <= traffic_light.geometry.s_conflict


def _with_hv_kind(cfg, kind):
    d = to_dict(cfg)
    for pol in [d["root_policy"]] + [o["policy"] for o in d["outcomes"]]:
        pol["kind"] = kind
    return from_dict(d)


def test_junction_interaction_closed_loop(junction):
    passive = run_closed_loop(_with_hv_kind(junction, "velocity_track"), "branch")
    active = run_closed_loop(junction, "branch")
    t = lambda r, kind: float(next(e.detail for e in r.events if e.kind == kind))
    assert t(passive, "av_conflict") > t(passive, "hv_conflict")
    assert t(active, "av_conflict") < t(active, "hv_conflict")
    assert active.max_hv_braking <= junction.constraints.b_max
    assert not passive.collision and not active.collision


def test_sweep_shape_and_limits(traffic_light):
    res = run_sweep(traffic_light, [0.0, 0.5, 1.0], 4, seed=1)
    assert len(res.rows) == 12 and all(r["n"] == 4 for r in res.rows)
    assert all(np.isfinite(r["mean_cost"]) for r in res.rows)
    m = lambda p, pl: res.mean(p, pl)
    assert m(0.0, "contingency") == pytest.approx(m(0.0, "prescient"), abs=1e-6)
    assert m(0.0, "branch") == pytest.approx(m(0.0, "prescient"), abs=1e-6)
    assert m(1.0, "robust") == pytest.approx(m(1.0, "prescient"), rel=0.02)
    assert res.collisions == 0


def test_sweep_distribution(merging):
    assert sweep_distribution(merging, 0.5) == pytest.approx([0.5 * 3 / 7, 0.5 * 4 / 7, 0.5])
    with pytest.raises(ValueError):
        sweep_distribution(merging, 1.5)


def test_sim_config_validation(merging):
    with pytest.raises(ValueError):
        SimConfig(merging, "magic")
    with pytest.raises(ValueError):
        SimConfig(merging, trials=0)
    with pytest.raises(ValueError):
        SimConfig(merging, truth=(0.5, 0.6, 0.0))
    with pytest.raises(ValueError):
        run_sweep(merging, [], 1)
