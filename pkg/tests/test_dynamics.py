import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchmpc.dynamics import DiscretizationParams, VehicleState, rollout, step


def euler_oracle(state, inputs, dt, substeps=100):
    """Semi-analytic sub-stepping: piecewise-constant u, stop detection per sub-step."""
    s, v = state.s, state.v
    out = [(s, v)]
    h = dt / substeps
    for u in inputs:
        for _ in range(substeps):
            if v + u * h >= 0:
                s += v * h + 0.5 * u * h * h
                v += u * h
            else:
                s += v * v / (-2 * u)
                v = 0.0
        out.append((s, v))
    return out


@pytest.mark.parametrize("state,u,dt,expected", [
    ((0, 10), 0, 0.1, (1.0, 10)),
    ((0, 10), 2, 0.1, (1.01, 10.2)),
    ((0, 0.1), -2, 0.1, (0.0025, 0.0)),
])
def test_step_examples(state, u, dt, expected):
    out = step(VehicleState(*state), u, dt)
    assert out.s == pytest.approx(expected[0], abs=1e-12)
    assert out.v == pytest.approx(expected[1], abs=1e-12)


def test_stop_truncation_matches_oracle():
    got = step(VehicleState(0, 0.1), -2, 0.1)
    (s, v), = euler_oracle(VehicleState(0, 0.1), [-2], 0.1)[1:]
    assert got.s == pytest.approx(s, abs=1e-12) and got.v == v


def test_rollout_examples():
    states = rollout(VehicleState(0, 5), [0, 0, 0], 1)
    assert [x.as_tuple() for x in states] == [(0, 5), (5, 5), (10, 5), (15, 5)]
    states = rollout(VehicleState(0, 0), [1, 1], 1)
    assert [x.as_tuple() for x in states] == [(0, 0), (0.5, 1), (2, 2)]


@pytest.mark.parametrize("seed", range(5))
def test_rollout_matches_substepped_oracle(seed):
    rng = np.random.default_rng(seed)
    x0 = VehicleState(rng.uniform(0, 50), rng.uniform(0, 15))
    inputs = rng.uniform(-4, 3, 50)
    got = rollout(x0, inputs, 0.2)
    ref = euler_oracle(x0, inputs, 0.2)
    err = max(abs(a.s - b[0]) for a, b in zip(got, ref))
    assert err <= 1e-9
    assert max(abs(a.v - b[1]) for a, b in zip(got, ref)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(s=st.floats(-100, 100), v=st.floats(0, 30), u=st.floats(-10, 10), dt=st.floats(1e-3, 1))
def test_never_reverses(s, v, u, dt):
    out = step(VehicleState(s, v), u, dt)
    assert out.v >= 0
    assert out.s >= s


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-4, 3), min_size=2, max_size=20), st.integers(1, 19))
def test_rollout_composes(inputs, cut):
    cut = min(cut, len(inputs) - 1)
    x0 = VehicleState(0.0, 5.0)
    whole = rollout(x0, inputs, 0.2)
    head = rollout(x0, inputs[:cut], 0.2)
    tail = rollout(head[-1], inputs[cut:], 0.2)
    assert whole == head + tail[1:]


@pytest.mark.parametrize("state,u,dt", [
    (VehicleState(math.nan, 0), 0, 0.1),
    (VehicleState(0, 1), math.inf, 0.1),
    (VehicleState(0, 1), 0, 0.0),
    (VehicleState(0, -1), 0, 0.1),
])
def test_step_rejects_bad_input(state, u, dt):
    with pytest.raises(ValueError):
        step(state, u, dt)


def test_rollout_rejects_empty():
    with pytest.raises(ValueError):
        rollout(VehicleState(0, 1), [], 0.1)


def test_discretization_validation():
    DiscretizationParams(0.2, 1)
    with pytest.raises(ValueError):
        DiscretizationParams(0, 10)
    with pytest.raises(ValueError):
        DiscretizationParams(0.2, 0)
