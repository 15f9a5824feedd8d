"""Longitudinal double-integrator vehicle model shared by every agent."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from . import _kernels


@dataclass(frozen=True)
class VehicleState:
    """Position ``s`` [m] along the centerline path and speed ``v`` [m/s]."""

    s: float
    v: float

    def as_tuple(self) -> tuple[float, float]:
        return (self.s, self.v)


@dataclass(frozen=True)
class DiscretizationParams:
    dt: float
    horizon_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.horizon_steps < 1:
            raise ValueError(f"horizon_steps must be >= 1, got {self.horizon_steps}")


def step(state: VehicleState, u: float, dt: float) -> VehicleState:
    """Advance one sampling period under constant acceleration ``u``.

    The update is the exact solution of ``s'' = u`` over ``dt``.  If the
    vehicle would reverse, it stops at ``t* = v / -u`` and stays put.
    """
    if not (math.isfinite(state.s) and math.isfinite(state.v) and math.isfinite(u)):
        raise ValueError(f"non-finite step input: state={state}, u={u}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if state.v < 0:
        raise ValueError(f"negative speed {state.v}; vehicles do not reverse")
    s, v = _kernels.step_exact(float(state.s), float(state.v), float(u), float(dt))
    return VehicleState(s, v)


def rollout(initial: VehicleState, inputs: Sequence[float], dt: float) -> list[VehicleState]:
    """States visited from ``initial`` under ``inputs``; length ``len(inputs) + 1``."""
    if len(inputs) == 0:
        raise ValueError("rollout needs at least one input")
    states = [initial]
    for u in inputs:
        states.append(step(states[-1], u, dt))
    return states
