"""Comparison planners built on the same transcription as Branch MPC.

* Robust: one input sequence for every branch, worst-case branch cost, all
  branch constraints enforced.  Replans on the true branch once it is
  observed.
* Prescient: plans on the true branch from the first step.
* Contingency: cost on the nominal branch only; the other branches stay
  feasible but cost nothing.  The nominal branch is the first conflict-free
  outcome (e.g. a green light), else the most probable one.
"""
from __future__ import annotations

from .config import ScenarioConfig
from .dynamics import VehicleState
from .planner import BranchPlan, Knowledge, Planner


def robust_plan(config: ScenarioConfig, av: VehicleState | None = None,
                hv: VehicleState | None = None, knowledge: Knowledge | None = None,
                step: int = 0) -> BranchPlan:
    return _plan(config, "robust", av, hv, knowledge, step)


def prescient_plan(config: ScenarioConfig, true_branch: int, av: VehicleState | None = None,
                   hv: VehicleState | None = None, step: int = 0) -> BranchPlan:
    """``true_branch`` is the child id (1..J) of the realised outcome."""
    return _plan(config, "prescient", av, hv, Knowledge(truth=true_branch), step)


def contingency_plan(config: ScenarioConfig, av: VehicleState | None = None,
                     hv: VehicleState | None = None, knowledge: Knowledge | None = None,
                     step: int = 0) -> BranchPlan:
    return _plan(config, "contingency", av, hv, knowledge, step)


def _plan(config, mode, av, hv, knowledge, step):
    av = config.av if av is None else av
    hv = config.hv if hv is None else hv
    return Planner(config, mode).plan(av, hv, step, knowledge)
