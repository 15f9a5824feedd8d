"""Single-level scenario trees: one root branch and J children.

Step indices are relative to the start of the current plan.  The root
covers states ``0..t_br`` (inputs ``0..t_br-1``); every child covers states
``t_br+1..horizon`` and its first input is the one applied at ``t_br``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

from . import dynamics
from .config import ScenarioConfig
from .dynamics import VehicleState
from .policies import ConstantSpeed, Policy, policy_accel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    horizon_steps: int
    start_step: int = 0

    @classmethod
    def from_config(cls, config: ScenarioConfig, start_step: int = 0) -> "TimeGrid":
        return cls(config.grid.dt, config.grid.steps, start_step)


@dataclass(frozen=True)
class BranchNode:
    id: int
    name: str
    policy: Policy
    probability: float
    t_start: int
    t_end: int
    parent: int | None
    conflict: bool = True


@dataclass(frozen=True)
class ScenarioTree:
    root: BranchNode
    children: tuple[BranchNode, ...]
    t_br: int
    dt_obs_steps: int
    grid: TimeGrid
    truth: int | None = None

    @property
    def horizon(self) -> int:
        return self.grid.horizon_steps

    @property
    def collapsed(self) -> bool:
        return self.truth is not None

    @property
    def probabilities(self) -> list[float]:
        return [c.probability for c in self.children]

    def child(self, branch_id: int) -> BranchNode:
        for c in self.children:
            if c.id == branch_id:
                return c
        raise KeyError(f"no branch with id {branch_id}")

    def with_probabilities(self, probs: Sequence[float]) -> "ScenarioTree":
        if len(probs) != len(self.children):
            raise ValueError(f"{len(probs)} probabilities for {len(self.children)} branches")
        if abs(math.fsum(probs) - 1.0) > 1e-9 or any(not 0 <= p <= 1 for p in probs):
            raise ValueError(f"not a probability vector: {list(probs)}")
        kids = tuple(replace(c, probability=float(p)) for c, p in zip(self.children, probs))
        return replace(self, children=kids)

    def validate(self) -> None:
        if not 0 <= self.t_br <= self.horizon:
            raise ValueError(f"t_br={self.t_br} outside [0, {self.horizon}]")
        if self.dt_obs_steps < 0 or self.t_br + self.dt_obs_steps > self.horizon:
            raise ValueError("observation window does not fit in the horizon")
        if abs(math.fsum(self.probabilities) - 1.0) > 1e-9:
            raise ValueError("child probabilities do not sum to 1")


def estimate_branching_step(state: VehicleState, root_policy: Policy, s_br: float,
                            grid: TimeGrid, *, other: VehicleState | None = None,
                            s_conflict: float = math.inf) -> int:
    """First step at which ``state`` rolled forward under ``root_policy`` reaches ``s_br``.

    Returns 0 if already there and ``grid.horizon_steps`` if never reached
    inside the horizon (the tree then degenerates to a single path).  The
    other agent is held at constant speed for interactive root policies.
    """
    if state.s >= s_br:
        return 0
    other = other if other is not None else VehicleState(-math.inf, 0.0)
    x = state
    for k in range(1, grid.horizon_steps + 1):
        u = policy_accel(root_policy, x, other, s_conflict)
        x = dynamics.step(x, u, grid.dt)
        if math.isfinite(other.s):
            other = dynamics.step(other, 0.0, grid.dt)
        if x.s >= s_br:
            return k
    return grid.horizon_steps


def build_tree(config: ScenarioConfig, grid: TimeGrid, hv: VehicleState | None,
               av: VehicleState, *, branch_step: int | None = None,
               obs_steps: int | None = None,
               probabilities: Sequence[float] | None = None) -> ScenarioTree:
    """Root branch plus one child per configured outcome.

    ``branch_step`` overrides the estimated branching step (the planner
    does this when the AV's own progress triggers the branching).
    ``obs_steps`` defaults to the configured observation delay; it is shrunk
    to fit the horizon with a warning.  Without explicit ``probabilities``
    the fixed-mode vector is installed, or a uniform placeholder in
    crossing-frequency mode.
    """
    if not config.outcomes:
        raise ValueError("scenario has no post-branching outcomes")
    if branch_step is None:
        if config.trigger == "hv":
            branch_step = estimate_branching_step(
                hv, config.root_policy, config.geometry.s_br, grid,
                other=av, s_conflict=config.geometry.s_conflict)
        else:
            branch_step = estimate_branching_step(av, ConstantSpeed(), config.geometry.s_br, grid)
    t_br = int(branch_step)
    n_obs = config.obs_steps if obs_steps is None else int(obs_steps)
    if t_br + n_obs > grid.horizon_steps:
        fitted = max(0, grid.horizon_steps - t_br)
        if t_br < grid.horizon_steps:
            log.warning("observation window of %d steps does not fit after t_br=%d; using %d",
                        n_obs, t_br, fitted)
        n_obs = fitted

    if probabilities is None:
        if config.decision.mode == "fixed":
            probabilities = config.decision.probabilities
        else:
            probabilities = [1.0 / len(config.outcomes)] * len(config.outcomes)

    root = BranchNode(0, "root", config.root_policy, 1.0 if t_br > 0 else 0.0,
                      0, t_br, None, conflict=True)
    children = tuple(
        BranchNode(i + 1, o.name, o.policy, float(p), t_br + 1, grid.horizon_steps, 0, o.conflict)
        for i, (o, p) in enumerate(zip(config.outcomes, probabilities)))
    tree = ScenarioTree(root, children, t_br, n_obs, grid)
    tree.validate()
    return tree


def collapse_to_truth(tree: ScenarioTree, true_branch: int, t_now: int | None = None) -> ScenarioTree:
    """Give the true branch probability 1 and every other branch (and the root) 0.

    ``true_branch`` is a child id (1..J).  ``t_now`` is the absolute step;
    the truth cannot be known before the observation window has elapsed.
    """
    tree.child(true_branch)
    if t_now is not None:
        earliest = tree.grid.start_step + tree.t_br + tree.dt_obs_steps
        if t_now < earliest:
            raise ValueError(f"truth observed at step {t_now}, before step {earliest}")
    kids = tuple(replace(c, probability=1.0 if c.id == true_branch else 0.0)
                 for c in tree.children)
    return replace(tree, root=replace(tree.root, probability=0.0), children=kids,
                   truth=true_branch)
