"""Closed-loop simulation and Monte-Carlo sweeps.

The ground-truth HV follows the root policy until it passes ``s_br`` and
its hidden post-decision policy afterwards.  The hidden outcome is the
single random draw of a trial.  It comes from a stream seeded by
``(seed, trial)`` and is made when the triggering agent reaches ``s_br``.
The planner learns it ``dt_obs`` later.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .config import ScenarioConfig
from .dynamics import VehicleState, step as dyn_step
from .planner import MODES, Knowledge, Planner, collision_margin, crossing_time, extract_control
from .policies import hv_input

log = logging.getLogger(__name__)

# an HV slower than this after committing to its policy is treated as stopped
STOPPED_SPEED = 1e-3


@dataclass(frozen=True)
class SimConfig:
    scenario: ScenarioConfig
    planner: str = "branch"
    truth: tuple[float, ...] = ()
    trials: int = 1
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        if self.planner not in MODES:
            raise ValueError(f"unknown planner {self.planner!r}; expected one of {MODES}")
        if self.trials < 1:
            raise ValueError("trial count must be at least 1")
        if self.truth:
            if len(self.truth) != len(self.scenario.outcomes):
                raise ValueError("truth distribution does not match the outcomes")
            if abs(math.fsum(self.truth) - 1.0) > 1e-9 or min(self.truth) < 0:
                raise ValueError(f"truth distribution must sum to 1, got {self.truth}")

    @property
    def truth_distribution(self) -> tuple[float, ...]:
        return self.truth or self.scenario.truth_distribution

    @property
    def steps(self) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return int(round(self.scenario.sim.duration / self.scenario.grid.dt))


@dataclass
class Event:
    step: int
    kind: str
    detail: str = ""


@dataclass
class TrialResult:
    planner: str
    trial: int
    seed: int
    truth: str | None
    t: np.ndarray
    av_s: np.ndarray
    av_v: np.ndarray
    av_u: np.ndarray            # one shorter than the states
    hv_s: np.ndarray            # NaN without an HV
    hv_v: np.ndarray
    hv_u: np.ndarray
    stage_costs: np.ndarray
    total_cost: float
    events: list[Event] = field(default_factory=list)
    collision: bool = False
    min_margin: float = math.inf
    fallbacks: int = 0
    max_hv_braking: float = 0.0

    @property
    def unsafe(self) -> bool:
        return self.collision

    def event_step(self, kind: str) -> int | None:
        for e in self.events:
            if e.kind == kind:
                return e.step
        return None


@dataclass
class SweepResult:
    """Mean closed-loop cost per (probability, planner) cell."""

    grid: list[float]
    planners: list[str]
    rows: list[dict]
    trials: int
    seed: int
    collisions: int = 0
    fallbacks: int = 0

    def mean(self, p: float, planner: str) -> float:
        return self.cell(p, planner)["mean_cost"]

    def cell(self, p: float, planner: str) -> dict:
        for r in self.rows:
            if r["planner"] == planner and math.isclose(r["probability"], p, abs_tol=1e-12):
                return r
        raise KeyError((p, planner))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream per trial; the same for every planner."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def draw_truth(distribution: Sequence[float], seed: int, trial: int) -> int:
    """Index of the realised outcome for a trial."""
    return int(trial_rng(seed, trial).choice(len(distribution), p=np.asarray(distribution)))


def stage_cost(config: ScenarioConfig, s: float, s_next: float, v_next: float, u: float,
               u_prev: float) -> float:
    w = config.weights
    dv = v_next - w.v_ref_av
    return (w.w_v * dv * dv + w.w_u * u * u + w.w_j * (u - u_prev) ** 2
            - w.w_p * (s_next - s))


def run_closed_loop(config: ScenarioConfig, planner: str = "branch", seed: int = 0,
                    trial: int = 0, *, truth: Sequence[float] | None = None,
                    truth_index: int | None = None, max_steps: int | None = None) -> TrialResult:
    """Simulate one trial with receding-horizon replanning.

    ``truth_index`` forces the realised outcome instead of drawing it.
    The run ends once the AV is past the conflict region at its reference
    speed and the HV (if any) is past it or stopped, or after
    ``max_steps``.
    """
    sim = SimConfig(config, planner, tuple(truth or ()), 1, seed, max_steps)
    dist = sim.truth_distribution
    if truth_index is None:
        truth_index = draw_truth(dist, seed, trial)
    outcome = config.outcomes[truth_index]
    truth_id = truth_index + 1
    g = config.geometry
    dt = config.grid.dt
    clear_s = g.s_conflict + g.conflict_length
    obs = config.obs_steps

    pl = Planner(config, planner)
    knowledge = Knowledge(truth=truth_id if planner == "prescient" else None)
    av = config.av
    hv = config.hv
    u_prev = 0.0
    events: list[Event] = []
    av_s, av_v, av_u = [av.s], [av.v], []
    hv_s = [math.nan if hv is None else hv.s]
    hv_v = [math.nan if hv is None else hv.v]
    hv_u = []
    costs = []
    fallbacks = 0
    crossed_at = None

    def trigger_state():
        return av if config.trigger == "av" else hv

    for k in range(sim.steps):
        if crossed_at is None and trigger_state().s >= g.s_br:
            crossed_at = k
            events.append(Event(k, "branch", outcome.name))
            if planner != "prescient":
                knowledge.crossed_at = k
        if (crossed_at is not None and knowledge.truth is None
                and k >= crossed_at + obs):
            knowledge.truth = truth_id
            events.append(Event(k, "detect", outcome.name))

        plan = pl.plan(av, hv, k, knowledge, u_prev)
        if plan.fallback:
            fallbacks += 1
            events.append(Event(k, "fallback", plan.report))
        u = extract_control(plan)

        if hv is not None:
            uh = hv_input(hv, av, g.s_br, config.root_policy, outcome.policy, g.s_conflict)
            hv_next = dyn_step(hv, uh, dt)
        av_next = dyn_step(av, u, dt)
        costs.append(stage_cost(config, av.s, av_next.s, av_next.v, u, u_prev))

        av, u_prev = av_next, u
        av_s.append(av.s)
        av_v.append(av.v)
        av_u.append(u)
        if hv is not None:
            hv = hv_next
            hv_s.append(hv.s)
            hv_v.append(hv.v)
            hv_u.append(uh)
        else:
            hv_s.append(math.nan)
            hv_v.append(math.nan)
            hv_u.append(math.nan)

        if _finished(config, av, hv, crossed_at, clear_s):
            break

    av_s, hv_s = np.array(av_s), np.array(hv_s)
    margin = collision_margin(av_s, None if hv is None else hv_s, config, outcome.conflict)
    min_margin = float(margin.min())
    collision = min_margin < 0
    for name, s in (("av_conflict", av_s), ("hv_conflict", hv_s)):
        if np.all(np.isnan(s)):
            continue
        t_c = crossing_time(s, g.s_conflict, dt)
        if math.isfinite(t_c):
            events.append(Event(int(math.ceil(t_c / dt - 1e-9)), name, f"{t_c:.6f}"))
    if collision:
        events.append(Event(int(np.argmin(margin)), "collision", f"{min_margin:.6f}"))
        log.error("ground-truth collision in trial %d (%s, truth %s)", trial, planner,
                  outcome.name)
    events.sort(key=lambda e: e.step)

    hv_v_arr = np.array(hv_v)
    braking = 0.0
    if hv is not None and len(hv_v_arr) > 1:
        braking = float(max(0.0, np.max(-np.diff(hv_v_arr) / dt)))
    costs = np.array(costs)
    return TrialResult(
        planner=planner, trial=trial, seed=seed, truth=outcome.name,
        t=np.arange(len(av_s)) * dt, av_s=av_s, av_v=np.array(av_v), av_u=np.array(av_u),
        hv_s=hv_s, hv_v=hv_v_arr, hv_u=np.array(hv_u), stage_costs=costs,
        total_cost=float(costs.sum()), events=events, collision=collision,
        min_margin=min_margin, fallbacks=fallbacks, max_hv_braking=braking)


def _finished(config, av, hv, crossed_at, clear_s) -> bool:
    if crossed_at is None or av.s < clear_s:
        return False
    if abs(av.v - config.weights.v_ref_av) >= config.sim.settle_tol:
        return False
    return hv is None or hv.s >= clear_s or hv.v < STOPPED_SPEED


def sweep_distribution(config: ScenarioConfig, p: float, outcome: str | None = None) -> list[float]:
    """Distribution with probability ``p`` on ``outcome`` (default: the last
    one) and the rest split over the others in proportion to the configured
    truth distribution."""
    names = config.outcome_names
    i = names.index(outcome) if outcome is not None else len(names) - 1
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    base = np.array(config.truth_distribution, dtype=float)
    base[i] = 0.0
    rest = base / base.sum() if base.sum() > 0 else np.full(len(names), 1.0 / (len(names) - 1))
    rest[i] = 0.0
    out = (1.0 - p) * rest
    out[i] = p
    return list(out)


def _memo_key(config: ScenarioConfig, planner: str, truth_index: int):
    # robust and prescient plans do not read the probabilities
    if planner in ("robust", "prescient"):
        config = replace(config, decision=replace(config.decision, probabilities=tuple(
            1.0 / len(config.outcomes) for _ in config.outcomes)))
    return planner, truth_index, config.with_truth([1.0 / len(config.outcomes)] *
                                                    len(config.outcomes)).digest()


def run_sweep(config: ScenarioConfig, grid: Sequence[float], trials: int, seed: int = 0,
              planners: Sequence[str] = MODES, outcome: str | None = None,
              progress=None) -> SweepResult:
    """Average closed-loop cost over ``trials`` per grid cell and planner.

    The grid value is both the planner's fixed probability and the truth
    probability of ``outcome``.  Trial ``i`` uses the same truth draw for
    every planner.  A trial is fully determined by its realised outcome,
    so each distinct (planner, outcome, planning problem) is simulated once
    and reused.
    """
    grid = [float(p) for p in grid]
    if not grid:
        raise ValueError("probability grid is empty")
    if trials < 1:
        raise ValueError("trial count must be at least 1")
    if config.decision.mode != "fixed":
        raise ValueError("sweeps vary fixed branch probabilities; decision mode must be 'fixed'")
    cache: dict = {}
    rows = []
    collisions = 0
    fallbacks = 0
    for p in grid:
        dist = sweep_distribution(config, p, outcome)
        cell_cfg = replace(config, decision=replace(config.decision, probabilities=tuple(dist)))
        cell_cfg = cell_cfg.with_truth(dist)
        draws = [draw_truth(dist, seed, i) for i in range(trials)]
        for planner in planners:
            costs = np.empty(trials)
            for i, ti in enumerate(draws):
                key = _memo_key(cell_cfg, planner, ti)
                if key not in cache:
                    res = run_closed_loop(cell_cfg, planner, seed, i, truth_index=ti)
                    cache[key] = res
                    collisions += res.collision
                    fallbacks += res.fallbacks
                    if progress is not None:
                        progress(p, planner, res)
                costs[i] = cache[key].total_cost
            rows.append({"probability": p, "planner": planner,
                         "mean_cost": float(costs.mean()),
                         "std": float(costs.std(ddof=1)) if trials > 1 else 0.0,
                         "n": trials})
    return SweepResult(grid, list(planners), rows, trials, seed, collisions, fallbacks)
