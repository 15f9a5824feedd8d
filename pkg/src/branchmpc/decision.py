"""Probabilities of the HV's post-branching policies.

Two modes: a fixed probability vector, or a crossing-frequency model in
which the chance that the human keeps going through the conflict grows
logistically with the AV's time-to-arrival at the moment the human
decides.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import VehicleState

FIXED = "fixed"
CROSSING_FREQUENCY = "crossing_frequency"

# floor on the terminal speed used to extrapolate arrival beyond the plan
MIN_EXTRAPOLATION_SPEED = 0.1


@dataclass(frozen=True)
class DecisionModelParams:
    """Parameters of the decision model.

    beta: logistic slope [1/s]
    tta_mid: AV time-to-arrival at which crossing and stopping are equally
        likely [s]
    cross, stop: outcome names the crossing-frequency mode maps onto
    """

    mode: str = FIXED
    probabilities: tuple[float, ...] = ()
    beta: float = 1.5
    tta_mid: float = 4.0
    cross: str = "cross"
    stop: str = "stop"

    def __post_init__(self):
        if self.mode not in (FIXED, CROSSING_FREQUENCY):
            raise ValueError(f"unknown decision mode {self.mode!r}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.tta_mid > 0:
            raise ValueError("tta_mid must be positive")
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        if self.mode == FIXED:
            check_distribution(self.probabilities)


def check_distribution(probs: Sequence[float]) -> None:
    if len(probs) == 0:
        raise ValueError("probability vector is empty")
    if any(not (0.0 <= p <= 1.0) for p in probs):
        raise ValueError(f"probabilities must lie in [0, 1], got {list(probs)}")
    if abs(math.fsum(probs) - 1.0) > 1e-9:
        raise ValueError(f"probabilities must sum to 1, got {math.fsum(probs)}")


def crossing_probability(tta_av: float, params: DecisionModelParams) -> float:
    """Probability that the human crosses ahead of an AV arriving in ``tta_av`` s."""
    if not (math.isfinite(tta_av) and tta_av >= 0):
        raise ValueError(f"time-to-arrival must be finite and >= 0, got {tta_av}")
    z = params.beta * (tta_av - params.tta_mid)
    # numerically stable logistic
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def time_to_arrival(av_states: Sequence[VehicleState], s_conflict: float, dt: float,
                    decision_step: int) -> float:
    """AV time-to-arrival at ``s_conflict`` as seen at ``decision_step``.

    The first crossing of the trajectory after the decision step is found
    by linear interpolation.  Without a crossing, the remaining distance is
    covered at the terminal speed (floored at 0.1 m/s).
    """
    s = np.array([x.s for x in av_states], dtype=float)
    if not 0 <= decision_step < len(s):
        raise ValueError(f"decision step {decision_step} outside trajectory of {len(s)} states")
    if s[decision_step] >= s_conflict:
        return 0.0
    for m in range(decision_step + 1, len(s)):
        if s[m] >= s_conflict:
            frac = (s_conflict - s[m - 1]) / (s[m] - s[m - 1])
            return (m - 1 - decision_step + frac) * dt
    v_end = max(av_states[-1].v, MIN_EXTRAPOLATION_SPEED)
    return (len(s) - 1 - decision_step) * dt + (s_conflict - s[-1]) / v_end


def branch_probabilities(outcome_names: Sequence[str], params: DecisionModelParams, *,
                         av_prefix: Sequence[VehicleState] | None = None,
                         s_conflict: float | None = None, dt: float | None = None,
                         decision_step: int = 0) -> list[float]:
    """Probability of each child branch, in ``outcome_names`` order.

    ``av_prefix`` is the planned AV trajectory the human observes; the
    human decides at ``decision_step``.  Only the crossing-frequency mode
    reads it.
    """
    names = list(outcome_names)
    if params.mode == FIXED:
        if len(params.probabilities) != len(names):
            raise ValueError(f"{len(params.probabilities)} fixed probabilities for "
                             f"{len(names)} branches")
        return list(params.probabilities)
    if len(names) != 2 or set(names) != {params.cross, params.stop}:
        raise ValueError(f"crossing-frequency mode needs exactly the branches "
                         f"{params.cross!r} and {params.stop!r}, got {names}")
    if av_prefix is None or s_conflict is None or dt is None:
        raise ValueError("crossing-frequency mode needs the AV plan prefix, s_conflict and dt")
    tta = time_to_arrival(av_prefix, s_conflict, dt, decision_step)
    p_cross = crossing_probability(tta, params)
    return [p_cross if n == params.cross else 1.0 - p_cross for n in names]
