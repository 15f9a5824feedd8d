"""Human-driver policies used to propagate HV states inside each branch.

A policy maps the HV state (and, for the interaction-aware ones, the AV
state) to an HV acceleration.  All variants share one saturated
proportional law so they can be compiled into the planner's rollout.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Sequence, Union

import numpy as np

from . import _kernels as K
from .dynamics import VehicleState


@dataclass(frozen=True)
class InteractionParams:
    """Gains and limits of the HV feedback law.

    d_ref: desired headway to the AV [m]
    k_v: speed-error gain [1/s]
    k_d: headway-error gain [1/s^2]
    b_max: largest HV braking the law will ever command [m/s^2]
    a_max: largest HV acceleration [m/s^2]
    react_distance: distance before the conflict point over which the HV's
        reaction to an AV merging ahead fades in [m]
    """

    d_ref: float = 20.0
    k_v: float = 1.0
    k_d: float = 0.25
    b_max: float = 4.0
    a_max: float = 2.0
    react_distance: float = 10.0

    def __post_init__(self):
        for name in ("d_ref", "k_v", "k_d", "b_max", "a_max", "react_distance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"InteractionParams.{name} must be positive")


@dataclass(frozen=True)
class ConstantSpeed:
    kind = "constant_speed"


@dataclass(frozen=True)
class VelocityTrack:
    v_ref: float
    params: InteractionParams = field(default_factory=InteractionParams)
    kind = "velocity_track"


@dataclass(frozen=True)
class VelocityAdapt:
    """Track ``v_ref`` but keep headway behind an AV that merges ahead."""

    v_ref: float
    params: InteractionParams = field(default_factory=InteractionParams)
    kind = "velocity_adapt"


@dataclass(frozen=True)
class Stop:
    """Track ``v_ref`` until the stop line makes the HV brake; halt at ``stop_s``."""

    stop_s: float
    v_ref: float
    params: InteractionParams = field(default_factory=InteractionParams)
    kind = "stop"


@dataclass(frozen=True)
class Cross:
    """Keep (or return to) ``v_ref`` through the conflict region."""

    v_ref: float
    params: InteractionParams = field(default_factory=InteractionParams)
    kind = "cross"


Policy = Union[ConstantSpeed, VelocityTrack, VelocityAdapt, Stop, Cross]

_CODES = {
    ConstantSpeed: K.CONSTANT_SPEED,
    VelocityTrack: K.VELOCITY_TRACK,
    VelocityAdapt: K.VELOCITY_ADAPT,
    Stop: K.STOP,
    Cross: K.CROSS,
}
_BY_NAME = {cls.kind: cls for cls in _CODES}


def encode(policy: Policy, s_conflict: float) -> tuple[int, np.ndarray]:
    """Compile a policy into the (code, parameter vector) the kernels use."""
    p = np.zeros(K.N_PARAMS)
    code = _CODES[type(policy)]
    if code == K.CONSTANT_SPEED:
        return code, p
    ip = policy.params
    p[K.P_VREF] = policy.v_ref
    p[K.P_KV] = ip.k_v
    p[K.P_KD] = ip.k_d
    p[K.P_DREF] = ip.d_ref
    p[K.P_BMAX] = ip.b_max
    p[K.P_AMAX] = ip.a_max
    p[K.P_SCONF] = s_conflict
    p[K.P_REACT] = ip.react_distance
    if code == K.STOP:
        p[K.P_STOP] = policy.stop_s
    return code, p


def is_interactive(policy: Policy) -> bool:
    return isinstance(policy, VelocityAdapt)


def policy_accel(policy: Policy, hv: VehicleState, av: VehicleState, s_conflict: float) -> float:
    """HV acceleration commanded by ``policy``.

    For ``VelocityAdapt`` the command is the smaller of speed tracking and
    the headway law ``k_d (d - d_ref) + k_v (v_A - v_H)`` with
    ``d = s_A - s_H``, applied only while the AV is ahead and within
    ``react_distance`` of (or past) the conflict point.  Every command is
    clipped to ``[-b_max, a_max]``.
    """
    code, p = encode(policy, s_conflict)
    return float(K.policy_accel(code, p, hv.s, hv.v, av.s, av.v))


def hv_input(hv: VehicleState, av: VehicleState, s_br: float, before: Policy, after: Policy,
             s_conflict: float) -> float:
    """Piecewise HV policy: ``before`` until the branching point, ``after`` from it on."""
    active = before if hv.s < s_br else after
    return policy_accel(active, hv, av, s_conflict)


def predicted_hv_braking(leg: Sequence[VehicleState], dt: float) -> float:
    """Largest deceleration implied by consecutive HV states of a plan leg."""
    if len(leg) < 2:
        raise ValueError("need at least two states to infer braking")
    v = np.array([x.v for x in leg])
    return float(max(0.0, np.max(-(np.diff(v)) / dt)))


def policy_to_dict(policy: Policy) -> dict:
    out = {"kind": policy.kind}
    for f in fields(policy):
        value = getattr(policy, f.name)
        if f.name == "params":
            out.update(asdict(value))
        else:
            out[f.name] = value
    return out


def policy_from_dict(data: dict) -> Policy:
    data = dict(data)
    try:
        cls = _BY_NAME[data.pop("kind")]
    except KeyError as exc:
        raise ValueError(f"unknown or missing policy kind {exc}") from None
    if cls is ConstantSpeed:
        if data:
            raise ValueError(f"constant_speed takes no parameters, got {sorted(data)}")
        return ConstantSpeed()
    names = {f.name for f in fields(InteractionParams)}
    ip = InteractionParams(**{k: data.pop(k) for k in list(data) if k in names})
    policy = cls(params=ip, **data)
    if policy.v_ref < 0:
        raise ValueError(f"v_ref must be non-negative, got {policy.v_ref}")
    return policy
