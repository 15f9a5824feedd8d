"""Branch MPC over a single-level scenario tree.

The program is single-shooting in the AV inputs.  Each child branch is a
*leg*: the root inputs, the observation-window inputs and the child's own
inputs laid end to end.  Legs share decision variables wherever the tree
says the AV cannot yet tell the branches apart, so the observation
constraint holds exactly.  HV states are never decision variables; they
are produced by rolling each leg's HV policy against the AV leg.

Collision and courtesy constraints enter as quadratic penalties with
continuation, followed by an exact post-check.  Who goes first through
the conflict is a combinatorial choice, so the solver is restarted over
monotone orderings of the branches and the cheapest feasible result is
kept.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .config import ScenarioConfig
from .decision import CROSSING_FREQUENCY, branch_probabilities
from .dynamics import VehicleState
from .policies import encode
from .tree import ScenarioTree, TimeGrid, build_tree, collapse_to_truth, estimate_branching_step

log = logging.getLogger(__name__)

MODES = ("branch", "robust", "prescient", "contingency")

_CONFLICT_KIND = {"traffic_light": K.C_STOPLINE, "merging": K.C_MERGE,
                  "intersection": K.C_INTERSECTION}

# slack on the exact post-check; keeps 1e-12 round-off from flagging a plan
CHECK_TOL = 1e-9
# the AV must be this far past s_br at the branching step it plans with
TRIGGER_MARGIN = 0.05
# planned HV braking is held this far below b_max so the exact check passes
COURTESY_MARGIN = 0.05
MU_GROWTH = 2.0
MAX_RESTARTS = 20


@dataclass
class Knowledge:
    """What the planner may use at the current step.

    crossed_at: absolute step at which the triggering agent reached s_br
    truth: child id (1..J) of the realised outcome, once observed (or known
        from the start, for the prescient planner)
    """

    crossed_at: int | None = None
    truth: int | None = None


@dataclass
class BranchPlan:
    tree: ScenarioTree
    leg_ids: list[int]
    leg_names: list[str]
    probabilities: np.ndarray
    inputs: np.ndarray          # (J, H) AV inputs per leg
    s_a: np.ndarray             # (J, H+1)
    v_a: np.ndarray
    s_h: np.ndarray
    v_h: np.ndarray
    u_h: np.ndarray             # (J, H)
    cost: float                 # aggregated stage cost, no penalties
    leg_costs: np.ndarray
    feasible: bool = True
    fallback: bool = False
    iterations: int = 0
    penalty_residual: float = 0.0
    mu: float = 0.0
    ordering: tuple[bool, ...] = ()
    rounds: int = 1
    converged: bool = True
    report: str = ""

    def leg(self, name: str) -> int:
        return self.leg_names.index(name)

    def av_states(self, j: int) -> list[VehicleState]:
        return [VehicleState(s, v) for s, v in zip(self.s_a[j], self.v_a[j])]

    def hv_states(self, j: int) -> list[VehicleState]:
        return [VehicleState(s, v) for s, v in zip(self.s_h[j], self.v_h[j])]


class Transcription:
    """The nonlinear program for one tree, one planner mode and one ordering.

    ``index[j, k]`` is the decision variable that drives leg ``j`` at step
    ``k``; ``pack``/``unpack`` move between the decision vector and the
    (J, H) input matrix.
    """

    def __init__(self, config: ScenarioConfig, tree: ScenarioTree, mode: str,
                 av: VehicleState, hv: VehicleState | None, *, u_prev: float = 0.0,
                 av_leads: Sequence[bool] | None = None, trigger_step: int = -1,
                 mu: float | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown planner mode {mode!r}")
        tree.validate()
        self.config = config
        self.tree = tree
        self.mode = mode
        self.dt = config.grid.dt
        H = tree.horizon
        self.horizon = H

        kids = list(tree.children)
        if tree.collapsed:
            legs = [tree.child(tree.truth)]
        elif mode == "branch":
            legs = [c for c in kids if c.probability > 0.0]
        else:
            legs = kids
        self.legs = legs
        J = len(legs)

        t_br = min(tree.t_br, H)
        n_obs = tree.dt_obs_steps
        index = np.empty((J, H), dtype=np.int64)
        if mode == "robust":
            index[:] = np.arange(H)
            n = H
        else:
            shared = min(H, t_br + n_obs)
            index[:, :shared] = np.arange(shared)
            n = shared
            for j in range(J):
                own = H - shared
                index[j, shared:] = n + np.arange(own)
                n += own
        self.index = index
        self.n_vars = n
        self._counts = np.bincount(index.ravel(), minlength=n).astype(float)

        g = config.geometry
        kind = _CONFLICT_KIND[config.kind]
        self.codes = np.zeros((J, H), dtype=np.int64)
        self.params = np.zeros((J, H, K.N_PARAMS))
        root_code, root_p = encode(tree.root.policy, g.s_conflict)
        for j, leg in enumerate(legs):
            code, p = encode(leg.policy, g.s_conflict)
            self.codes[j, :t_br] = root_code
            self.params[j, :t_br] = root_p
            self.codes[j, t_br:] = code
            self.params[j, t_br:] = p
        self.kinds = np.array([kind if leg.conflict else K.C_NONE for leg in legs], dtype=np.int64)
        if hv is None:
            self.kinds[self.kinds != K.C_STOPLINE] = K.C_NONE
        self.av_leads = np.zeros(J, dtype=np.bool_)
        if av_leads is not None:
            self.av_leads[:] = av_leads

        probs = np.array([leg.probability for leg in legs])
        self.probabilities = probs
        self.use_max = mode == "robust"
        if mode == "contingency" and not tree.collapsed:
            nominal = nominal_branch(config, tree)
            self.leg_weights = np.array([1.0 if leg.id == nominal else 0.0 for leg in legs])
        elif tree.collapsed:
            self.leg_weights = np.ones(J)
        else:
            self.leg_weights = probs.copy()
        self.enforce = np.ones(J, dtype=np.bool_)

        w = config.weights
        c = config.constraints
        self.x0_a = np.array([av.s, av.v], dtype=float)
        self.x0_h = np.zeros(2) if hv is None else np.array([hv.s, hv.v], dtype=float)
        self.cost_p = np.zeros(K.N_COST)
        self.cost_p[[K.W_V, K.W_U, K.W_J, K.W_P, K.V_REF, K.U_PREV]] = (
            w.w_v, w.w_u, w.w_j, w.w_p, w.v_ref_av, u_prev)
        self.cons_p = np.zeros(K.N_CONS)
        self.cons_p[[K.K_SCONF, K.K_LCONF, K.K_DSAFE, K.K_BUF, K.K_BCOURTESY, K.K_VMAX,
                     K.K_MU, K.K_TRIGGER_S]] = (
            g.s_conflict, g.conflict_length, c.d_safe, c.buffer, c.b_max - COURTESY_MARGIN, c.v_max,
            w.penalty_weight if mu is None else mu, g.s_br + TRIGGER_MARGIN)
        self.trigger_step = int(trigger_step)
        self.bounds = [(c.u_min, c.u_max)] * n
        self.n_evals = 0

    @property
    def mu(self) -> float:
        return float(self.cons_p[K.K_MU])

    @mu.setter
    def mu(self, value: float) -> None:
        self.cons_p[K.K_MU] = value

    def unpack(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float)[self.index]

    def pack(self, U: np.ndarray) -> np.ndarray:
        """Average of the per-leg inputs that map to each variable."""
        sums = np.bincount(self.index.ravel(), weights=np.asarray(U, float).ravel(),
                           minlength=self.n_vars)
        return sums / self._counts

    def _kernel(self, U):
        return K.tree_objective(U, self.x0_a, self.x0_h, self.codes, self.params, self.dt,
                                self.leg_weights, self.use_max, self.enforce, self.kinds,
                                self.av_leads, self.cost_p, self.cons_p, self.trigger_step)

    def evaluate_cost(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        """Penalised objective and its gradient w.r.t. the decision vector."""
        self.n_evals += 1
        obj, _, _, gU = self._kernel(self.unpack(z))
        if not math.isfinite(obj):
            raise FloatingPointError(self._locate_nonfinite(z))
        grad = np.bincount(self.index.ravel(), weights=gU.ravel(), minlength=self.n_vars)
        return obj, grad

    def stage_costs(self, z: np.ndarray) -> tuple[float, np.ndarray, float]:
        """(aggregated stage cost, stage cost per leg, penalty) at ``z``."""
        obj, stage, penalty, _ = self._kernel(self.unpack(z))
        return obj - penalty, stage, penalty

    def rollout(self, z: np.ndarray):
        return K.rollout_legs(self.unpack(z), self.x0_a, self.x0_h, self.codes, self.params,
                              self.dt)

    def _locate_nonfinite(self, z) -> str:
        s_a, v_a, s_h, v_h, _ = self.rollout(z)
        for j, leg in enumerate(self.legs):
            for k in range(self.horizon + 1):
                if not all(math.isfinite(a[j, k]) for a in (s_a, v_a, s_h, v_h)):
                    return f"non-finite state in branch {leg.name!r} at step {k}"
        return "non-finite objective"


def nominal_branch(config: ScenarioConfig, tree: ScenarioTree) -> int:
    """Branch a contingency planner optimises for: the first conflict-free one,
    else the most probable (lowest id on ties)."""
    for c in tree.children:
        if not c.conflict:
            return c.id
    return max(tree.children, key=lambda c: (c.probability, -c.id)).id


def collision_margin(s_a: Sequence[float], s_h: Sequence[float] | None,
                     config: ScenarioConfig, conflict: bool = True) -> np.ndarray:
    """Exact per-step separation margin; negative means a collision.

    merging: ``|s_A - s_H| - d_safe`` once both are past ``s_conflict``;
    intersection: ``-d_safe`` when both occupy ``[s_conflict, s_conflict + L]``;
    traffic light: distance of the AV to the stop line.  ``inf`` where the
    constraint is inactive.
    """
    s_a = np.asarray(s_a, dtype=float)
    g = config.geometry
    d_safe = config.constraints.d_safe
    out = np.full(s_a.shape, np.inf)
    if not conflict:
        return out
    if config.kind == "traffic_light":
        return g.s_conflict - s_a
    s_h = np.asarray(s_h, dtype=float)
    if config.kind == "merging":
        both = (s_a >= g.s_conflict) & (s_h >= g.s_conflict)
        out[both] = np.abs(s_a - s_h)[both] - d_safe
    else:
        lo, hi = g.s_conflict, g.s_conflict + g.conflict_length
        both = (s_a >= lo) & (s_a <= hi) & (s_h >= lo) & (s_h <= hi)
        out[both] = -d_safe
    return out


def crossing_time(s: Sequence[float], s_conflict: float, dt: float) -> float:
    """Time at which a trajectory first reaches ``s_conflict`` (linear
    interpolation); ``inf`` if it never does."""
    s = np.asarray(s, dtype=float)
    if s[0] >= s_conflict:
        return 0.0
    hits = np.nonzero(s >= s_conflict)[0]
    if len(hits) == 0:
        return math.inf
    m = hits[0]
    return (m - 1 + (s_conflict - s[m - 1]) / (s[m] - s[m - 1])) * dt


def _post_check(tr: Transcription, s_a, v_a, s_h, v_h) -> tuple[bool, float]:
    """Exact feasibility of every enforced leg; returns (ok, worst violation)."""
    cfg = tr.config
    worst = 0.0
    for j, leg in enumerate(tr.legs):
        if not tr.enforce[j]:
            continue
        if tr.kinds[j] != K.C_NONE:
            margin = collision_margin(s_a[j, 1:], s_h[j, 1:], cfg, True)
            worst = max(worst, float(-margin.min()))
        if tr.kinds[j] in (K.C_MERGE, K.C_INTERSECTION):
            brake = float(np.max((v_h[j, :-1] - v_h[j, 1:]) / tr.dt))
            worst = max(worst, brake - cfg.constraints.b_max)
    if tr.trigger_step >= 0:
        worst = max(worst, cfg.geometry.s_br - float(s_a[0, tr.trigger_step]))
    return worst <= CHECK_TOL, worst


@dataclass
class _Result:
    z: np.ndarray
    cost: float
    feasible: bool
    residual: float
    iterations: int
    mu: float


def _minimize(tr: Transcription, z: np.ndarray, settings) -> tuple[np.ndarray, int]:
    """L-BFGS-B, restarted with fresh curvature memory after a failed line search."""
    iterations = 0
    for _ in range(MAX_RESTARTS):
        f0 = tr.evaluate_cost(z)[0]
        res = minimize(tr.evaluate_cost, z, jac=True, method="L-BFGS-B", bounds=tr.bounds,
                       options={"maxiter": settings.max_iter, "ftol": settings.ftol,
                                "gtol": settings.gtol, "maxcor": 20})
        iterations += int(res.nit)
        stalled = f0 - res.fun <= 1e-10 * max(1.0, abs(res.fun))
        z = res.x
        if res.success or stalled:
            break
    return z, iterations


def solve(tr: Transcription, z0: np.ndarray) -> _Result:
    """Box-constrained quasi-Newton solve with penalty continuation.

    The penalty weight grows by ``MU_GROWTH`` after every solve whose
    result fails the exact post-check, at most ``max_continuations`` times.
    Starting soft matters: a stiff penalty from a cold start traps the
    solver in poor local minima.  Returns the first feasible iterate, else
    the least violating one.
    """
    settings = tr.config.solver
    c = tr.config.constraints
    z = np.clip(np.asarray(z0, dtype=float), c.u_min, c.u_max)
    best: _Result | None = None
    iterations = 0
    for _ in range(settings.max_continuations + 1):
        z, n = _minimize(tr, z, settings)
        iterations += n
        s_a, v_a, s_h, v_h, _ = tr.rollout(z)
        ok, residual = _post_check(tr, s_a, v_a, s_h, v_h)
        cand = _Result(z.copy(), tr.stage_costs(z)[0], ok, residual, iterations, tr.mu)
        if best is None or _better(cand, best):
            best = cand
        if ok:
            break
        tr.mu = tr.mu * MU_GROWTH
    best.iterations = iterations
    return best


def _shift(U: np.ndarray) -> np.ndarray:
    out = np.empty_like(U)
    out[:, :-1] = U[:, 1:]
    out[:, -1] = U[:, -1]
    return out


class Planner:
    """Receding-horizon planner; one instance per closed-loop run.

    ``mode`` selects Branch MPC or one of the baselines:

    * ``branch`` - probability-weighted cost over all branches
    * ``robust`` - one input sequence for every branch, worst-case cost
    * ``prescient`` - plans on the true branch from the start
    * ``contingency`` - cost on the nominal branch only, every branch kept
      feasible
    """

    def __init__(self, config: ScenarioConfig, mode: str = "branch"):
        if mode not in MODES:
            raise ValueError(f"unknown planner mode {mode!r}; expected one of {MODES}")
        self.config = config
        self.mode = mode
        self._warm: dict[str, np.ndarray] = {}
        self._last_probs: list[float] | None = None
        self.last_plan: BranchPlan | None = None

    # tree construction ------------------------------------------------

    def _tree(self, av, hv, step, knowledge: Knowledge, branch_step=None) -> ScenarioTree:
        cfg = self.config
        grid = TimeGrid.from_config(cfg, step)
        truth = knowledge.truth
        if self.mode == "prescient":
            if truth is None:
                raise ValueError("the prescient planner needs the true branch")
            tree = build_tree(cfg, grid, hv, av, branch_step=0, obs_steps=0,
                              probabilities=_one_hot(len(cfg.outcomes), truth))
            return collapse_to_truth(tree, truth)
        if knowledge.crossed_at is not None:
            remaining = knowledge.crossed_at + cfg.obs_steps - step
            if truth is not None and remaining <= 0:
                tree = build_tree(cfg, grid, hv, av, branch_step=0, obs_steps=0,
                                  probabilities=_one_hot(len(cfg.outcomes), truth))
                return collapse_to_truth(tree, truth, step)
            return build_tree(cfg, grid, hv, av, branch_step=0, obs_steps=max(remaining, 0),
                              probabilities=self._probabilities_placeholder())
        return build_tree(cfg, grid, hv, av, branch_step=branch_step,
                          probabilities=self._probabilities_placeholder())

    def _probabilities_placeholder(self):
        cfg = self.config
        if cfg.decision.mode == CROSSING_FREQUENCY and self._last_probs is not None:
            return self._last_probs
        return None

    # single solve over restarts ----------------------------------------

    def _orderings(self, tr: Transcription) -> list[tuple[bool, ...]]:
        """Monotone leader assignments: the AV goes first on the branches
        where the HV reaches the conflict latest."""
        J = len(tr.legs)
        active = [j for j in range(J) if tr.kinds[j] in (K.C_MERGE, K.C_INTERSECTION)]
        if not active:
            return [tuple([False] * J)]
        U0 = np.zeros((J, tr.horizon))
        _, _, s_h, _, _ = K.rollout_legs(U0, tr.x0_a, tr.x0_h, tr.codes, tr.params, tr.dt)
        arrival = {j: crossing_time(s_h[j], self.config.geometry.s_conflict, tr.dt)
                   for j in active}
        order = sorted(active, key=lambda j: (-arrival[j], j))
        out = []
        for n_lead in range(len(active) + 1):
            leads = [False] * J
            for j in order[:n_lead]:
                leads[j] = True
            out.append(tuple(leads))
        return out

    def _initial_guesses(self, tr: Transcription, leads: tuple[bool, ...]) -> list[np.ndarray]:
        c = self.config.constraints
        guesses = []
        if self._warm:
            fallback = next(iter(self._warm.values()))
            U = np.stack([self._warm.get(leg.name, fallback) for leg in tr.legs])
            guesses.append(tr.pack(U))
        J = len(tr.legs)
        if any(tr.kinds[j] in (K.C_MERGE, K.C_INTERSECTION) for j in range(J)):
            U = np.empty((J, tr.horizon))
            for j in range(J):
                U[j] = 0.5 * c.u_max if leads[j] else 0.5 * c.u_min
            guesses.append(tr.pack(U))
        if not guesses:
            guesses.append(np.zeros(tr.n_vars))
        return guesses

    def _solve_tree(self, tree: ScenarioTree, av, hv, u_prev, trigger_step=-1):
        """Best result over orderings and initial guesses for a fixed tree."""
        best = None
        base = Transcription(self.config, tree, self.mode, av, hv, u_prev=u_prev,
                             trigger_step=trigger_step)
        for leads in self._orderings(base):
            for z0 in self._initial_guesses(base, leads):
                tr = Transcription(self.config, tree, self.mode, av, hv, u_prev=u_prev,
                                   av_leads=leads, trigger_step=trigger_step)
                res = solve(tr, z0)
                if best is None or _better(res, best[1]):
                    best = (tr, res)
                if res.feasible:
                    break
        return best

    def _solve_av_triggered(self, av, hv, step, knowledge, u_prev):
        """Search the branching step for scenarios where the AV's own
        progress reveals the outcome."""
        cfg = self.config
        H = cfg.grid.steps
        if self._warm:
            U = np.stack(list(self._warm.values()))[:1]
            s_a = K.rollout_legs(U, np.array([av.s, av.v]), np.zeros(2),
                                 np.zeros((1, H), dtype=np.int64), np.zeros((1, H, K.N_PARAMS)),
                                 cfg.grid.dt)[0][0]
            hits = np.nonzero(s_a >= cfg.geometry.s_br)[0]
            k0 = int(hits[0]) if len(hits) else H
        else:
            k0 = estimate_branching_step(av, _constant_speed(), cfg.geometry.s_br,
                                         TimeGrid.from_config(cfg, step))
        k0 = min(max(k0, 1), H)
        cache = {}

        def attempt(k):
            if k not in cache:
                tree = self._tree(av, hv, step, knowledge, branch_step=k)
                cache[k] = (tree, self._solve_tree(tree, av, hv, u_prev,
                                                   trigger_step=k if k < H else -1))
            return cache[k][1]

        best_k = k0
        attempt(k0)
        for direction in (1, -1):
            k = best_k + direction
            while 1 <= k <= H and len(cache) < 8:
                if _better(attempt(k)[1], cache[best_k][1][1]):
                    best_k = k
                    k += direction
                else:
                    break
        tree, (tr, res) = cache[best_k]
        return tree, tr, res

    # public -------------------------------------------------------------

    def plan(self, av: VehicleState, hv: VehicleState | None, step: int = 0,
             knowledge: Knowledge | None = None, u_prev: float = 0.0) -> BranchPlan:
        """Solve the planning problem at absolute step ``step``."""
        knowledge = knowledge or Knowledge()
        cfg = self.config
        rounds = 1
        converged = True
        if self._branching_ahead(knowledge):
            tree, tr, res = self._solve_av_triggered(av, hv, step, knowledge, u_prev)
        else:
            tree = self._tree(av, hv, step, knowledge)
            tr, res = self._solve_tree(tree, av, hv, u_prev)

        if (cfg.decision.mode == CROSSING_FREQUENCY and self.mode == "branch"
                and not tree.collapsed):
            tree, tr, res, rounds, converged = self._fixed_point(tree, tr, res, av, hv, u_prev)

        plan = self._make_plan(tr, res)
        plan.rounds = rounds
        plan.converged = converged
        if not res.feasible:
            plan = fallback_plan(tr, plan)
        self._remember(plan)
        self.last_plan = plan
        return plan

    def _branching_ahead(self, knowledge: Knowledge) -> bool:
        # robust plans never use the outcome, so it needs no information timing
        return (self.config.trigger == "av" and self.mode in ("branch", "contingency")
                and knowledge.crossed_at is None)

    def _fixed_point(self, tree, tr, res, av, hv, u_prev):
        """Alternate solving and re-evaluating the decision model."""
        cfg = self.config
        settings = cfg.solver
        probs = np.array(tree.probabilities)
        rounds = 1
        for rounds in range(1, settings.fixed_point_rounds + 1):
            new = np.array(self._decision_probabilities(tree, tr, res))
            if np.max(np.abs(new - probs)) < settings.fixed_point_tol:
                self._last_probs = list(new)
                return tree, tr, res, rounds, True
            probs = new
            tree = tree.with_probabilities(list(probs))
            self._last_probs = list(probs)
            tr, res = self._solve_tree(tree, av, hv, u_prev)
        new = np.array(self._decision_probabilities(tree, tr, res))
        converged = bool(np.max(np.abs(new - probs)) < settings.fixed_point_tol)
        return tree, tr, res, rounds, converged

    def _decision_probabilities(self, tree, tr, res) -> list[float]:
        cfg = self.config
        if tree.t_br == 0 and self._last_probs is not None:
            # the human has already decided; keep what was predicted for that moment
            return list(self._last_probs)
        s_a, v_a, _, _, _ = tr.rollout(res.z)
        prefix = [VehicleState(s, v) for s, v in zip(s_a[0, :tree.t_br + 1], v_a[0, :tree.t_br + 1])]
        return branch_probabilities([c.name for c in tree.children], cfg.decision,
                                    av_prefix=prefix, s_conflict=cfg.geometry.s_conflict,
                                    dt=cfg.grid.dt, decision_step=tree.t_br)

    def _make_plan(self, tr: Transcription, res: _Result) -> BranchPlan:
        s_a, v_a, s_h, v_h, u_h = tr.rollout(res.z)
        cost, stage, penalty = tr.stage_costs(res.z)
        return BranchPlan(
            tree=tr.tree, leg_ids=[leg.id for leg in tr.legs],
            leg_names=[leg.name for leg in tr.legs], probabilities=tr.probabilities.copy(),
            inputs=tr.unpack(res.z), s_a=s_a, v_a=v_a, s_h=s_h, v_h=v_h, u_h=u_h,
            cost=float(cost), leg_costs=stage.copy(), feasible=res.feasible,
            iterations=res.iterations, penalty_residual=float(res.residual), mu=res.mu,
            ordering=tuple(bool(x) for x in tr.av_leads))

    def _remember(self, plan: BranchPlan) -> None:
        shifted = _shift(plan.inputs)
        self._warm = {name: shifted[j] for j, name in enumerate(plan.leg_names)}

    def reset(self) -> None:
        self._warm = {}
        self._last_probs = None
        self.last_plan = None


def _better(a: _Result, b: _Result) -> bool:
    if a.feasible != b.feasible:
        return a.feasible
    if a.feasible:
        return a.cost < b.cost - 1e-12
    return a.residual < b.residual


def _one_hot(n: int, branch_id: int) -> list[float]:
    out = [0.0] * n
    out[branch_id - 1] = 1.0
    return out


def _constant_speed():
    from .policies import ConstantSpeed
    return ConstantSpeed()


def fallback_plan(tr: Transcription, plan: BranchPlan) -> BranchPlan:
    """Brake at the planner's deceleration limit on every leg."""
    c = tr.config.constraints
    U = np.full((len(tr.legs), tr.horizon), c.u_min)
    s_a, v_a, s_h, v_h, u_h = K.rollout_legs(U, tr.x0_a, tr.x0_h, tr.codes, tr.params, tr.dt)
    report = (f"no feasible plan (worst violation {plan.penalty_residual:.3g}); "
              f"braking at {c.u_min} m/s^2")
    log.warning(report)
    return replace(plan, inputs=U, s_a=s_a, v_a=v_a, s_h=s_h, v_h=v_h, u_h=u_h,
                   feasible=False, fallback=True, report=report)


def extract_control(plan: BranchPlan) -> float:
    """Input to apply now: the root's first input before branching, else the
    first input of the active child (true branch, or most probable with the
    lowest id on ties)."""
    if plan.inputs.size == 0:
        raise ValueError("empty plan")
    tree = plan.tree
    if tree.t_br > 0:
        return float(plan.inputs[0, 0])
    if tree.collapsed:
        j = plan.leg_ids.index(tree.truth)
    else:
        j = max(range(len(plan.leg_ids)),
                key=lambda i: (plan.probabilities[i], -plan.leg_ids[i]))
    return float(plan.inputs[j, 0])


def transcribe(config: ScenarioConfig, tree: ScenarioTree, av: VehicleState,
               hv: VehicleState | None, mode: str = "branch", **kwargs) -> Transcription:
    return Transcription(config, tree, mode, av, hv, **kwargs)


def probability_fixed_point(planner: Planner, av: VehicleState, hv: VehicleState | None,
                            step: int = 0, knowledge: Knowledge | None = None
                            ) -> tuple[BranchPlan, list[float]]:
    """Plan with decision-dependent probabilities; returns the plan and the
    probabilities it was solved with."""
    plan = planner.plan(av, hv, step, knowledge)
    return plan, list(plan.probabilities)
