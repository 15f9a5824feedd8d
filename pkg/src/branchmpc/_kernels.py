"""Compiled scalar kernels shared by the Python API and the planner.

Everything here operates on plain floats and flat numpy arrays so numba can
compile it.  The public modules (``dynamics``, ``policies``, ``planner``)
wrap these functions; nothing outside the package should import them.
"""
import numpy as np
from numba import njit

# policy codes
CONSTANT_SPEED = 0
VELOCITY_TRACK = 1
VELOCITY_ADAPT = 2
STOP = 3
CROSS = 4

# policy parameter layout
P_VREF = 0
P_KV = 1
P_KD = 2
P_DREF = 3
P_BMAX = 4
P_AMAX = 5
P_SCONF = 6
P_REACT = 7
P_STOP = 8
N_PARAMS = 9

# conflict kinds
C_NONE = 0
C_MERGE = 1
C_INTERSECTION = 2
C_STOPLINE = 3

# cost-parameter layout
W_V = 0
W_U = 1
W_J = 2
W_P = 3
V_REF = 4
U_PREV = 5
N_COST = 6

# constraint-parameter layout
K_SCONF = 0
K_LCONF = 1
K_DSAFE = 2
K_BUF = 3
K_BCOURTESY = 4
K_VMAX = 5
K_MU = 6
K_TRIGGER_S = 7
N_CONS = 8


@njit(cache=True)
def step_exact(s, v, u, dt):
    """Zero-order-hold double integrator that halts instead of reversing."""
    v_next = v + u * dt
    if v_next >= 0.0:
        return s + v * dt + 0.5 * u * dt * dt, v_next
    # u < 0 here; the vehicle stops after v / -u seconds
    return s - v * v / (2.0 * u), 0.0


@njit(cache=True)
def step_exact_grad(s, v, u, dt):
    """Partials (ds'/dv, ds'/du, dv'/dv, dv'/du); ds'/ds is always 1."""
    if v + u * dt >= 0.0:
        return dt, 0.5 * dt * dt, 1.0, dt
    return -v / u, v * v / (2.0 * u * u), 0.0, 0.0


@njit(cache=True)
def _clamp_with_slope(x, lo, hi):
    if x < lo:
        return lo, 0.0
    if x > hi:
        return hi, 0.0
    return x, 1.0


@njit(cache=True)
def policy_accel_grad(code, p, s_h, v_h, s_a, v_a):
    """HV acceleration and its partials w.r.t. (s_h, v_h, s_a, v_a)."""
    if code == CONSTANT_SPEED:
        return 0.0, 0.0, 0.0, 0.0, 0.0

    k_v = p[P_KV]
    track = k_v * (p[P_VREF] - v_h)
    # raw command and its partials
    raw = track
    d_sh = 0.0
    d_vh = -k_v
    d_sa = 0.0
    d_va = 0.0

    if code == VELOCITY_ADAPT:
        gap = s_a - s_h
        react = p[P_REACT]
        if gap > 0.0:
            # reaction fades in as the AV approaches the conflict point
            x = (s_a - p[P_SCONF] + react) / react
            if x > 0.0:
                alpha = 1.0
                d_alpha = 0.0
                if x < 1.0:
                    alpha = x
                    d_alpha = 1.0 / react
                head = p[P_KD] * (gap - p[P_DREF]) + k_v * (v_a - v_h)
                if head < track:
                    diff = head - track
                    # raw = track + alpha * (head - track)
                    raw = track + alpha * diff
                    d_sh = alpha * (-p[P_KD])
                    # head and track share the -k_v slope in v_h
                    d_sa = alpha * p[P_KD] + d_alpha * diff
                    d_va = alpha * k_v
    elif code == STOP:
        head = p[P_KD] * (p[P_STOP] - s_h) - k_v * v_h
        if head < track:
            raw = head
            d_sh = -p[P_KD]
            d_vh = -k_v

    u, slope = _clamp_with_slope(raw, -p[P_BMAX], p[P_AMAX])
    return u, slope * d_sh, slope * d_vh, slope * d_sa, slope * d_va


@njit(cache=True)
def policy_accel(code, p, s_h, v_h, s_a, v_a):
    u, _, _, _, _ = policy_accel_grad(code, p, s_h, v_h, s_a, v_a)
    return u


@njit(cache=True)
def rollout_legs(U, x0_a, x0_h, codes, params, dt):
    """Simulate AV and closed-loop HV along every leg of a trajectory tree.

    U has shape (J, H); codes/params give the HV policy active at each step
    of each leg.  Returns (s_a, v_a, s_h, v_h) of shape (J, H + 1) and the
    HV inputs of shape (J, H).
    """
    n_legs, horizon = U.shape
    s_a = np.empty((n_legs, horizon + 1))
    v_a = np.empty((n_legs, horizon + 1))
    s_h = np.empty((n_legs, horizon + 1))
    v_h = np.empty((n_legs, horizon + 1))
    u_h = np.empty((n_legs, horizon))
    for j in range(n_legs):
        s_a[j, 0] = x0_a[0]
        v_a[j, 0] = x0_a[1]
        s_h[j, 0] = x0_h[0]
        v_h[j, 0] = x0_h[1]
        for k in range(horizon):
            uh = policy_accel(codes[j, k], params[j, k], s_h[j, k], v_h[j, k],
                              s_a[j, k], v_a[j, k])
            u_h[j, k] = uh
            s_a[j, k + 1], v_a[j, k + 1] = step_exact(s_a[j, k], v_a[j, k], U[j, k], dt)
            s_h[j, k + 1], v_h[j, k + 1] = step_exact(s_h[j, k], v_h[j, k], uh, dt)
    return s_a, v_a, s_h, v_h, u_h


@njit(cache=True)
def _ordered_violation(kind, av_leads, s_a, s_h, c):
    """Ordering-constraint violation and its partials w.r.t. (s_a, s_h).

    Positive means violated.  The follower may not be past the entry of
    the conflict zone (``entry > 0``) while the leader is not yet clear of
    it (``clear > 0``): clear of the region for an intersection, a safe gap
    ahead of the follower for a merge.  Both conditions are combined as
    ``entry * clear / (entry + clear)``, which is positive exactly when both
    are and gives each arm a gradient.
    """
    s_conf = c[K_SCONF]
    buf = c[K_BUF]
    if kind == C_STOPLINE:
        return s_a - s_conf + buf, 1.0, 0.0
    if av_leads:
        s_f = s_h
        s_l = s_a
    else:
        s_f = s_a
        s_l = s_h
    entry = s_f - s_conf + buf
    if kind == C_MERGE:
        clear = s_f - s_l + c[K_DSAFE] + buf
        df_clear = 1.0
    else:
        clear = s_conf + c[K_LCONF] + buf - s_l
        df_clear = 0.0
    if entry <= 0.0 or clear <= 0.0:
        return 0.0, 0.0, 0.0
    tot = entry + clear
    viol = entry * clear / tot
    de = clear * clear / (tot * tot)
    dc = entry * entry / (tot * tot)
    d_f = de + dc * df_clear
    d_l = -dc
    if av_leads:
        return viol, d_l, d_f
    return viol, d_f, d_l


@njit(cache=True)
def tree_objective(U, x0_a, x0_h, codes, params, dt, leg_weights, use_max,
                   enforce, kinds, av_leads, cost_p, cons_p, trigger_step):
    """Objective and exact gradient w.r.t. the per-leg input matrix U.

    objective = aggregate_j(stage_j) + mu * sum_j [enforced] penalty_j

    aggregate is the probability-weighted sum, or the max over legs when
    ``use_max`` is set.  The gradient is obtained by a reverse sweep through
    the coupled AV/HV rollout.  Returns (objective, stage cost per leg,
    penalty total, gradient of shape (J, H)).
    """
    n_legs, horizon = U.shape
    s_a, v_a, s_h, v_h, u_h = rollout_legs(U, x0_a, x0_h, codes, params, dt)

    w_v = cost_p[W_V]
    w_u = cost_p[W_U]
    w_j = cost_p[W_J]
    w_p = cost_p[W_P]
    v_ref = cost_p[V_REF]
    u_prev = cost_p[U_PREV]
    mu = cons_p[K_MU]
    b_c = cons_p[K_BCOURTESY]
    v_max = cons_p[K_VMAX]

    stage = np.zeros(n_legs)
    for j in range(n_legs):
        acc = 0.0
        last = u_prev
        for k in range(horizon):
            u = U[j, k]
            dv = v_a[j, k + 1] - v_ref
            acc += w_v * dv * dv + w_u * u * u + w_j * (u - last) * (u - last)
            acc -= w_p * (s_a[j, k + 1] - s_a[j, k])
            last = u
        stage[j] = acc

    weights = np.zeros(n_legs)
    if use_max:
        best = 0
        for j in range(1, n_legs):
            if stage[j] > stage[best]:
                best = j
        weights[best] = 1.0
    else:
        for j in range(n_legs):
            weights[j] = leg_weights[j]

    obj = 0.0
    for j in range(n_legs):
        obj += weights[j] * stage[j]

    grad = np.zeros((n_legs, horizon))
    penalty = 0.0
    # direct partials w.r.t. states, index 0..H
    g_sa = np.zeros(horizon + 1)
    g_va = np.zeros(horizon + 1)
    g_sh = np.zeros(horizon + 1)
    g_vh = np.zeros(horizon + 1)
    for j in range(n_legs):
        wj = weights[j]
        on = enforce[j]
        for k in range(horizon + 1):
            g_sa[k] = 0.0
            g_va[k] = 0.0
            g_sh[k] = 0.0
            g_vh[k] = 0.0

        # stage terms
        last = u_prev
        for k in range(horizon):
            u = U[j, k]
            if wj != 0.0:
                g_va[k + 1] += wj * 2.0 * w_v * (v_a[j, k + 1] - v_ref)
                g_sa[k + 1] -= wj * w_p
                g_sa[k] += wj * w_p
                grad[j, k] += wj * (2.0 * w_u * u + 2.0 * w_j * (u - last))
                if k > 0:
                    grad[j, k - 1] -= wj * 2.0 * w_j * (u - last)
            last = u

        if on:
            for k in range(horizon):
                # AV speed limit
                excess = v_a[j, k + 1] - v_max
                if excess > 0.0:
                    penalty += mu * excess * excess
                    g_va[k + 1] += 2.0 * mu * excess
                # courtesy: implied HV braking
                brake = (v_h[j, k] - v_h[j, k + 1]) / dt - b_c
                if brake > 0.0:
                    penalty += mu * brake * brake
                    g_vh[k] += 2.0 * mu * brake / dt
                    g_vh[k + 1] -= 2.0 * mu * brake / dt
                # ordering / collision
                if kinds[j] != C_NONE:
                    viol, d_a, d_h = _ordered_violation(
                        kinds[j], av_leads[j], s_a[j, k + 1], s_h[j, k + 1], cons_p)
                    if viol > 0.0:
                        penalty += mu * viol * viol
                        g_sa[k + 1] += 2.0 * mu * viol * d_a
                        g_sh[k + 1] += 2.0 * mu * viol * d_h
        # information consistency: the AV must reach s_br by the branch step
        if j == 0 and trigger_step >= 0:
            lag = cons_p[K_TRIGGER_S] - s_a[j, trigger_step]
            if lag > 0.0:
                penalty += mu * lag * lag
                g_sa[trigger_step] -= 2.0 * mu * lag

        # reverse sweep
        l_sa = g_sa[horizon]
        l_va = g_va[horizon]
        l_sh = g_sh[horizon]
        l_vh = g_vh[horizon]
        for k in range(horizon - 1, -1, -1):
            ds_dv, ds_du, dv_dv, dv_du = step_exact_grad(s_a[j, k], v_a[j, k], U[j, k], dt)
            grad[j, k] += l_sa * ds_du + l_va * dv_du
            n_sa = l_sa
            n_va = l_sa * ds_dv + l_va * dv_dv
            hs_dv, hs_du, hv_dv, hv_du = step_exact_grad(s_h[j, k], v_h[j, k], u_h[j, k], dt)
            g_uh = l_sh * hs_du + l_vh * hv_du
            n_sh = l_sh
            n_vh = l_sh * hs_dv + l_vh * hv_dv
            if g_uh != 0.0:
                _, p_sh, p_vh, p_sa, p_va = policy_accel_grad(
                    codes[j, k], params[j, k], s_h[j, k], v_h[j, k], s_a[j, k], v_a[j, k])
                n_sh += g_uh * p_sh
                n_vh += g_uh * p_vh
                n_sa += g_uh * p_sa
                n_va += g_uh * p_va
            l_sa = n_sa + g_sa[k]
            l_va = n_va + g_va[k]
            l_sh = n_sh + g_sh[k]
            l_vh = n_vh + g_vh[k]

    obj += penalty
    return obj, stage, penalty, grad
