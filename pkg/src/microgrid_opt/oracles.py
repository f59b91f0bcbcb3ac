"""Independent reference solvers used to check the optimizers.

Each oracle enumerates every state path (or calls a general-purpose solver)
and re-evaluates costs with scalar code that shares nothing with the DP
kernels beyond the problem definition. They are exponential and meant for
tiny instances only.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import lsq_linear

from .battery import power_for_move
from .dp_dispatch import DispatchScenario, InfeasibleError, plan_cost
from .network import NetworkConfig, NetworkData, apply_exogenous, check_feasible, control_levels, initial_state
from .network import post_decision, step_cost


def _paths(g: int, i0: int, n: int):
    for tail in itertools.product(range(g), repeat=n):
        yield (i0, *tail)


def _nearest(grid, x) -> int:
    return int(np.argmin(np.abs(np.asarray(grid) - x)))


def brute_force_dispatch(scn: DispatchScenario, e0: float, k0: int = 0):
    """Cheapest action sequence over every grid path, priced by the offline cycle counter."""
    spec = scn.battery
    grid = scn.energy_grid()
    n = scn.horizon_steps
    best, best_actions = math.inf, None
    for path in _paths(len(grid), _nearest(grid, e0), n):
        actions = []
        for a, b in zip(path, path[1:]):
            p = power_for_move(grid[b] - grid[a], spec.delta_t, spec.d_loss)
            if p > spec.p_discharge_max + 1e-9 or -p > spec.p_charge_max + 1e-9:
                break
            actions.append(float(p))
        else:
            c = plan_cost(scn, float(grid[path[0]]), actions, k0)
            if c < best:
                best, best_actions = c, actions
    return best, best_actions


def _stage_cost_schedule(p_b, x, solar, demand, sp):
    """Scalar stage cost of one battery move, or ``inf`` when the band cannot be met."""
    dg = sp.dg
    lo_band = demand - solar
    hi_band = sp.eps_tolerance * demand - solar
    lo = max(dg.p_min, lo_band - p_b)
    hi = min(dg.p_max, hi_band - p_b)
    cur = 0.0
    if lo <= hi:
        cands = [lo, hi]
        if dg.a > 0 and lo < -dg.b / (2 * dg.a) < hi:
            cands.append(-dg.b / (2 * dg.a))
        p_g = min(cands, key=lambda p: (dg.a * p * p + dg.b * p, p))
    elif dg.p_min > hi_band - p_b:
        p_g = dg.p_min
        cur = dg.p_min + p_b - hi_band
    else:
        return math.inf
    return (dg.a * p_g * p_g + dg.b * p_g + dg.c + sp.gamma1 * abs(p_b * sp.bess.delta_t)
            + sp.gamma2 * x + sp.c_cur * cur)


def brute_force_schedule(solar, t_out, sp, tcl, x0: float, n: int) -> float:
    """Minimum DG + battery cost over every grid path."""
    spec = sp.bess
    grid = np.linspace(spec.e_min, spec.e_cap_max, sp.grid_points)
    set_point = tcl.band_high
    demand = [tcl.n_units * max(t - set_point, 0.0) / tcl.beta for t in t_out[:n]]
    best = math.inf
    for path in _paths(len(grid), _nearest(grid, x0), n):
        total = 0.0
        for k, (a, b) in enumerate(zip(path, path[1:])):
            p = power_for_move(grid[b] - grid[a], spec.delta_t, spec.d_loss)
            if p > spec.p_discharge_max + 1e-9 or -p > spec.p_charge_max + 1e-9:
                total = math.inf
                break
            total += _stage_cost_schedule(p, grid[a], solar[k], demand[k], sp)
            if total == math.inf:
                break
        best = min(best, total)
    return best


def brute_force_smooth(pw_tcl, sm, bess, e0: float, pg_prev: float) -> float:
    """Minimum battery cost over every grid path that keeps the dispatch ramp-feasible."""
    grid = np.linspace(bess.e_min, bess.e_cap_max, sm.grid_points)
    best = math.inf
    tol = 1e-9
    for path in _paths(len(grid), _nearest(grid, e0), len(pw_tcl)):
        prev, total = pg_prev, 0.0
        for k, (a, b) in enumerate(zip(path, path[1:])):
            p = power_for_move(grid[b] - grid[a], bess.delta_t, bess.d_loss)
            pg = p + pw_tcl[k]
            if (p > bess.p_discharge_max + tol or -p > bess.p_charge_max + tol or pg < -tol
                    or not sm.rr_min - tol <= pg - prev <= sm.rr_max + tol):
                total = math.inf
                break
            total += sm.gamma_b * abs(p * bess.delta_t) + sm.gamma_b * grid[a]
            prev = pg
        best = min(best, total)
    return best


def brute_force_network(cfg: NetworkConfig, data: NetworkData, n: int, levels: int) -> float:
    """Minimum total cost over every joint control sequence, feasibility checked unit by unit."""
    lay = cfg.layout
    boxes = []
    for mg in cfg.microgrids:
        boxes += [(mg.dg.u_min, mg.dg.u_max), (mg.bess.u_min, mg.bess.u_max), (mg.cl.u_min, mg.cl.u_max)]
    boxes += [(cfg.cems_dg.u_min, cfg.cems_dg.u_max), (cfg.cems_bess.u_min, cfg.cems_bess.u_max)]
    joint = [np.array(u) for u in itertools.product(*(control_levels(lo, hi, levels) for lo, hi in boxes))]
    assert len(joint[0]) == lay.n_control

    def solve(t, s):
        if t == n:
            return 0.0
        best = math.inf
        for u in joint:
            try:
                check_feasible(s, u, cfg)
            except InfeasibleError:
                continue
            post = post_decision(s, u, cfg)
            nxt = apply_exogenous(post, data.exogenous(t + 1), cfg) if t + 1 < n else post
            best = min(best, step_cost(s, u, cfg) + solve(t + 1, nxt))
        return best

    return solve(0, initial_state(cfg, data))


def batch_least_squares(phi, y) -> np.ndarray:
    theta, *_ = np.linalg.lstsq(np.asarray(phi, dtype=float), np.asarray(y, dtype=float), rcond=None)
    return theta


def box_least_squares(A, b, lo, hi) -> np.ndarray:
    """Bounded-variable least squares via an active-set solver."""
    res = lsq_linear(A, b, bounds=(lo, hi), method="bvls", tol=1e-14, lsmr_tol="auto")
    return res.x
