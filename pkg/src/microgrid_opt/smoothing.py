"""Two-stage smoothing of wind power with TCL setpoints and a battery.

Stage I picks per-step setpoints inside the comfort band so that the wind
power left after the TCLs, ``Pw_tcl = Pw - kappa * (T_out - D_s)`` with
``kappa = n / beta``, varies as little as possible. That is a box-constrained
least-squares problem, solved by accelerated projected gradient.

Stage II runs a DP over battery energy so the dispatched power
``P_G(t+1) = P_B(t) + Pw_tcl(t)`` respects the grid ramp limits at minimum
battery cost. The ramp couples consecutive actions, so the DP state is the
pair (previous energy, current energy), which pins down the previous power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .battery import BatterySpec
from .dp_dispatch import InfeasibleError, grid_index, move_feasible, move_powers, preference_rank
from .kernels._pure import _better
from .tcl import TclParams


class ConvergenceError(RuntimeError):
    """Iterative solver hit its iteration cap."""


@dataclass(frozen=True)
class SmoothingParams:
    gamma_b: float = 0.048
    rr_min: float = -20.0
    rr_max: float = 20.0
    band_low: float = 20.0
    band_high: float = 25.0
    qp_tolerance: float = 1e-9
    qp_max_iters: int = 200_000
    grid_points: int = 97

    def __post_init__(self):
        if not self.rr_min < 0 < self.rr_max:
            raise ValueError("need rr_min < 0 < rr_max")
        if not self.band_low < self.band_high:
            raise ValueError("need band_low < band_high")
        if self.gamma_b < 0 or self.qp_tolerance <= 0 or self.qp_max_iters < 1:
            raise ValueError("invalid solver or cost settings")

    @staticmethod
    def gamma_from_investment(investment: float, rated_energy: float, life_cycles: float) -> float:
        """Per-unit battery cost ``IC / (E_rated * LCN)``."""
        return investment / (rated_energy * life_cycles)


def regulated_wind(wind, t_out, setpoints, kappa: float) -> np.ndarray:
    return np.asarray(wind, float) - kappa * (np.asarray(t_out, float) - np.asarray(setpoints, float))


def variation(x) -> float:
    d = np.diff(np.asarray(x, dtype=float))
    return float(d @ d)


def setpoint_bounds(t_out, sm: SmoothingParams):
    t_out = np.asarray(t_out, dtype=float)
    if np.any(t_out < sm.band_low):
        raise ValueError("outdoor temperature below the comfort band: TCLs cannot absorb power")
    lo = np.full(t_out.shape, sm.band_low)
    hi = np.minimum(sm.band_high, t_out)
    return lo, hi


def projected_gradient_ls(A: np.ndarray, b: np.ndarray, lo, hi, x0, tol: float, max_iters: int):
    """Minimize ``||A x - b||^2`` over the box ``[lo, hi]``.

    Fixed step ``1/L`` with Nesterov momentum and gradient-based restart.
    Stops when the projected-gradient step is shorter than ``tol / L``.
    """
    L = 2.0 * np.linalg.norm(A, 2) ** 2
    if L == 0:
        return np.clip(x0, lo, hi), 0
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    y, t = x.copy(), 1.0
    for it in range(1, max_iters + 1):
        g = 2.0 * A.T @ (A @ y - b)
        x_new = np.clip(y - g / L, lo, hi)
        g_x = 2.0 * A.T @ (A @ x_new - b)
        if L * np.linalg.norm(x_new - np.clip(x_new - g_x / L, lo, hi)) < tol:
            return x_new, it
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        if (y - x_new) @ (x_new - x) > 0:  # momentum points uphill: restart
            t_new, y = 1.0, x_new.copy()
        else:
            y = x_new + ((t - 1) / t_new) * (x_new - x)
        x, t = x_new, t_new
    raise ConvergenceError(f"projected gradient did not converge in {max_iters} iterations")


def smooth_setpoints(wind, t_out, tcl: TclParams, sm: SmoothingParams, n: int | None = None):
    """Stage I: setpoints minimizing the step-to-step variation of ``Pw_tcl``.

    Returns ``(setpoints, pw_tcl)`` over the first ``n`` stages.
    """
    wind = np.asarray(getattr(wind, "values", wind), dtype=float)
    t_out = np.asarray(getattr(t_out, "values", t_out), dtype=float)
    n = len(wind) if n is None else n
    if n < 2 or n > min(len(wind), len(t_out)):
        raise ValueError("need 2 <= n <= series length")
    wind, t_out = wind[:n], t_out[:n]
    kappa = tcl.gain
    lo, hi = setpoint_bounds(t_out, sm)
    D = np.diff(np.eye(n), axis=0)
    A = kappa * D
    b = -D @ (wind - kappa * t_out)
    sp, _ = projected_gradient_ls(A, b, lo, hi, 0.5 * (lo + hi), sm.qp_tolerance, sm.qp_max_iters)
    return sp, regulated_wind(wind, t_out, sp, kappa)


@dataclass
class SmoothingResult:
    p_b: np.ndarray
    p_g: np.ndarray  # dispatched power, P_G(1..N)
    x: np.ndarray
    cost: float


def smooth_bess(pw_tcl, sm: SmoothingParams, bess: BatterySpec, e0: float, pg_prev: float) -> SmoothingResult:
    """Stage II: least-cost battery actions keeping the dispatched power within the ramp limits."""
    pw = np.asarray(getattr(pw_tcl, "values", pw_tcl), dtype=float)
    n = len(pw)
    if n < 1:
        raise ValueError("empty horizon")
    grid = np.linspace(bess.e_min, bess.e_cap_max, sm.grid_points)
    g = len(grid)
    i0 = grid_index(e0, grid)
    P = move_powers(grid, bess)
    feas = move_feasible(P, bess)
    rank = preference_rank(P)
    step = sm.gamma_b * np.abs(P * bess.delta_t) + sm.gamma_b * grid[:, None]
    tol = 1e-9

    def ramp_ok(delta):
        return (delta >= sm.rr_min - tol) & (delta <= sm.rr_max + tol)

    # W[t][p, i]: cost-to-go at stage t, state i, having arrived from p.
    W_next = np.zeros((g, g))
    choice = np.full((n, g, g), -1, dtype=np.int64)
    big = np.iinfo(np.int64).max
    for t in range(n - 1, 0, -1):
        best = np.full((g, g), np.inf)
        brank = np.full((g, g), big)
        arg = np.full((g, g), -1, dtype=np.int64)
        prev_pg = P + pw[t - 1]  # P_G(t) for each (p, i)
        for j in range(g):
            pg_new = P[:, j] + pw[t]  # indexed by i
            ok = feas[:, j] & (pg_new >= -tol)
            allowed = ok[None, :] & ramp_ok(pg_new[None, :] - prev_pg)
            cand = np.where(allowed, (step[:, j] + W_next[:, j])[None, :], np.inf)
            c_rank = np.broadcast_to(rank[:, j][None, :], (g, g))
            upd = allowed & _better(cand, c_rank, best, brank)
            best = np.where(upd, cand, best)
            brank = np.where(upd, c_rank, brank)
            arg = np.where(upd, j, arg)
        choice[t] = arg
        W_next = best

    # first stage: the previous dispatch is given
    best_v, best_r, best_j = np.inf, big, -1
    for j in range(g):
        pg_new = P[i0, j] + pw[0]
        if not feas[i0, j] or pg_new < -tol or not ramp_ok(pg_new - pg_prev):
            continue
        v = step[i0, j] + (W_next[i0, j] if n > 1 else 0.0)
        if _better(np.array([v]), np.array([rank[i0, j]]), np.array([best_v]), np.array([best_r]))[0]:
            best_v, best_r, best_j = v, rank[i0, j], j
    if best_j < 0 or not math.isfinite(best_v):
        raise InfeasibleError("ramp limits cannot be met: required smoothing exceeds battery capability")
    path = [i0, best_j]
    for t in range(1, n):
        path.append(int(choice[t, path[-2], path[-1]]))
    path = np.asarray(path)
    p_b = P[path[:-1], path[1:]]
    return SmoothingResult(p_b=p_b, p_g=p_b + pw, x=grid[path], cost=float(best_v))


def smoothing_cost(p_b, x, sm: SmoothingParams, bess: BatterySpec) -> float:
    p_b = np.asarray(p_b, dtype=float)
    return float(np.sum(sm.gamma_b * np.abs(p_b * bess.delta_t) + sm.gamma_b * np.asarray(x, dtype=float)[: len(p_b)]))


@dataclass
class SmoothingRun:
    wind: np.ndarray
    pw_tcl: np.ndarray
    setpoints: np.ndarray
    p_g: np.ndarray
    p_b: np.ndarray
    x: np.ndarray
    cost: float

    def rows(self):
        prev = None
        for k in range(len(self.p_g)):
            d = 0.0 if prev is None else float(self.p_g[k] - prev)
            prev = self.p_g[k]
            yield (k, float(self.wind[k]), float(self.pw_tcl[k]), float(self.p_g[k]), d, float(self.p_b[k]), float(self.x[k]))


def smoothing_run(wind_true, t_true, wind_fc, t_fc, tcl: TclParams, sm: SmoothingParams, bess: BatterySpec,
                  e0: float, horizon: int, pg0: float | None = None, progress=None) -> SmoothingRun:
    """Rolling two-stage smoothing: plan both stages on forecasts, apply the first step."""
    wind_true = np.asarray(getattr(wind_true, "values", wind_true), dtype=float)
    t_true = np.asarray(getattr(t_true, "values", t_true), dtype=float)
    wind_fc = np.asarray(getattr(wind_fc, "values", wind_fc), dtype=float)
    t_fc = np.asarray(getattr(t_fc, "values", t_fc), dtype=float)
    total = len(wind_true) - horizon + 1
    if total < 1 or horizon < 2:
        raise ValueError("need horizon >= 2 and data longer than the horizon")
    kappa = tcl.gain
    grid = np.linspace(bess.e_min, bess.e_cap_max, sm.grid_points)
    i = grid_index(e0, grid)
    x = [float(grid[i])]
    pg_prev = float(wind_true[0]) if pg0 is None else pg0
    sps, pwt, pgs, pbs = [], [], [], []
    for k in range(total):
        sp, pw_plan = smooth_setpoints(wind_fc[k : k + horizon], t_fc[k : k + horizon], tcl, sm)
        plan = smooth_bess(pw_plan, sm, bess, x[-1], pg_prev)
        sp0 = float(np.clip(sp[0], sm.band_low, min(sm.band_high, t_true[k])))
        pw_act = float(regulated_wind(wind_true[k], t_true[k], sp0, kappa))
        pb = float(plan.p_b[0])
        i = grid_index(plan.x[1], grid)
        sps.append(sp0)
        pwt.append(pw_act)
        pbs.append(pb)
        pg_prev = max(pb + pw_act, 0.0)
        pgs.append(pg_prev)
        x.append(float(grid[i]))
        if progress is not None:
            progress(k + 1, total)
    return SmoothingRun(
        wind=wind_true[:total], pw_tcl=np.asarray(pwt), setpoints=np.asarray(sps), p_g=np.asarray(pgs),
        p_b=np.asarray(pbs), x=np.asarray(x), cost=smoothing_cost(pbs, x, sm, bess),
    )
