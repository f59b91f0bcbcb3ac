"""Air-conditioner populations and the DG + battery scheduler that serves them.

Each TCL follows ``dT/dt = alpha * (T_out - T - beta * s * P)`` and switches
on whenever its (delayed) indoor temperature reaches the setpoint. Once the
population slides along the setpoint its average draw is
``(T_out - setpoint) / beta`` per unit, which is all the scheduler needs: it
sees the aggregate demand as exogenous and never tracks individual rooms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .battery import BatterySpec
from .dp_dispatch import InfeasibleError, grid_index, move_feasible, move_powers, preference_rank
from .timeseries import TimeSeries


@dataclass(frozen=True)
class TclParams:
    alpha: float = 0.5  # 1/h
    beta: float = 300.0  # degC per kW
    p_rated: float = 0.1  # kW
    n_units: int = 3200
    band_low: float = 20.0
    band_high: float = 23.0
    switch_delay_steps: int = 2

    def __post_init__(self):
        if min(self.alpha, self.beta, self.p_rated) <= 0:
            raise ValueError("alpha, beta and p_rated must be positive")
        if not self.band_low < self.band_high:
            raise ValueError("comfort band must satisfy band_low < band_high")
        if self.n_units < 1 or self.switch_delay_steps < 0:
            raise ValueError("need n_units >= 1 and switch_delay_steps >= 0")

    @property
    def gain(self) -> float:
        """Aggregate power per degree of setpoint offset, ``n / beta``."""
        return self.n_units / self.beta


@dataclass(frozen=True)
class DgParams:
    a: float = 0.01
    b: float = 0.1
    c: float = 0.0
    p_min: float = 50.0
    p_max: float = 500.0

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ValueError("need 0 <= p_min <= p_max")
        if min(self.a, self.b, self.c) < 0:
            raise ValueError("DG cost coefficients must be non-negative")

    def cost(self, p_g):
        return self.a * p_g * p_g + self.b * p_g + self.c


def _default_bess() -> BatterySpec:
    return BatterySpec(e_max=240.0, e_min=24.0, e_cap_max=216.0, p_charge_max=120.0,
                       p_discharge_max=120.0, d_loss=0.05, delta_t=1.0 / 6.0)


@dataclass(frozen=True)
class SchedulerParams:
    dg: DgParams = field(default_factory=DgParams)
    bess: BatterySpec = field(default_factory=_default_bess)
    gamma1: float = 0.008
    gamma2: float = 0.008
    eps_tolerance: float = 1.05
    c_cur: float = 60.0
    grid_points: int = 49

    def __post_init__(self):
        if self.eps_tolerance <= 1:
            raise ValueError("eps_tolerance must exceed 1")
        if min(self.gamma1, self.gamma2, self.c_cur) < 0:
            raise ValueError("costs must be non-negative")
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")


# --- thermal model ------------------------------------------------------------


def simulate_tcl(t_in0: float, t_out, setpoint, p: TclParams, substeps_per_stage: int = 10, step_hours: float | None = None):
    """Forward-Euler simulation of one TCL under delayed setpoint switching.

    ``t_out`` and ``setpoint`` are per-stage values (a scalar setpoint is
    broadcast). Returns ``(temperature, duty)``: the indoor temperature at
    every sub-step (length ``stages * substeps + 1``) and the fraction of each
    stage the unit was on.
    """
    if isinstance(t_out, TimeSeries):
        step_hours = t_out.step_hours if step_hours is None else step_hours
        t_out = t_out.values
    t_out = np.asarray(t_out, dtype=float)
    step_hours = 1.0 / 6.0 if step_hours is None else step_hours
    sp = np.broadcast_to(np.asarray(setpoint, dtype=float), t_out.shape)
    if substeps_per_stage < 1:
        raise ValueError("substeps_per_stage must be >= 1")
    dt = step_hours / substeps_per_stage
    if p.alpha * dt >= 1:
        raise ValueError(f"sub-step too coarse: alpha*dt = {p.alpha * dt:.3g} >= 1")
    m = substeps_per_stage
    n_sub = len(t_out) * m
    temp = np.empty(n_sub + 1)
    temp[0] = t_in0
    on = np.zeros(n_sub)
    delay = p.switch_delay_steps
    for j in range(n_sub):
        k = j // m
        seen = temp[max(j - delay, 0)]
        s = 1.0 if seen >= sp[k] else 0.0
        on[j] = s
        temp[j + 1] = temp[j] + dt * p.alpha * (t_out[k] - temp[j] - p.beta * s * p.p_rated)
    duty = on.reshape(len(t_out), m).mean(axis=1)
    return temp, duty


def chattering_band(t_out_max: float, setpoint: float, p: TclParams, dt: float) -> float:
    """Worst-case overshoot around the setpoint caused by the switching delay.

    Valid for outdoor temperatures in ``[setpoint, t_out_max]``. The drift
    rate grows with the overshoot ``delta`` itself, ``alpha * (r + delta)``,
    so the bound solves ``delta = alpha * (r + delta) * h`` over the
    ``h = (delay + 1) * dt`` hours the switch lags behind.
    """
    if t_out_max < setpoint:
        raise ValueError("t_out_max below the setpoint")
    r = max(t_out_max - setpoint, p.beta * p.p_rated)
    h = (p.switch_delay_steps + 1) * dt
    if p.alpha * h >= 1:
        raise ValueError("switching delay too long for a bounded band")
    return p.alpha * r * h / (1 - p.alpha * h)


def aggregate_demand(t_out: float, setpoint: float, p: TclParams | Sequence[TclParams]) -> float:
    """Average power drawn by the population(s) holding ``setpoint``."""
    if t_out < setpoint:
        raise ValueError(f"outdoor temperature {t_out} below setpoint {setpoint}: no cooling demand")
    classes = [p] if isinstance(p, TclParams) else list(p)
    return float(sum(c.n_units * (t_out - setpoint) / c.beta for c in classes))


def curtailment(pg_min: float, p_s: float, demand: float, eps: float, d_max_c: float, storage_full: bool = False) -> float:
    """Surplus that neither the band ``eps * demand`` nor the battery can take."""
    if min(pg_min, p_s, demand, d_max_c) < 0:
        raise ValueError("inputs must be non-negative")
    absorb = 0.0 if storage_full else d_max_c
    return max(0.0, pg_min + p_s - eps * demand - absorb)


# --- DG + BESS scheduler --------------------------------------------------------


@dataclass
class Schedule:
    p_g: np.ndarray
    p_b: np.ndarray
    x: np.ndarray
    demand: np.ndarray
    curtailed: np.ndarray
    stage_cost: np.ndarray
    objective: float

    def rows(self):
        for k in range(len(self.p_g)):
            yield (k, float(self.p_g[k]), float(self.p_b[k]), float(self.x[k]),
                   float(self.demand[k]), float(self.curtailed[k]), float(self.stage_cost[k]))


def best_dg_output(a: float, b: float, lo: float, hi: float) -> float:
    """Minimizer of ``a*p^2 + b*p`` on ``[lo, hi]``."""
    if a > 0:
        return min(max(-b / (2 * a), lo), hi)
    return lo if b >= 0 else hi


def stage_tables(solar, demand, sp: SchedulerParams):
    """Stage cost, DG output and curtailment for every (stage, from, to) move."""
    spec = sp.bess
    grid = np.linspace(spec.e_min, spec.e_cap_max, sp.grid_points)
    powers = move_powers(grid, spec)
    feas = move_feasible(powers, spec)
    dg = sp.dg
    lo_band = (np.asarray(demand) - solar)[:, None, None]
    hi_band = (sp.eps_tolerance * np.asarray(demand) - solar)[:, None, None]
    lo = np.maximum(dg.p_min, lo_band - powers[None])
    hi = np.minimum(dg.p_max, hi_band - powers[None])
    inside = lo <= hi
    surplus = ~inside & (dg.p_min > hi_band - powers[None])
    if dg.a > 0:
        best = np.clip(-dg.b / (2 * dg.a), lo, hi)
    else:
        best = lo if dg.b >= 0 else hi
    p_g = np.where(inside, best, dg.p_min)
    cur = np.where(surplus, dg.p_min + powers[None] - hi_band, 0.0)
    cost = (dg.cost(p_g) + sp.gamma1 * np.abs(powers * spec.delta_t)[None]
            + sp.gamma2 * grid[None, :, None] + sp.c_cur * cur)
    ok = feas[None] & (inside | surplus)
    cost = np.where(ok, cost, np.inf)
    p_g = np.where(ok, p_g, 0.0)
    cur = np.where(ok, cur, 0.0)
    return grid, powers, cost, p_g, cur


def _demand_series(t_out, tcl) -> np.ndarray:
    classes = [tcl] if isinstance(tcl, TclParams) else list(tcl)
    sp = classes[0].band_high
    return np.array([aggregate_demand(max(t, sp), sp, classes) for t in t_out])


def schedule_dg_bess(solar, t_out, sp: SchedulerParams, tcl, x0: float, n: int | None = None, k0: int = 0) -> Schedule:
    """Minimum-cost DG and battery schedule over ``n`` stages starting at ``k0``."""
    solar = np.asarray(getattr(solar, "values", solar), dtype=float)
    t_out = np.asarray(getattr(t_out, "values", t_out), dtype=float)
    n = len(solar) - k0 if n is None else n
    if n < 1 or k0 + n > min(len(solar), len(t_out)):
        raise IndexError("forecasts shorter than the horizon")
    sl = slice(k0, k0 + n)
    demand = _demand_series(t_out[sl], tcl)
    grid, powers, cost, p_g, cur = stage_tables(solar[sl], demand, sp)
    i0 = grid_index(x0, grid)
    V, pol = kernels.lattice_dp(cost, preference_rank(powers))
    if not math.isfinite(V[0, i0]):
        raise InfeasibleError("demand band cannot be met at some stage")
    path = [i0]
    for k in range(n):
        path.append(int(pol[k, path[-1]]))
    return _schedule_from_path(path, grid, powers, cost, p_g, cur, demand, float(V[0, i0]))


def _schedule_from_path(path, grid, powers, cost, p_g, cur, demand, objective):
    ks = np.arange(len(path) - 1)
    a, b = np.asarray(path[:-1]), np.asarray(path[1:])
    return Schedule(
        p_g=p_g[ks, a, b], p_b=powers[a, b], x=grid[np.asarray(path)], demand=demand,
        curtailed=cur[ks, a, b], stage_cost=cost[ks, a, b], objective=objective,
    )


def greedy_schedule(solar, t_out, sp: SchedulerParams, tcl, x0: float) -> Schedule:
    """One-step-lookahead baseline: each stage minimizes its own cost only."""
    solar = np.asarray(getattr(solar, "values", solar), dtype=float)
    t_out = np.asarray(getattr(t_out, "values", t_out), dtype=float)
    demand = _demand_series(t_out, tcl)
    grid, powers, cost, p_g, cur = stage_tables(solar, demand, sp)
    rank = preference_rank(powers)
    path = [grid_index(x0, grid)]
    for k in range(len(solar)):
        i = path[-1]
        order = np.lexsort((rank[i], cost[k, i]))
        if not math.isfinite(cost[k, i, order[0]]):
            raise InfeasibleError(f"demand band cannot be met at stage {k}")
        path.append(int(order[0]))
    return _schedule_from_path(path, grid, powers, cost, p_g, cur, demand, float(sum(cost[k, a, b] for k, (a, b) in enumerate(zip(path, path[1:])))))


def schedule_run(solar_true, t_out_true, solar_fc, t_out_fc, sp: SchedulerParams, tcl, x0: float, horizon: int, progress=None) -> Schedule:
    """Receding-horizon execution: plan on forecasts, settle on actual data."""
    solar_true = np.asarray(getattr(solar_true, "values", solar_true), dtype=float)
    t_true = np.asarray(getattr(t_out_true, "values", t_out_true), dtype=float)
    solar_fc = np.asarray(getattr(solar_fc, "values", solar_fc), dtype=float)
    t_fc = np.asarray(getattr(t_out_fc, "values", t_out_fc), dtype=float)
    total = len(solar_true) - horizon + 1
    if total < 1:
        raise IndexError("series shorter than the horizon")
    spec = sp.bess
    grid = np.linspace(spec.e_min, spec.e_cap_max, sp.grid_points)
    path = [grid_index(x0, grid)]
    out_pb = []
    for k in range(total):
        plan = schedule_dg_bess(solar_fc, t_fc, sp, tcl, grid[path[-1]], horizon, k0=k)
        j = grid_index(plan.x[1], grid)
        path.append(j)
        out_pb.append(plan.p_b[0])
        if progress is not None:
            progress(k + 1, total)
    # settle the executed moves against actual solar and temperature
    demand = _demand_series(t_true[:total], tcl)
    _, powers, cost, p_g, cur = stage_tables(solar_true[:total], demand, sp)
    ks = np.arange(total)
    a, b = np.asarray(path[:-1]), np.asarray(path[1:])
    stage_cost = cost[ks, a, b]
    if not np.all(np.isfinite(stage_cost)):
        raise InfeasibleError("executed schedule violates the demand band on actual data")
    return _schedule_from_path(path, grid, powers, cost, p_g, cur, demand, float(np.sum(stage_cost)))
