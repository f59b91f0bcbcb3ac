"""Receding-horizon battery dispatch with half-cycle degradation pricing.

The battery energy is discretized on a uniform grid over its allowed range and
the admissible actions are exactly the (loss-adjusted) powers that move the
state from one grid point to another, so no interpolation is needed.

Two solvers share the lattice:

``method="exact"`` (default)
    Prices each half-cycle once it is closed, tracking the target extreme of
    the open segment. Matches brute-force enumeration for any ``kp``.
``method="extreme"``
    The lighter recursion that keeps a single "subsequent local extreme" per
    state and charges each step its telescoping share of the half-cycle cost.
    It is exact for most practical parameters but can miss the optimum when
    degradation is strongly convex, because the stored extreme belongs to the
    best continuation only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .battery import BatterySpec, CycleCostParams, power_for_move, step_battery, trajectory_cycle_cost
from .timeseries import ForecastErrorSpec, TimeSeries, inject_forecast_error

log = logging.getLogger(__name__)

METHODS = ("exact", "extreme")
_FEAS_TOL = 1e-9


class InfeasibleError(ValueError):
    """No admissible schedule exists for the requested problem."""


@dataclass(frozen=True)
class DispatchScenario:
    renewable: TimeSeries
    load: TimeSeries
    price: TimeSeries
    battery: BatterySpec
    cycle: CycleCostParams
    horizon_steps: int
    grid_points: int = 41

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be >= 1")
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")
        n = len(self.renewable)
        if len(self.load) != n or len(self.price) != n:
            raise ValueError("renewable, load and price series must have equal length")

    @property
    def length(self) -> int:
        return len(self.renewable)

    def energy_grid(self) -> np.ndarray:
        return np.linspace(self.battery.e_min, self.battery.e_cap_max, self.grid_points)


@dataclass
class ExtremeTable:
    grid: np.ndarray
    value: np.ndarray  # (N+1, G)
    sigma: np.ndarray  # (N+1, G)
    best_action: np.ndarray  # (N, G)


@dataclass
class RunReport:
    trajectory: np.ndarray
    executed_actions: np.ndarray
    p_grid: np.ndarray
    step_costs: np.ndarray
    bess_cost: float
    trading_cost: float
    baseline_cost: float
    extras: dict = field(default_factory=dict)

    @property
    def overall_cost(self) -> float:
        return self.bess_cost + self.trading_cost

    @property
    def improvement(self) -> float:
        """Relative saving over the no-battery baseline."""
        if self.baseline_cost == 0:
            return 0.0
        return (self.baseline_cost - self.overall_cost) / abs(self.baseline_cost)

    def summary(self) -> dict:
        out = {
            "bess_cost": float(self.bess_cost),
            "trading_cost": float(self.trading_cost),
            "overall_cost": float(self.overall_cost),
            "baseline_cost": float(self.baseline_cost),
            "improvement": float(self.improvement),
            "steps": int(len(self.executed_actions)),
        }
        out.update(self.extras)
        return out

    def rows(self):
        """Per-step records: stage, action, state, grid power, step cost."""
        for k, a in enumerate(self.executed_actions):
            yield k, float(a), float(self.trajectory[k]), float(self.p_grid[k]), float(self.step_costs[k])


# --- lattice construction ---------------------------------------------------


def move_powers(grid: np.ndarray, spec: BatterySpec) -> np.ndarray:
    """``P[i, j]``: battery power taking the state from ``grid[i]`` to ``grid[j]``."""
    return power_for_move(grid[None, :] - grid[:, None], spec.delta_t, spec.d_loss)


def move_feasible(powers: np.ndarray, spec: BatterySpec) -> np.ndarray:
    return (powers <= spec.p_discharge_max + _FEAS_TOL) & (-powers <= spec.p_charge_max + _FEAS_TOL)


def preference_rank(powers: np.ndarray) -> np.ndarray:
    """Rank moves per row: smaller |P| first, then discharge before charge."""
    rank = np.empty(powers.shape, dtype=np.int64)
    for i, row in enumerate(powers):
        order = np.lexsort((row < 0, np.round(np.abs(row), 12)))
        rank[i, order] = np.arange(len(row))
    return rank


def _trade_tensor(scn: DispatchScenario, k0: int, n: int, powers, feasible):
    rn = scn.renewable.values[k0 : k0 + n]
    ld = scn.load.values[k0 : k0 + n]
    c = scn.price.values[k0 : k0 + n]
    p_g = (rn - ld)[:, None, None] + scn.battery.n_parallel * powers[None]
    trade = -c[:, None, None] * p_g
    return np.where(feasible[None], trade, np.inf)


def grid_index(e: float, grid: np.ndarray) -> int:
    """Index of the grid point matching ``e``; off-grid states are snapped."""
    lo, hi = grid[0], grid[-1]
    span = hi - lo
    if e < lo - 1e-9 * span or e > hi + 1e-9 * span:
        raise InfeasibleError(f"initial energy {e} outside [{lo}, {hi}]")
    i = int(np.argmin(np.abs(grid - e)))
    if abs(grid[i] - e) > 1e-9 * max(span, 1.0):
        log.warning("energy %.6g is off the grid; snapped to %.6g", e, grid[i])
    return i


def solve_horizon(scn: DispatchScenario, e0: float, k0: int = 0, method: str = "exact"):
    """Optimal actions over ``[k0, k0 + N)``; returns ``(actions, objective, table)``."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    n = scn.horizon_steps
    if k0 < 0 or k0 + n > scn.length:
        raise IndexError(f"horizon [{k0}, {k0 + n}) exceeds data of length {scn.length}")
    spec = scn.battery
    grid = scn.energy_grid()
    i0 = grid_index(e0, grid)
    powers = move_powers(grid, spec)
    feasible = move_feasible(powers, spec)
    if not feasible[np.arange(len(grid)), np.arange(len(grid))].all():
        raise InfeasibleError("idle move infeasible")
    rank = preference_rank(powers)
    trade = _trade_tensor(scn, k0, n, powers, feasible)
    w = spec.n_parallel * scn.cycle.weight
    kp, e_max = scn.cycle.kp, spec.e_max

    if method == "extreme":
        V, sig, pol = kernels.sigma_dp(grid, trade, rank, w, kp, e_max)
        path = [i0]
        for k in range(n):
            path.append(int(pol[k, path[-1]]))
        g_idx = np.arange(len(grid))
        best = np.vstack([powers[g_idx, pol[k]] for k in range(n)])
        table = ExtremeTable(grid, V, sig, best)
        objective = float(V[0, i0])
    else:
        F, next_u, best_f, best_a = kernels.exact_cycle_dp(grid, trade, rank, w, kp, e_max)
        path = _exact_path(i0, n, next_u, best_f, best_a)
        table = _exact_table(grid, powers, F, next_u, best_f)
        objective = float(F[0, i0])
    path = np.asarray(path)
    actions = powers[path[:-1], path[1:]]
    return actions, objective, table


def _exact_path(i0, n, next_u, best_f, best_a):
    path = [i0]
    i, mode, target, d = i0, "F", -1, 0
    for k in range(n):
        if mode in ("F", "A"):
            target = best_f[k, i] if mode == "F" else best_a[k, i, d]
            if target < 0:
                path.extend([i] * (n - k))
                return path
        j = int(next_u[k, i, target])
        if j == target:
            mode, d = "A", 1 if j > i else 0
        else:
            mode = "U"
        i = j
        path.append(i)
    return path


def _exact_table(grid, powers, F, next_u, best_f):
    n = F.shape[0] - 1
    g = len(grid)
    sig = np.tile(grid, (n + 1, 1))
    best = np.zeros((n, g))
    for k in range(n):
        for i in range(g):
            s = best_f[k, i]
            if s >= 0:
                sig[k, i] = grid[s]
                best[k, i] = powers[i, next_u[k, i, s]]
    return ExtremeTable(grid, F, sig, best)


# --- evaluation ---------------------------------------------------------------


def grid_power(scn: DispatchScenario, k: int, p_b: float) -> float:
    return float(scn.renewable.values[k] - scn.load.values[k] + scn.battery.n_parallel * p_b)


def plan_cost(scn: DispatchScenario, e0: float, actions, k0: int = 0) -> float:
    """Trading plus degradation cost of ``actions`` with offline half-cycle counting."""
    traj = [e0]
    trade = 0.0
    for t, p in enumerate(actions):
        traj.append(step_battery(traj[-1], float(p), scn.battery))
        trade += -scn.price.values[k0 + t] * grid_power(scn, k0 + t, float(p))
    cyc = scn.battery.n_parallel * trajectory_cycle_cost(traj, scn.battery.e_max, scn.cycle)
    return trade + cyc


def baseline_cost(scn: DispatchScenario, k0: int, steps: int) -> float:
    sl = slice(k0, k0 + steps)
    return float(np.sum(-scn.price.values[sl] * (scn.renewable.values[sl] - scn.load.values[sl])))


def perturbed(scn: DispatchScenario, error: ForecastErrorSpec) -> DispatchScenario:
    """Forecast copy of the scenario with independent noise on each series."""
    if error.sigma_fraction == 0:
        return scn
    ren = inject_forecast_error(scn.renewable, ForecastErrorSpec(error.sigma_fraction, error.seed))
    ld = inject_forecast_error(scn.load, ForecastErrorSpec(error.sigma_fraction, error.seed + 1))
    pr = inject_forecast_error(scn.price, ForecastErrorSpec(error.sigma_fraction, error.seed + 2), clip_negative=False)
    return DispatchScenario(ren, ld, pr, scn.battery, scn.cycle, scn.horizon_steps, scn.grid_points)


def receding_horizon_run(
    scn: DispatchScenario,
    e0: float,
    total_steps: int,
    error_spec: ForecastErrorSpec | None = None,
    method: str = "exact",
    progress=None,
) -> RunReport:
    """Re-plan every step on forecasts, execute the first action against actual data."""
    n = scn.horizon_steps
    if total_steps < 1:
        raise ValueError("total_steps must be positive")
    if total_steps + n - 1 > scn.length:
        raise IndexError(f"need {total_steps + n - 1} stages of data, have {scn.length}")
    forecast = perturbed(scn, error_spec or ForecastErrorSpec())
    grid = scn.energy_grid()
    i = grid_index(e0, grid)
    traj = [float(grid[i])]
    acts, pg, costs = [], [], []
    for k in range(total_steps):
        actions, _, _ = solve_horizon(forecast, traj[-1], k, method)
        p = float(actions[0])
        e_next = step_battery(traj[-1], p, scn.battery)
        i = grid_index(e_next, grid)
        traj.append(float(grid[i]))
        acts.append(p)
        pg.append(grid_power(scn, k, p))
        costs.append(-scn.price.values[k] * pg[-1])
        if progress is not None:
            progress(k + 1, total_steps)
    traj = np.asarray(traj)
    bess = scn.battery.n_parallel * trajectory_cycle_cost(traj, scn.battery.e_max, scn.cycle)
    return RunReport(
        trajectory=traj,
        executed_actions=np.asarray(acts),
        p_grid=np.asarray(pg),
        step_costs=np.asarray(costs),
        bess_cost=float(bess),
        trading_cost=float(np.sum(costs)),
        baseline_cost=baseline_cost(scn, 0, total_steps),
    )
