"""Wind-farm battery dispatch by forward approximate dynamic programming.

Energies are in Wh and prices in currency per MWh, so an energy ``g`` sold at
price ``m`` earns ``m * g / 1e6``. The battery state lives on a uniform grid
over ``[lb, ub]``; an action is a move between grid points. Discharging is
charged its Ah-throughput cost, evaluated at the depth reached after the
move and at the average current over the step.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .battery import DischargeEvent, ThroughputLifeSpec, discharge_event, effective_ah, lifetime_hours
from .dp_dispatch import RunReport, preference_rank
from .timeseries import ForecastErrorSpec, TimeSeries, gaussian, inject_forecast_error

WH_PER_MWH = 1e6


@dataclass(frozen=True)
class AdpDispatchConfig:
    life: ThroughputLifeSpec = field(default_factory=ThroughputLifeSpec)
    lb: float = 89856.0
    ub: float = 269568.0
    r_d: float = 8486.0
    r_c: float = 4992.0
    horizon: int = 6
    long_price_window: int = 240
    stepsize_eps: float = 10.0
    stepsize_beta: float = 0.6
    max_iterations: int = 200
    state_grid: int = 73
    step_hours: float = 1.0 / 12.0
    sample_sigma: float = 0.0

    def __post_init__(self):
        if not self.lb < self.ub:
            raise ValueError("need lb < ub")
        if self.r_d <= 0 or self.r_c <= 0:
            raise ValueError("r_d and r_c must be positive")
        if self.max_iterations < 1 or self.horizon < 1:
            raise ValueError("max_iterations and horizon must be >= 1")
        if self.state_grid < 2:
            raise ValueError("state_grid must be >= 2")
        if self.ub > self.life.capacity_wh:
            raise ValueError("ub exceeds the battery's energy capacity")

    def grid(self) -> np.ndarray:
        return np.linspace(self.lb, self.ub, self.state_grid)


def harmonic_stepsize(n: int, eps: float = 10.0, beta: float = 0.6) -> float:
    if n < 1 or eps <= 0 or beta <= 0:
        raise ValueError("need n >= 1, eps > 0, beta > 0")
    return eps / (eps + n**beta - 1.0)


def opr_cost(x: float, u: float, cfg: AdpDispatchConfig) -> float:
    """Throughput cost of moving from ``x`` by ``u`` (zero unless discharging)."""
    ev = discharge_event(x, x + u, cfg.life, cfg.step_hours)
    if ev is None:
        return 0.0
    return cfg.life.price * effective_ah(ev, cfg.life) / cfg.life.rated_throughput


@functools.lru_cache(maxsize=16)
def _opr_matrix(cfg: AdpDispatchConfig) -> np.ndarray:
    grid = cfg.grid()
    out = np.array([[opr_cost(xi, xj - xi, cfg) for xj in grid] for xi in grid])
    out.setflags(write=False)
    return out


def remaining_energy_cost(x_end: float, cfg: AdpDispatchConfig) -> float:
    """Cost of draining ``x_end`` down to ``lb`` at the 20-hour rate."""
    if x_end <= cfg.lb:
        return 0.0
    ev = DischargeEvent(
        dod=min(max(1.0 - cfg.lb / cfg.life.capacity_wh, 0.0), 1.0),
        current=cfg.life.c_r / 20.0,
        ah=(x_end - cfg.lb) / cfg.life.voltage,
        duration=20.0,
    )
    return cfg.life.price * effective_ah(ev, cfg.life) / cfg.life.rated_throughput


def remaining_energy_value(x_last: float, u_last: float, m_rm: float, cfg: AdpDispatchConfig) -> float:
    x_end = x_last + u_last
    if x_end < cfg.lb - 1e-9 or x_end > cfg.ub + 1e-9:
        raise ValueError(f"terminal energy {x_end} outside [{cfg.lb}, {cfg.ub}]")
    return m_rm * (x_end - cfg.lb) / WH_PER_MWH - remaining_energy_cost(x_end, cfg)


def long_run_price(price: np.ndarray, start: int, window: int) -> float:
    """Mean price over ``[start, start + window)``, truncated at the data end."""
    seg = price[start : start + window]
    if len(seg) == 0:
        return float(price[-1])
    return float(np.mean(seg))


def bound_action(x: float, m: float, cfg: AdpDispatchConfig) -> float:
    """Largest useful discharge (``<= 0``) from grid state ``x`` at price ``m``.

    Scans discharge moves from idle downwards and keeps the first maximiser of
    income minus throughput cost, so ties prefer the smaller discharge.
    """
    grid = cfg.grid()
    i = _nearest(grid, x)
    u = grid[i::-1] - grid[i]
    ok = u >= -cfg.r_d - 1e-9
    extra = np.where(ok, -m * u / WH_PER_MWH - _opr_matrix(cfg)[i, i::-1], -np.inf)
    return float(u[int(np.argmax(extra))])


@functools.lru_cache(maxsize=16)
def _drain_costs(cfg: AdpDispatchConfig) -> np.ndarray:
    return np.array([remaining_energy_cost(x, cfg) for x in cfg.grid()])


class Lattice:
    """Per-stage reward tables for one horizon of wind energy and prices.

    ``reward[k, i, j]`` is the income minus throughput cost of moving from
    ``grid[i]`` to ``grid[j]`` at stage ``k`` (``-inf`` when not allowed).
    """

    def __init__(self, wind, price, m_rm: float, cfg: AdpDispatchConfig):
        self.cfg = cfg
        self.wind = np.asarray(wind, dtype=float)
        self.price = np.asarray(price, dtype=float)
        if len(self.wind) != len(self.price) or len(self.wind) == 0:
            raise ValueError("wind and price must be non-empty and equally long")
        self.n = len(self.wind)
        self.grid = cfg.grid()
        g = len(self.grid)
        self.u = self.grid[None, :] - self.grid[:, None]
        self.opr = _opr_matrix(cfg)
        ramp_ok = (self.u >= -cfg.r_d - 1e-9) & (self.u <= cfg.r_c + 1e-9)
        self.allowed = ramp_ok[None] & (self.u[None] <= self.wind[:, None, None] + 1e-9)
        income = self.price[:, None, None] * (self.wind[:, None, None] - self.u[None]) / WH_PER_MWH
        self.reward = np.where(self.allowed, income - self.opr[None], -np.inf)
        self.m_rm = m_rm
        self.terminal = m_rm * (self.grid - cfg.lb) / WH_PER_MWH - _drain_costs(cfg)
        self.rank = preference_rank(-self.u)
        # upper bound: best pure-discharge (or idle) move per stage and state
        extra = self.price[:, None, None] * (-self.u[None]) / WH_PER_MWH - self.opr[None]
        disch = ramp_ok & (self.u <= 0)
        extra = np.where(disch[None], extra, -np.inf)
        self.bound = np.empty((self.n, g), dtype=np.int64)
        for k in range(self.n):
            for i in range(g):
                # scan from idle downwards so ties keep the smaller discharge
                cand = extra[k, i, i::-1]
                self.bound[k, i] = i - int(np.argmax(cand))

    def rollout_value(self, k: int, i: int) -> float:
        """Value of following the bound policy from ``(k, i)`` plus the terminal value."""
        total = 0.0
        for t in range(k, self.n):
            j = self.bound[t, i]
            total += self.reward[t, i, j]
            i = j
        return total + self.terminal[i]

    def candidates(self, k: int, i: int) -> np.ndarray:
        lo = self.bound[k, i]
        js = np.arange(lo, len(self.grid))
        return js[self.allowed[k, i, js]]


@dataclass
class ValueTable:
    values: np.ndarray  # (N, G)
    visited: np.ndarray  # (N, G) bool
    lattice: Lattice

    def get(self, k: int, i: int) -> float:
        if k == self.lattice.n:
            return float(self.lattice.terminal[i])
        if not self.visited[k, i]:
            self.values[k, i] = self.lattice.rollout_value(k, i)
            self.visited[k, i] = True
        return float(self.values[k, i])

    def greedy(self, k: int, i: int) -> tuple[int, float]:
        """Best move from ``(k, i)`` against the current estimates, and its value."""
        best_j, best_v, best_r = i, -np.inf, None
        lat = self.lattice
        for j in lat.candidates(k, i):
            v = lat.reward[k, i, j] + self.get(k + 1, int(j))
            r = lat.rank[i, j]
            tol = 1e-12 * (1 + abs(best_v)) if best_r is not None else 0.0
            if best_r is None or v > best_v + tol or (v >= best_v - tol and r < best_r):
                best_j, best_v, best_r = int(j), v, r
        return best_j, best_v

    def policy_path(self, i0: int) -> list[int]:
        path = [i0]
        for k in range(self.lattice.n):
            path.append(self.greedy(k, path[-1])[0])
        return path


def _nearest(grid, x) -> int:
    return int(np.argmin(np.abs(grid - x)))


def adp_train(wind, price, cfg: AdpDispatchConfig, seed: int = 0, x0: float | None = None, m_rm: float | None = None) -> ValueTable:
    """Forward single-pass value iteration over one horizon.

    ``wind`` (Wh per step) and ``price`` are the point forecasts. With
    ``cfg.sample_sigma > 0`` every iteration draws a perturbed sample path
    around them; otherwise the forecast itself is replayed.
    """
    wind = np.asarray(getattr(wind, "values", wind), dtype=float)
    price = np.asarray(getattr(price, "values", price), dtype=float)
    if m_rm is None:
        m_rm = float(np.mean(price))
    lat = Lattice(wind, price, m_rm, cfg)
    table = ValueTable(np.zeros((lat.n, len(lat.grid))), np.zeros((lat.n, len(lat.grid)), dtype=bool), lat)
    i0 = _nearest(lat.grid, cfg.lb if x0 is None else x0)
    rng = np.random.Generator(np.random.PCG64(seed))
    for it in range(1, cfg.max_iterations + 1):
        a = harmonic_stepsize(it, cfg.stepsize_eps, cfg.stepsize_beta)
        sample = table
        if cfg.sample_sigma > 0:
            w_s = np.maximum(wind + cfg.sample_sigma * np.mean(np.abs(wind)) * gaussian(rng, len(wind)), 0.0)
            m_s = price + cfg.sample_sigma * np.mean(np.abs(price)) * gaussian(rng, len(price))
            sample = ValueTable(table.values, table.visited, Lattice(w_s, m_s, m_rm, cfg))
        i = i0
        for k in range(lat.n):
            j, v_hat = sample.greedy(k, i)
            old = table.get(k, i)
            table.values[k, i] = (1 - a) * old + a * v_hat
            i = j
    return table


def exact_dp(lat: Lattice):
    """Optimal value and path on the same lattice by full backward recursion."""
    V, pol = kernels.lattice_dp(-lat.reward, lat.rank, -lat.terminal)
    return -V, pol


def path_value(lat: Lattice, path) -> float:
    return float(sum(lat.reward[k, a, b] for k, (a, b) in enumerate(zip(path, path[1:]))) + lat.terminal[path[-1]])


def cycling_action(x: float, charging: bool, p: float, cfg: AdpDispatchConfig, grid) -> tuple[float, bool]:
    """Max-rate cycling between the energy limits; returns ``(u, charging)``."""
    if charging and x >= cfg.ub - 1e-9:
        charging = False
    elif not charging and x <= cfg.lb + 1e-9:
        charging = True
    target = min(x + min(cfg.r_c, p), cfg.ub) if charging else max(x - cfg.r_d, cfg.lb)
    # stay on the grid: round towards the current state
    j = np.searchsorted(grid, target + 1e-9) - 1 if charging else np.searchsorted(grid, target - 1e-9)
    return float(grid[j] - x), charging


def adp_dispatch_run(
    wind: TimeSeries,
    price: TimeSeries,
    cfg: AdpDispatchConfig,
    error_spec: ForecastErrorSpec | None = None,
    total_steps: int | None = None,
    x0: float | None = None,
    seed: int = 0,
    progress=None,
) -> RunReport:
    """Rolling execution: train on the forecast window, apply the first greedy move."""
    error_spec = error_spec or ForecastErrorSpec()
    n = cfg.horizon
    w_true = np.asarray(wind.values, dtype=float)
    m_true = np.asarray(price.values, dtype=float)
    if total_steps is None:
        total_steps = len(w_true) - n + 1
    if total_steps < 1 or total_steps + n - 1 > len(w_true) or len(m_true) != len(w_true):
        raise IndexError("series too short for the requested rolling run")
    w_fc = inject_forecast_error(wind, error_spec).values
    m_fc = inject_forecast_error(price, ForecastErrorSpec(error_spec.sigma_fraction, error_spec.seed + 1), clip_negative=False).values
    grid = cfg.grid()
    i = _nearest(grid, cfg.lb if x0 is None else x0)
    traj, acts, g_out, costs, opr, events = [float(grid[i])], [], [], [], [], []
    cyc_x, cyc_charging, cyc_income, cyc_opr, cyc_events = float(grid[i]), True, 0.0, 0.0, []
    for k in range(total_steps):
        m_rm = long_run_price(m_fc, k + n, cfg.long_price_window)
        table = adp_train(w_fc[k : k + n], m_fc[k : k + n], cfg, seed=seed + k, x0=grid[i], m_rm=m_rm)
        j, _ = table.greedy(0, i)
        x, u = grid[i], grid[j] - grid[i]
        if u > w_true[k] + 1e-9:  # forecast overestimated wind: charge only what arrived
            j = int(np.searchsorted(grid, x + w_true[k] + 1e-9) - 1)
            u = grid[j] - x
        c = opr_cost(x, u, cfg)
        ev = discharge_event(x, x + u, cfg.life, cfg.step_hours)
        if ev is not None:
            events.append(ev)
        g = w_true[k] - u
        acts.append(float(u))
        g_out.append(float(g))
        opr.append(c)
        costs.append(-m_true[k] * g / WH_PER_MWH + c)
        i = j
        traj.append(float(grid[i]))

        uc, cyc_charging = cycling_action(cyc_x, cyc_charging, w_true[k], cfg, grid)
        cyc_opr += opr_cost(cyc_x, uc, cfg)
        ev = discharge_event(cyc_x, cyc_x + uc, cfg.life, cfg.step_hours)
        if ev is not None:
            cyc_events.append(ev)
        cyc_income += -m_true[k] * uc / WH_PER_MWH
        cyc_x += uc
        if progress is not None:
            progress(k + 1, total_steps)

    acts_a = np.asarray(acts)
    period = total_steps * cfg.step_hours
    extra_income = float(np.sum(-m_true[:total_steps] * acts_a) / WH_PER_MWH - np.sum(opr))
    life = lifetime_hours(events, cfg.life, period)
    cyc_life = lifetime_hours(cyc_events, cfg.life, period)
    return RunReport(
        trajectory=np.asarray(traj),
        executed_actions=acts_a,
        p_grid=np.asarray(g_out),
        step_costs=np.asarray(costs),
        bess_cost=float(np.sum(opr)),
        trading_cost=float(-np.sum(m_true[:total_steps] * np.asarray(g_out)) / WH_PER_MWH),
        baseline_cost=float(-np.sum(m_true[:total_steps] * w_true[:total_steps]) / WH_PER_MWH),
        extras={
            "additional_income": extra_income,
            "cycling_additional_income": float(cyc_income - cyc_opr),
            "lifetime_hours": None if math.isinf(life) else float(life),
            "cycling_lifetime_hours": None if math.isinf(cyc_life) else float(cyc_life),
        },
    )
