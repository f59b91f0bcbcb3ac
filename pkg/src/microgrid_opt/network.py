"""Networked microgrids coordinated by a central energy management system.

``K`` microgrids each run a DG, a battery and controllable loads (CL) and
exchange power with the network; the central system (CEMS, index ``K+1``)
owns one more DG and battery and settles the balance with the utility grid.
Decisions are made by approximate dynamic programming over post-decision
states, with one linear value-function approximation per stage fitted by
recursive least squares.

Vectors use fixed layouts:

* state (5K+3): ``EP, [E_B, P_G, P_CL, P_RES, P_L] * K, E_B_cems, P_G_cems``
* control (3K+2): ``[u_PG, u_PB, u_CL] * K, u_PG_cems, u_PB_cems``
* exogenous (2K+1): ``W_EP, [W_RES, W_L] * K``

Powers are in kW and battery energy in kWh. ``u_PB > 0`` discharges.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .adp_dispatch import harmonic_stepsize
from .dp_dispatch import InfeasibleError
from .timeseries import gaussian


class NumericalBreakdown(ArithmeticError):
    """The recursive least-squares update lost positive definiteness."""


# --- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class DgUnit:
    a_g: float
    b_g: float
    p_min: float
    p_max: float
    u_min: float
    u_max: float

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max or not self.u_min <= 0 <= self.u_max:
            raise ValueError(f"unordered DG bounds in {self}")


@dataclass(frozen=True)
class BessUnit:
    gamma1: float
    gamma2: float
    e_min: float
    e_max: float
    u_min: float
    u_max: float
    d_loss: float

    def __post_init__(self):
        if not 0 <= self.e_min <= self.e_max or not self.u_min <= 0 <= self.u_max:
            raise ValueError(f"unordered BESS bounds in {self}")
        if not 0 <= self.d_loss < 1:
            raise ValueError("d_loss must lie in [0, 1)")

    def step(self, e, u, delta):
        return e - u * delta - self.d_loss * np.abs(u * delta)


@dataclass(frozen=True)
class ClUnit:
    a_cl: float
    b_cl: float
    p_min: float
    p_max: float
    u_min: float
    u_max: float

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max or not self.u_min <= 0 <= self.u_max:
            raise ValueError(f"unordered CL bounds in {self}")


@dataclass(frozen=True)
class Microgrid:
    dg: DgUnit
    bess: BessUnit
    cl: ClUnit
    exc_min: float = -500.0
    exc_max: float = 500.0
    e0: float = 0.0
    pg0: float | None = None
    pcl0: float | None = None

    def __post_init__(self):
        if not self.exc_min <= 0 <= self.exc_max:
            raise ValueError("exchange limits must bracket zero")


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping for the state, control and exogenous vectors."""

    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("need at least one microgrid")

    @property
    def n_state(self) -> int:
        return 5 * self.K + 3

    @property
    def n_control(self) -> int:
        return 3 * self.K + 2

    @property
    def n_exog(self) -> int:
        return 2 * self.K + 1

    @property
    def n_features(self) -> int:
        return 13 * self.K + 8

    EP = 0

    def mg(self, i: int) -> tuple[int, int, int, int, int]:
        """State indices ``(E_B, P_G, P_CL, P_RES, P_L)`` of microgrid ``i`` (0-based)."""
        b = 1 + 5 * i
        return b, b + 1, b + 2, b + 3, b + 4

    def cems(self) -> tuple[int, int]:
        b = 1 + 5 * self.K
        return b, b + 1

    def mg_u(self, i: int) -> tuple[int, int, int]:
        b = 3 * i
        return b, b + 1, b + 2

    def cems_u(self) -> tuple[int, int]:
        return 3 * self.K, 3 * self.K + 1

    @cached_property
    def resources(self) -> np.ndarray:
        """State indices of the controllable resources (E_B, P_G, P_CL per MG; E_B, P_G at CEMS)."""
        idx = [j for i in range(self.K) for j in self.mg(i)[:3]]
        return np.array(idx + list(self.cems()))

    @cached_property
    def exogenous(self) -> np.ndarray:
        return np.array([j for i in range(self.K) for j in self.mg(i)[3:]])


@dataclass(frozen=True)
class NetworkConfig:
    microgrids: tuple
    cems_dg: DgUnit
    cems_bess: BessUnit
    cems_e0: float = 0.0
    cems_pg0: float | None = None
    delta: float = 1.0 / 12.0  # hours per stage
    levels: int = 9
    load_scale: float = 500.0
    price_scale: float = 0.3
    rls_lambda: float = 1.0
    rls_b0: float = 1000.0
    stepsize_eps: float = 1000.0
    stepsize_beta: float = 0.6
    explore: float = 0.3  # per-unit probability of a random feasible move while training

    def __post_init__(self):
        object.__setattr__(self, "microgrids", tuple(self.microgrids))
        if not self.microgrids:
            raise ValueError("need at least one microgrid")
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if not 0 < self.rls_lambda <= 1:
            raise ValueError("rls_lambda must lie in (0, 1]")
        if not 0 <= self.explore <= 1:
            raise ValueError("explore must lie in [0, 1]")

    @property
    def K(self) -> int:
        return len(self.microgrids)

    @cached_property
    def layout(self) -> Layout:
        return Layout(self.K)

    @cached_property
    def state_scale(self) -> np.ndarray:
        lay = self.layout
        s = np.ones(lay.n_state)
        s[lay.EP] = self.price_scale
        for i, mg in enumerate(self.microgrids):
            e, pg, pcl, res, ld = lay.mg(i)
            s[e], s[pg], s[pcl] = mg.bess.e_max or 1.0, mg.dg.p_max or 1.0, mg.cl.p_max or 1.0
            s[res] = s[ld] = self.load_scale
        e, pg = lay.cems()
        s[e], s[pg] = self.cems_bess.e_max or 1.0, self.cems_dg.p_max or 1.0
        return s


@dataclass(frozen=True)
class NetworkData:
    """Per-MG renewable and load series (K, T) plus the price series (T,)."""

    res: np.ndarray
    load: np.ndarray
    price: np.ndarray

    def __post_init__(self):
        res = np.atleast_2d(np.asarray(self.res, dtype=float))
        load = np.atleast_2d(np.asarray(self.load, dtype=float))
        price = np.asarray(self.price, dtype=float).reshape(-1)
        if res.shape != load.shape or res.shape[1] != len(price):
            raise ValueError("res/load must be (K, T) and price (T,)")
        object.__setattr__(self, "res", res)
        object.__setattr__(self, "load", load)
        object.__setattr__(self, "price", price)

    @property
    def length(self) -> int:
        return len(self.price)

    def exogenous(self, t: int) -> np.ndarray:
        """``W_{t}``: increments from stage ``t-1`` to ``t`` in the exogenous layout."""
        w = [self.price[t] - self.price[t - 1]]
        for r, l in zip(self.res, self.load):
            w += [r[t] - r[t - 1], l[t] - l[t - 1]]
        return np.array(w)

    def sample(self, rng: np.random.Generator, sigma_fraction: float) -> "NetworkData":
        """Sample path around these series; the noise is zero-mean, so they remain the mean path."""
        if sigma_fraction == 0:
            return self

        def noisy(x, clip):
            out = x + sigma_fraction * np.mean(np.abs(x)) * gaussian(rng, len(x))
            return np.maximum(out, 0.0) if clip else out

        return NetworkData(
            np.array([noisy(r, True) for r in self.res]),
            np.array([noisy(l, True) for l in self.load]),
            noisy(self.price, False),
        )


def table_network(max_loads=(300.0, 250.0, 350.0), d_convention: str = "efficiency", cems_e0: float = 240.0) -> NetworkConfig:
    """Three microgrids plus CEMS with the reference DG/BESS/CL parameters.

    CL capacity is 20% of each microgrid's peak load and its ramp 5%.
    ``d_convention="efficiency"`` reads the tabulated d (0.95/0.98) as an
    efficiency, i.e. a loss factor of ``1 - d``.
    """
    d_tab = (0.95, 0.98, 0.95, 0.98)
    loss = [1 - d if d_convention == "efficiency" else d for d in d_tab]
    dgs = [DgUnit(0.3, 0.05, 20, 50, -20, 20), DgUnit(0.22, 0.03, 40, 180, -20, 20), DgUnit(0.43, 0.04, 30, 160, -20, 20)]
    bess = [BessUnit(0.08, 0.08, 40, 160, -150, 150, loss[0]), BessUnit(0.08, 0.08, 30, 160, -125, 125, loss[1]),
            BessUnit(0.08, 0.08, 50, 180, -160, 160, loss[2])]
    e0 = (100.0, 120.0, 140.0)
    mgs = []
    for dg, b, ml, e in zip(dgs, bess, max_loads, e0):
        cl = ClUnit(0.33, 0.05, 0.0, 0.2 * ml, -0.05 * ml, 0.05 * ml)
        mgs.append(Microgrid(dg, b, cl, -500.0, 500.0, e0=e))
    return NetworkConfig(
        microgrids=tuple(mgs),
        cems_dg=DgUnit(0.31, 0.06, 100, 500, -50, 50),
        cems_bess=BessUnit(0.08, 0.08, 80, 360, -300, 300, loss[3]),
        cems_e0=cems_e0,
        load_scale=float(max(max_loads)),
    )


# --- model ---------------------------------------------------------------------


def initial_state(cfg: NetworkConfig, data: NetworkData, t: int = 0) -> np.ndarray:
    lay = cfg.layout
    s = np.zeros(lay.n_state)
    s[lay.EP] = data.price[t]
    for i, mg in enumerate(cfg.microgrids):
        e, pg, pcl, res, ld = lay.mg(i)
        s[e] = mg.e0
        s[pg] = 0.5 * (mg.dg.p_min + mg.dg.p_max) if mg.pg0 is None else mg.pg0
        s[pcl] = mg.cl.p_min if mg.pcl0 is None else mg.pcl0
        s[res] = data.res[i, t]
        s[ld] = data.load[i, t]
    e, pg = lay.cems()
    s[e] = cfg.cems_e0
    s[pg] = 0.5 * (cfg.cems_dg.p_min + cfg.cems_dg.p_max) if cfg.cems_pg0 is None else cfg.cems_pg0
    return s


def exchange_power(mg_index: int, state, u, cfg: NetworkConfig) -> float:
    """Net import of microgrid ``mg_index`` (1-based) from the network."""
    lay = cfg.layout
    if not 1 <= mg_index <= lay.K:
        raise IndexError(f"microgrid index {mg_index} outside 1..{lay.K}")
    _, pg, pcl, res, ld = lay.mg(mg_index - 1)
    upb = lay.mg_u(mg_index - 1)[1]
    return float(state[ld] - state[pcl] - state[res] - state[pg] - u[upb])


def grid_power(state, u, cfg: NetworkConfig) -> float:
    """Utility-grid import that closes the network balance."""
    lay = cfg.layout
    total = sum(exchange_power(i, state, u, cfg) for i in range(1, lay.K + 1))
    return float(total - state[lay.cems()[1]] - u[lay.cems_u()[1]])


def step_cost(state, u, cfg: NetworkConfig) -> float:
    """Operating cost of every unit plus the electricity bill for one stage."""
    lay = cfg.layout
    ep = state[lay.EP]
    total = 0.0
    exc = 0.0
    for i, mg in enumerate(cfg.microgrids):
        e, pg, pcl, _, _ = lay.mg(i)
        upb = u[lay.mg_u(i)[1]]
        total += mg.bess.gamma1 * abs(upb) * cfg.delta + mg.bess.gamma2 * state[e]
        total += mg.dg.a_g * state[pg] + mg.dg.b_g
        total += mg.cl.a_cl + mg.cl.b_cl * state[pcl]
        exc += exchange_power(i + 1, state, u, cfg)
    e, pg = lay.cems()
    upb = u[lay.cems_u()[1]]
    total += cfg.cems_bess.gamma1 * abs(upb) * cfg.delta + cfg.cems_bess.gamma2 * state[e]
    total += cfg.cems_dg.a_g * state[pg] + cfg.cems_dg.b_g
    return float(total + ep * (2 * exc - state[pg] - upb))


def post_decision(state, u, cfg: NetworkConfig) -> np.ndarray:
    lay = cfg.layout
    s = np.array(state, dtype=float)
    for i, mg in enumerate(cfg.microgrids):
        e, pg, pcl, _, _ = lay.mg(i)
        upg, upb, ucl = (u[j] for j in lay.mg_u(i))
        s[e] = mg.bess.step(s[e], upb, cfg.delta)
        s[pg] += upg
        s[pcl] += ucl
    e, pg = lay.cems()
    upg, upb = (u[j] for j in lay.cems_u())
    s[e] = cfg.cems_bess.step(s[e], upb, cfg.delta)
    s[pg] += upg
    return s


def apply_exogenous(post, w, cfg: NetworkConfig) -> np.ndarray:
    lay = cfg.layout
    s = np.array(post, dtype=float)
    s[lay.EP] += w[0]
    for i in range(lay.K):
        _, _, _, res, ld = lay.mg(i)
        s[res] += w[1 + 2 * i]
        s[ld] += w[2 + 2 * i]
    return s


def check_feasible(state, u, cfg: NetworkConfig, tol: float = 1e-9) -> None:
    """Raise ``InfeasibleError`` naming the first violated box."""
    lay = cfg.layout
    post = post_decision(state, u, cfg)
    units = [(mg.dg, mg.bess, mg.cl, lay.mg(i), lay.mg_u(i), mg) for i, mg in enumerate(cfg.microgrids)]
    units.append((cfg.cems_dg, cfg.cems_bess, None, lay.cems(), lay.cems_u(), None))
    for dg, bess, cl, si, ui, mg in units:
        checks = [
            (u[ui[0]], dg.u_min, dg.u_max, "DG ramp"),
            (post[si[1]], dg.p_min, dg.p_max, "DG output"),
            (u[ui[1]], bess.u_min, bess.u_max, "BESS power"),
            (post[si[0]], bess.e_min, bess.e_max, "BESS energy"),
        ]
        if cl is not None:
            checks += [(u[ui[2]], cl.u_min, cl.u_max, "CL ramp"), (post[si[2]], cl.p_min, cl.p_max, "CL power")]
        for v, lo, hi, name in checks:
            if v < lo - tol or v > hi + tol:
                raise InfeasibleError(f"{name} {v:.6g} outside [{lo}, {hi}]")
    for i, mg in enumerate(cfg.microgrids):
        x = exchange_power(i + 1, state, u, cfg)
        if x < mg.exc_min - tol or x > mg.exc_max + tol:
            raise InfeasibleError(f"exchange of microgrid {i + 1} ({x:.6g}) outside limits")


def transition(state, u, w, cfg: NetworkConfig) -> np.ndarray:
    check_feasible(state, u, cfg)
    return apply_exogenous(post_decision(state, u, cfg), w, cfg)


# --- value function approximation ------------------------------------------------


def features(post, cfg: NetworkConfig) -> np.ndarray:
    """Basis vector of a post-decision state (or a stack of them, one per row).

    Groups: scaled state; squared resources; price times resources; price
    times renewable and load; constant.
    """
    lay = cfg.layout
    x = np.asarray(post, dtype=float) / cfg.state_scale
    ep = x[..., lay.EP : lay.EP + 1]
    r = x[..., lay.resources]
    ex = x[..., lay.exogenous]
    one = np.ones(x.shape[:-1] + (1,))
    return np.concatenate([x, r * r, ep * r, ep * ex, one], axis=-1)


@dataclass
class ValueFunctionApprox:
    theta: np.ndarray  # (N, F)
    B: np.ndarray  # (N, F, F)
    lam: float = 1.0

    @classmethod
    def zeros(cls, n_stages: int, n_features: int, b0: float = 1000.0, lam: float = 1.0):
        B = np.broadcast_to(b0 * np.eye(n_features), (n_stages, n_features, n_features)).copy()
        return cls(np.zeros((n_stages, n_features)), B, lam)

    def value(self, t: int, phi) -> np.ndarray:
        if t >= len(self.theta):
            return np.zeros(np.shape(phi)[:-1])
        return np.asarray(phi) @ self.theta[t]


def rls_update(vfa: ValueFunctionApprox, phi, v_hat: float, t: int) -> ValueFunctionApprox:
    """Recursive least-squares step for stage ``t`` (in place; returns ``vfa``)."""
    phi = np.asarray(phi, dtype=float)
    B = vfa.B[t]
    b = B @ phi
    gamma = vfa.lam + phi @ b
    if not gamma > 0 or not np.isfinite(gamma):
        raise NumericalBreakdown(f"RLS normalizer {gamma} is not positive at stage {t}")
    err = vfa.theta[t] @ phi - v_hat
    vfa.theta[t] = vfa.theta[t] - (b / gamma) * err
    vfa.B[t] = (B - np.outer(b, b) / gamma) / vfa.lam
    return vfa


# --- decisions -------------------------------------------------------------------


def control_levels(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` evenly spaced levels over ``[lo, hi]`` plus zero, ordered by preference."""
    v = np.union1d(np.linspace(lo, hi, n), [0.0])
    return v[np.lexsort((v < 0, np.abs(v)))]


@dataclass
class _UnitMoves:
    u: np.ndarray  # (C, n_ctrl) candidate controls for this unit
    post: np.ndarray  # (C, n_state) post-decision states (other units idle)
    cost: np.ndarray  # (C,) unit share of the stage cost


def _unit_moves(state, cfg: NetworkConfig, unit: int, levels: int) -> _UnitMoves:
    lay = cfg.layout
    ep = state[lay.EP]
    if unit < lay.K:
        mg = cfg.microgrids[unit]
        e, pg, pcl, res, ld = lay.mg(unit)
        grids = [control_levels(mg.dg.u_min, mg.dg.u_max, levels), control_levels(mg.bess.u_min, mg.bess.u_max, levels),
                 control_levels(mg.cl.u_min, mg.cl.u_max, levels)]
        U = np.array(list(itertools.product(*grids)))
        upg, upb, ucl = U.T
        e_new = mg.bess.step(state[e], upb, cfg.delta)
        pg_new, pcl_new = state[pg] + upg, state[pcl] + ucl
        exc = state[ld] - state[pcl] - state[res] - state[pg] - upb
        tol = 1e-9
        ok = ((pg_new >= mg.dg.p_min - tol) & (pg_new <= mg.dg.p_max + tol)
              & (e_new >= mg.bess.e_min - tol) & (e_new <= mg.bess.e_max + tol)
              & (pcl_new >= mg.cl.p_min - tol) & (pcl_new <= mg.cl.p_max + tol)
              & (exc >= mg.exc_min - tol) & (exc <= mg.exc_max + tol))
        cost = (mg.bess.gamma1 * np.abs(upb) * cfg.delta + mg.bess.gamma2 * state[e] + mg.dg.a_g * state[pg] + mg.dg.b_g
                + mg.cl.a_cl + mg.cl.b_cl * state[pcl] + 2 * ep * exc)
        post = np.tile(state, (len(U), 1))
        post[:, e], post[:, pg], post[:, pcl] = e_new, pg_new, pcl_new
    else:
        dg, bess = cfg.cems_dg, cfg.cems_bess
        e, pg = lay.cems()
        grids = [control_levels(dg.u_min, dg.u_max, levels), control_levels(bess.u_min, bess.u_max, levels)]
        U = np.array(list(itertools.product(*grids)))
        upg, upb = U.T
        e_new = bess.step(state[e], upb, cfg.delta)
        pg_new = state[pg] + upg
        tol = 1e-9
        ok = ((pg_new >= dg.p_min - tol) & (pg_new <= dg.p_max + tol)
              & (e_new >= bess.e_min - tol) & (e_new <= bess.e_max + tol))
        cost = (bess.gamma1 * np.abs(upb) * cfg.delta + bess.gamma2 * state[e] + dg.a_g * state[pg] + dg.b_g
                - ep * (state[pg] + upb))
        post = np.tile(state, (len(U), 1))
        post[:, e], post[:, pg] = e_new, pg_new
    if not ok.any():
        raise InfeasibleError(f"no feasible control for unit {unit + 1} at this state")
    return _UnitMoves(U[ok], post[ok], cost[ok])


def _argmin_first(v: np.ndarray) -> int:
    m = v.min()
    return int(np.flatnonzero(v <= m + 1e-12 * (1 + abs(m)))[0])


def greedy_action(state, vfa: ValueFunctionApprox | None, t: int, cfg: NetworkConfig, levels: int | None = None,
                  rng: np.random.Generator | None = None, explore: float = 0.0):
    """Minimize stage cost plus post-decision value; returns ``(u, v_hat, post)``.

    Every term is separable by unit and the grid import is free, so the joint
    minimum is the concatenation of per-unit minima. With ``explore > 0`` each
    unit executes a uniformly drawn feasible move with that probability; the
    returned ``v_hat`` is always the greedy minimum.
    """
    lay = cfg.layout
    levels = cfg.levels if levels is None else levels
    u = np.zeros(lay.n_control)
    post = np.array(state, dtype=float)
    stage = 0.0
    base_phi_val = 0.0 if vfa is None else float(vfa.value(t, features(state, cfg)))
    extra = 0.0
    for unit in range(lay.K + 1):
        mv = _unit_moves(state, cfg, unit, levels)
        if vfa is None:
            score = mv.cost
            delta_v = np.zeros(len(mv.cost))
        else:
            # value change relative to the all-idle post state isolates this unit's share
            delta_v = vfa.value(t, features(mv.post, cfg)) - base_phi_val
            score = mv.cost + delta_v
        k = _argmin_first(score)
        stage += mv.cost[k]
        extra += delta_v[k]
        if explore > 0 and rng.random() < explore:
            k = int(rng.integers(len(mv.cost)))
        idx = lay.mg_u(unit) if unit < lay.K else lay.cems_u()
        u[list(idx)] = mv.u[k]
        changed = mv.post[k] != state
        post[changed] = mv.post[k][changed]
    v_hat = stage + (0.0 if vfa is None else base_phi_val + extra)
    return u, float(v_hat), post


@dataclass
class TrainResult:
    vfa: ValueFunctionApprox
    cost_trace: np.ndarray
    theta_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))


def adp_train(cfg: NetworkConfig, data: NetworkData, iterations: int, seed: int = 0, sigma_fraction: float = 0.0,
              n_stages: int | None = None, progress=None) -> TrainResult:
    """Forward ADP passes over sampled paths around ``data``.

    Each pass picks greedy controls against the current approximations and
    feeds each observed value back to the previous stage's post-decision
    state, smoothed with the harmonic stepsize.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    n = data.length if n_stages is None else n_stages
    if n < 1 or n > data.length:
        raise ValueError("n_stages outside the data range")
    lay = cfg.layout
    vfa = ValueFunctionApprox.zeros(n, lay.n_features, cfg.rls_b0, cfg.rls_lambda)
    rng = np.random.Generator(np.random.PCG64(seed))
    trace = np.zeros(iterations)
    norms = np.zeros(iterations)
    for it in range(1, iterations + 1):
        a = harmonic_stepsize(it, cfg.stepsize_eps, cfg.stepsize_beta)
        path = data.sample(rng, sigma_fraction)
        s = initial_state(cfg, path)
        prev_phi = None
        total = 0.0
        for t in range(n):
            u, v_hat, post = greedy_action(s, vfa, t, cfg, rng=rng, explore=cfg.explore)
            if prev_phi is not None:
                target = (1 - a) * float(vfa.value(t - 1, prev_phi)) + a * v_hat
                rls_update(vfa, prev_phi, target, t - 1)
            total += step_cost(s, u, cfg)
            prev_phi = features(post, cfg)
            if t + 1 < n:
                s = apply_exogenous(post, path.exogenous(t + 1), cfg)
        trace[it - 1] = total
        norms[it - 1] = float(np.linalg.norm(vfa.theta))
        if progress is not None:
            progress(it, iterations)
    return TrainResult(vfa, trace, norms)


@dataclass
class PolicyRun:
    states: np.ndarray
    controls: np.ndarray
    stage_costs: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.stage_costs))

    def rows(self, cfg: NetworkConfig):
        lay = cfg.layout
        for t, (s, u, c) in enumerate(zip(self.states, self.controls, self.stage_costs)):
            exc = [exchange_power(i, s, u, cfg) for i in range(1, lay.K + 1)]
            yield (t, *exc, grid_power(s, u, cfg), float(s[lay.EP]), float(c))


def simulate_policy(cfg: NetworkConfig, data: NetworkData, vfa: ValueFunctionApprox | None, n_stages: int | None = None) -> PolicyRun:
    """Run the greedy policy for ``vfa`` (``None`` = myopic) on ``data``."""
    n = data.length if n_stages is None else n_stages
    s = initial_state(cfg, data)
    states, controls, costs = [], [], []
    for t in range(n):
        u, _, post = greedy_action(s, vfa, t, cfg)
        check_feasible(s, u, cfg)
        states.append(s)
        controls.append(u)
        costs.append(step_cost(s, u, cfg))
        if t + 1 < n:
            s = apply_exogenous(post, data.exogenous(t + 1), cfg)
    return PolicyRun(np.array(states), np.array(controls), np.array(costs))


def myopic_baseline(cfg: NetworkConfig, data: NetworkData, n_stages: int | None = None) -> PolicyRun:
    return simulate_policy(cfg, data, None, n_stages)


def exact_dp(cfg: NetworkConfig, data: NetworkData, n_stages: int, levels: int | None = None) -> float:
    """Minimum total cost over every control sequence on the enumeration grid.

    Deterministic data only; exponential in ``n_stages``, meant for tiny instances.
    """
    levels = cfg.levels if levels is None else levels
    lay = cfg.layout
    memo: dict = {}

    def joint_moves(s):
        per = [_unit_moves(s, cfg, unit, levels) for unit in range(lay.K + 1)]
        for combo in itertools.product(*(range(len(m.cost)) for m in per)):
            u = np.concatenate([per[unit].u[c] for unit, c in enumerate(combo)])
            yield u

    def solve(t, s):
        if t == n_stages:
            return 0.0
        key = (t, tuple(np.round(s, 9)))
        if key in memo:
            return memo[key]
        best = np.inf
        for u in joint_moves(s):
            c = step_cost(s, u, cfg)
            post = post_decision(s, u, cfg)
            nxt = apply_exogenous(post, data.exogenous(t + 1), cfg) if t + 1 < n_stages else post
            best = min(best, c + solve(t + 1, nxt))
        memo[key] = best
        return best

    return float(solve(0, initial_state(cfg, data)))


def with_levels(cfg: NetworkConfig, levels: int) -> NetworkConfig:
    return replace(cfg, levels=levels)
