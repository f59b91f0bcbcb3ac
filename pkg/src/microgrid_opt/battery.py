"""Battery dynamics and cycle-life economics.

Two degradation models live here:

* the half-cycle DOD model: each monotone excursion between adjacent
  extremes of the stored-energy curve costs ``0.5 * d**kp / N100 * Rc``;
* the Ah-throughput lifetime model: discharge events are scaled by how far
  their depth and current are from rated conditions and compared with the
  rated lifetime throughput.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Quartic DOD -> cycle-life fit, highest power first.
CYCLE_LIFE_COEFFS = (17612.0, -48325.0, 49771.0, -26417.0, 8898.0)
# Double exponential current (A) -> Ah capacity fit: a1, b1, a2, b2.
CAPACITY_COEFFS = (638.5, -0.03876, 975.9, -0.003531)


@dataclass(frozen=True)
class BatterySpec:
    e_max: float
    e_min: float
    e_cap_max: float
    p_charge_max: float
    p_discharge_max: float
    d_loss: float
    delta_t: float
    n_parallel: int = 1

    def __post_init__(self):
        if not 0 <= self.e_min < self.e_cap_max <= self.e_max:
            raise ValueError("need 0 <= e_min < e_cap_max <= e_max")
        if self.p_charge_max <= 0 or self.p_discharge_max <= 0:
            raise ValueError("power limits must be positive")
        if not 0 < self.d_loss < 1:
            raise ValueError("d_loss must lie in (0, 1)")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        if self.n_parallel < 1:
            raise ValueError("n_parallel must be >= 1")


@dataclass(frozen=True)
class CycleCostParams:
    n_fail_100: float
    kp: float
    r_c: float

    def __post_init__(self):
        if self.n_fail_100 <= 0 or self.kp <= 0 or self.r_c < 0:
            raise ValueError("need n_fail_100 > 0, kp > 0, r_c >= 0")

    @property
    def weight(self) -> float:
        """Cost of one half-cycle at 100% DOD."""
        return 0.5 * self.r_c / self.n_fail_100


@dataclass(frozen=True)
class ThroughputLifeSpec:
    l_r: float = 1500.0
    d_r: float = 1.0
    c_r: float = 936.0
    price: float = 44928.0
    voltage: float = 320.0
    poly_coeffs: tuple = CYCLE_LIFE_COEFFS
    exp_coeffs: tuple = CAPACITY_COEFFS

    def __post_init__(self):
        if self.l_r <= 0 or self.c_r <= 0 or self.price <= 0:
            raise ValueError("l_r, c_r and price must be positive")
        if not 0 < self.d_r <= 1:
            raise ValueError("d_r must lie in (0, 1]")
        if len(self.poly_coeffs) != 5 or len(self.exp_coeffs) != 4:
            raise ValueError("need 5 polynomial and 4 exponential coefficients")

    @property
    def capacity_wh(self) -> float:
        return self.c_r * self.voltage

    @property
    def rated_throughput(self) -> float:
        return self.l_r * self.d_r * self.c_r


@dataclass(frozen=True)
class DischargeEvent:
    dod: float
    current: float
    ah: float
    duration: float = 0.0

    def __post_init__(self):
        if min(self.dod, self.current, self.ah, self.duration) < 0 or self.dod > 1:
            raise ValueError(f"invalid discharge event {self}")


def step_battery(e: float, p_b: float, spec: BatterySpec) -> float:
    """Stored energy after applying ``p_b`` (positive = discharge) for one step."""
    if p_b > spec.p_discharge_max + 1e-12 or -p_b > spec.p_charge_max + 1e-12:
        raise ValueError(f"power {p_b} outside [-{spec.p_charge_max}, {spec.p_discharge_max}]")
    de = p_b * spec.delta_t
    return e - de - spec.d_loss * abs(de)


def power_for_move(de, delta_t: float, d_loss: float):
    """Inverse of :func:`step_battery`: the power that changes stored energy by ``de``."""
    de = np.asarray(de, dtype=float)
    p = np.where(de < 0, -de / (delta_t * (1 + d_loss)), -de / (delta_t * (1 - d_loss)))
    return p + 0.0  # no negative zeros for idle moves


def half_cycle_cost(d_half: float, p: CycleCostParams) -> float:
    if not 0 <= d_half <= 1:
        raise ValueError(f"d_half={d_half} outside [0, 1]")
    return p.weight * d_half**p.kp


def count_half_cycles(trajectory: Sequence[float], e_max: float) -> list[float]:
    """DOD of every half-cycle in a stored-energy trajectory, in order.

    The trajectory is split where the direction of movement flips; idle
    steps extend whatever segment is open (leading idles join the first one).
    """
    out = []
    if len(trajectory) == 0:
        return out
    start = prev = float(trajectory[0])
    direction = 0
    for e in map(float, trajectory[1:]):
        step = int(e > prev) - int(e < prev)
        if step == 0:
            continue
        if direction and step != direction:
            out.append(abs(prev - start) / e_max)
            start = prev
        direction = step
        prev = e
    if direction:
        out.append(abs(prev - start) / e_max)
    return out


def equivalent_full_cycles(dods: Sequence[float], kp: float) -> float:
    return float(sum(0.5 * d**kp for d in dods))


def trajectory_cycle_cost(trajectory: Sequence[float], e_max: float, p: CycleCostParams) -> float:
    return sum(half_cycle_cost(min(d, 1.0), p) for d in count_half_cycles(trajectory, e_max))


def incremental_loss_cost(e_k: float, e_next: float, sigma: float, p: CycleCostParams, e_max: float) -> float:
    """Per-step share of a half-cycle cost given the subsequent local extreme ``sigma``."""
    return p.weight * ((abs(e_k - sigma) / e_max) ** p.kp - (abs(e_next - sigma) / e_max) ** p.kp)


def update_extreme(e_prev: float, e_next: float, sigma_next: float) -> float:
    """Subsequent local extreme seen from ``e_prev`` one step earlier."""
    a = int(e_next > e_prev) - int(e_next < e_prev)
    b = int(sigma_next > e_next) - int(sigma_next < e_next)
    if a != 0 and b != 0 and a != b:
        return e_next
    return sigma_next


def extremes_along(trajectory: Sequence[float]) -> list[float]:
    """Sigma for every step of a trajectory, built backwards with :func:`update_extreme`."""
    n = len(trajectory) - 1
    if n < 1:
        return []
    sig = [0.0] * n
    sig[-1] = trajectory[-1]
    for k in range(n - 1, 0, -1):
        sig[k - 1] = update_extreme(trajectory[k - 1], trajectory[k], sig[k])
    return sig


def cycles_to_failure(d: float, p: CycleCostParams) -> float:
    """Cycles the cell survives when always cycled at depth ``d``."""
    if not 0 < d <= 1:
        raise ValueError(f"depth {d} outside (0, 1]")
    return p.n_fail_100 * d ** (-p.kp)


def lifetime_from_cycles(n_fail: float, operating_days: float, cycles_per_day: float) -> float:
    """Years of service: ``n_fail / (operating_days * cycles_per_day)``; ``inf`` when idle."""
    if operating_days <= 0 or cycles_per_day < 0:
        raise ValueError("operating_days must be positive and cycles_per_day non-negative")
    if cycles_per_day == 0:
        return math.inf
    return n_fail / (operating_days * cycles_per_day)


# --- Ah-throughput lifetime model -------------------------------------------


def cycle_life_at_dod(d: float, spec: ThroughputLifeSpec | None = None) -> float:
    if not 0 < d <= 1:
        raise ValueError(f"cycle-life fit only valid for DOD in (0, 1], got {d}")
    coeffs = (spec or ThroughputLifeSpec()).poly_coeffs
    return float(np.polyval(coeffs, d))


def capacity_at_current(i: float, spec: ThroughputLifeSpec | None = None) -> float:
    if i < 0:
        raise ValueError("current must be non-negative")
    a1, b1, a2, b2 = (spec or ThroughputLifeSpec()).exp_coeffs
    return a1 * math.exp(b1 * i) + a2 * math.exp(b2 * i)


def effective_ah(event: DischargeEvent, spec: ThroughputLifeSpec) -> float:
    if event.ah == 0:
        return 0.0
    l_a = cycle_life_at_dod(event.dod, spec)
    c_a = capacity_at_current(event.current, spec)
    if l_a <= 0 or c_a <= 0:
        raise ValueError(f"fit evaluates non-positive (L_A={l_a}, C_A={c_a}) for {event}")
    return (spec.l_r / l_a) * (spec.c_r / c_a) * event.ah


def lifetime_hours(events: Sequence[DischargeEvent], spec: ThroughputLifeSpec, period_hours: float) -> float:
    """Expected lifetime given the events observed during ``period_hours``; ``inf`` without throughput."""
    if period_hours <= 0:
        raise ValueError("period_hours must be positive")
    used = sum(effective_ah(ev, spec) for ev in events)
    if used == 0:
        return math.inf
    return spec.rated_throughput / used * period_hours


def throughput_operational_cost(events: Sequence[DischargeEvent], spec: ThroughputLifeSpec) -> float:
    return spec.price * sum(effective_ah(ev, spec) for ev in events) / spec.rated_throughput


def discharge_event(x_before: float, x_after: float, spec: ThroughputLifeSpec, step_hours: float) -> DischargeEvent | None:
    """Event for a discharge from ``x_before`` to ``x_after`` (Wh) over one step.

    Depth is measured at the post-discharge state; current is the average
    over the step at the nominal voltage.
    """
    if x_after >= x_before:
        return None
    ah = (x_before - x_after) / spec.voltage
    dod = min(max(1.0 - x_after / spec.capacity_wh, 0.0), 1.0)
    return DischargeEvent(dod=dod, current=ah / step_hours, ah=ah, duration=step_hours)
