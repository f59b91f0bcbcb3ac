import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microgrid_opt.battery import (
    BatterySpec,
    CycleCostParams,
    DischargeEvent,
    ThroughputLifeSpec,
    capacity_at_current,
    count_half_cycles,
    cycle_life_at_dod,
    equivalent_full_cycles,
    extremes_along,
    half_cycle_cost,
    incremental_loss_cost,
    lifetime_from_cycles,
    lifetime_hours,
    power_for_move,
    step_battery,
    throughput_operational_cost,
    trajectory_cycle_cost,
)

SPEC = BatterySpec(e_max=12.5, e_min=1.25, e_cap_max=11.25, p_charge_max=24, p_discharge_max=24,
                   d_loss=0.05, delta_t=1 / 12)
CC = CycleCostParams(n_fail_100=2347, kp=1.1, r_c=2.5e6)
LIFE = ThroughputLifeSpec()


def test_step_battery_examples():
    assert step_battery(10, 0, SPEC) == 10
    assert step_battery(10, 12, SPEC) == pytest.approx(8.95, abs=1e-12)
    assert step_battery(10, -12, SPEC) == pytest.approx(10.95, abs=1e-12)
    with pytest.raises(ValueError):
        step_battery(10, 25, SPEC)


@given(st.floats(-24, 24).filter(lambda p: abs(p) > 1e-6))
def test_step_battery_loses_energy(p):
    assert step_battery(10, p, SPEC) < 10 - p * SPEC.delta_t


@given(st.floats(-2, 2))
def test_power_for_move_inverts_step(de):
    p = float(power_for_move(de, SPEC.delta_t, SPEC.d_loss))
    if abs(p) <= 24:
        assert step_battery(5, p, SPEC) == pytest.approx(5 + de, abs=1e-12)


def test_half_cycle_cost_examples():
    assert half_cycle_cost(0, CC) == 0
    assert half_cycle_cost(1, CC) == pytest.approx(532.60, abs=0.01)
    assert half_cycle_cost(0.5, CC) == pytest.approx(248.45, rel=1e-4)
    with pytest.raises(ValueError):
        half_cycle_cost(1.2, CC)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_half_cycle_cost_convex_increasing(a, b, w):
    lo, hi = sorted((a, b))
    assert half_cycle_cost(lo, CC) <= half_cycle_cost(hi, CC) + 1e-12
    mid = w * lo + (1 - w) * hi
    chord = w * half_cycle_cost(lo, CC) + (1 - w) * half_cycle_cost(hi, CC)
    assert half_cycle_cost(mid, CC) <= chord + 1e-9


def test_count_half_cycles_examples():
    assert count_half_cycles([5, 5, 5], 12.5) == []
    assert count_half_cycles([10, 8, 6], 12.5) == pytest.approx([0.32])
    assert count_half_cycles([10, 6, 8, 4], 12.5) == pytest.approx([0.32, 0.16, 0.32])


def test_count_half_cycles_flats_extend_segments():
    assert count_half_cycles([5, 5, 7, 7, 9, 9, 4, 4], 10) == pytest.approx([0.4, 0.5])


def test_equivalent_full_cycles_examples():
    assert equivalent_full_cycles([], 1.1) == 0
    assert equivalent_full_cycles([1.0, 1.0], 1.1) == pytest.approx(1.0)
    oracle = 0.5 * (2 * math.pow(0.32, 1.1) + math.pow(0.16, 1.1))
    assert equivalent_full_cycles([0.32, 0.16, 0.32], 1.1) == pytest.approx(oracle, rel=1e-12)
    assert oracle == pytest.approx(0.3521, abs=1e-4)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=10), st.randoms())
def test_equivalent_full_cycles_permutation_and_monotone(dods, rnd):
    shuffled = list(dods)
    rnd.shuffle(shuffled)
    base = equivalent_full_cycles(dods, 1.1)
    assert equivalent_full_cycles(shuffled, 1.1) == pytest.approx(base)
    bumped = [min(dods[0] + 0.1, 1.0)] + dods[1:]
    assert equivalent_full_cycles(bumped, 1.1) >= base


def test_incremental_loss_examples():
    assert incremental_loss_cost(7, 7, 3, CC, 12.5) == 0
    oracle = (math.pow(0.32, 1.1) - math.pow(0.16, 1.1)) * 0.5 * 2.5e6 / 2347
    assert incremental_loss_cost(10, 8, 6, CC, 12.5) == pytest.approx(oracle, rel=1e-12)
    assert oracle == pytest.approx(81.13, abs=0.01)


def test_worked_case_three_steps():
    # A >= B, C is the next extreme, D follows after the turn
    a, b, c, d = 10.0, 8.0, 5.0, 9.0
    total = (incremental_loss_cost(a, b, c, CC, 12.5) + incremental_loss_cost(b, c, c, CC, 12.5)
             + incremental_loss_cost(c, d, d, CC, 12.5))
    expect = half_cycle_cost(abs(a - c) / 12.5, CC) + half_cycle_cost(abs(c - d) / 12.5, CC)
    assert total == pytest.approx(expect, rel=1e-12)


@settings(max_examples=200)
@given(st.lists(st.integers(0, 10), min_size=2, max_size=50))
def test_telescoping_identity(levels):
    traj = [1.25 + lv for lv in levels]
    sig = extremes_along(traj)
    inc = sum(incremental_loss_cost(traj[k], traj[k + 1], sig[k], CC, 12.5) for k in range(len(sig)))
    ref = trajectory_cycle_cost(traj, 12.5, CC)
    assert inc == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_curve_fit_anchors():
    assert cycle_life_at_dod(1.0) == 1539
    assert capacity_at_current(0) == pytest.approx(1614.4, abs=1e-9)
    assert LIFE.l_r / cycle_life_at_dod(1.0) == pytest.approx(0.9747, abs=1e-4)
    with pytest.raises(ValueError):
        cycle_life_at_dod(0.0)


def test_capacity_strictly_decreasing():
    c = [capacity_at_current(i) for i in np.linspace(0, 400, 401)]
    assert np.all(np.diff(c) < 0)


def test_lifetime_no_events_unbounded():
    assert lifetime_hours([], LIFE, 24) == math.inf
    assert throughput_operational_cost([], LIFE) == 0


def test_rated_event_gives_rated_lifetime():
    # rated current is where C_A equals C_R; find it numerically
    lo, hi = 0.0, 400.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if capacity_at_current(mid) > LIFE.c_r else (lo, mid)
    spec = ThroughputLifeSpec(poly_coeffs=(0, 0, 0, 0, LIFE.l_r))
    ev = DischargeEvent(dod=1.0, current=lo, ah=LIFE.c_r)
    assert lifetime_hours([ev], spec, 24) == pytest.approx(LIFE.l_r * LIFE.d_r * 24, rel=1e-9)
    assert throughput_operational_cost([ev], spec) == pytest.approx(spec.price / (spec.l_r * spec.d_r), rel=1e-9)


def test_cost_and_lifetime_identity():
    evs = [DischargeEvent(0.6, 120.0, 40.0, 0.5), DischargeEvent(0.9, 30.0, 15.0, 0.5)]
    t = 6.0
    assert throughput_operational_cost(evs, LIFE) == pytest.approx(LIFE.price * t / lifetime_hours(evs, LIFE, t))


def test_lifetime_from_cycles():
    assert lifetime_from_cycles(2347, 365, 1) == pytest.approx(2347 / 365)
    assert lifetime_from_cycles(2347, 365, 0) == math.inf


def test_numpy_scalars_are_accepted():
    traj = np.array([5.0, 8.0, 3.0, 3.0, 9.0])
    assert extremes_along(traj) == extremes_along(traj.tolist())
    assert count_half_cycles(traj, 12.5) == count_half_cycles(traj.tolist(), 12.5)
