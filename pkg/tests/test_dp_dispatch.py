import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from microgrid_opt.battery import CycleCostParams, step_battery, update_extreme
from microgrid_opt.dp_dispatch import (
    DispatchScenario,
    InfeasibleError,
    baseline_cost,
    plan_cost,
    receding_horizon_run,
    solve_horizon,
)
from microgrid_opt.oracles import brute_force_dispatch
from microgrid_opt.timeseries import ForecastErrorSpec

from .conftest import random_dispatch


def test_zero_prices_stay_idle(table_scenario):
    scn = table_scenario([20, 30, 10, 25], [25, 25, 25, 25], [0, 0, 0, 0], grid_points=11)
    actions, obj, _ = solve_horizon(scn, 6.25)
    assert np.all(actions == 0)
    assert obj == 0


def test_free_cycling_charges_early_sells_late(table_scenario):
    scn = table_scenario([40] * 4, [10] * 4, [10, 20, 30, 100], grid_points=11)
    scn = DispatchScenario(scn.renewable, scn.load, scn.price, scn.battery, CycleCostParams(2347, 1.1, 0.0), 4, 11)
    actions, obj, _ = solve_horizon(scn, scn.battery.e_min)
    best, ref = brute_force_dispatch(scn, scn.battery.e_min)
    assert obj == pytest.approx(best, rel=1e-9)
    assert actions[-1] > 0
    assert actions[0] < 0


@pytest.mark.parametrize("seed", range(12))
def test_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n, g = int(rng.integers(1, 5)), int(rng.integers(2, 8))
    scn = random_dispatch(seed, n, g)
    e0 = float(scn.energy_grid()[rng.integers(g)])
    actions, obj, _ = solve_horizon(scn, e0)
    best, _ = brute_force_dispatch(scn, e0)
    assert obj == pytest.approx(best, rel=1e-9, abs=1e-9)
    assert plan_cost(scn, e0, actions) == pytest.approx(obj, rel=1e-9, abs=1e-9)


def test_terminal_value_is_zero():
    scn = random_dispatch(3, 4, 6)
    _, _, table = solve_horizon(scn, float(scn.energy_grid()[2]))
    assert np.all(table.value[-1] == 0)


def test_extreme_method_matches_on_linear_degradation():
    # with kp = 1 the single-sigma recursion carries no approximation
    for seed in range(5):
        scn = random_dispatch(100 + seed, 4, 6, kp=1.0)
        e0 = float(scn.energy_grid()[3])
        _, a, _ = solve_horizon(scn, e0, method="extreme")
        _, b, _ = solve_horizon(scn, e0, method="exact")
        assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


def test_actions_and_states_within_limits():
    scn = random_dispatch(7, 6, 9)
    spec = scn.battery
    rep = receding_horizon_run(scn, float(scn.energy_grid()[0]), 1)
    actions, _, _ = solve_horizon(scn, float(scn.energy_grid()[4]))
    assert np.all(actions <= spec.p_discharge_max + 1e-9)
    assert np.all(-actions <= spec.p_charge_max + 1e-9)
    assert np.all((rep.trajectory >= spec.e_min - 1e-9) & (rep.trajectory <= spec.e_cap_max + 1e-9))


def test_rejects_off_range_initial_energy():
    scn = random_dispatch(1, 3, 5)
    with pytest.raises(InfeasibleError):
        solve_horizon(scn, scn.battery.e_cap_max + 5)


def test_update_extreme_rules():
    assert update_extreme(10, 8, 5) == 5  # discharge then discharge
    assert update_extreme(6, 8, 5) == 8  # charge then discharge
    assert update_extreme(7, 7, 3) == 3  # idle


def test_first_executed_action_is_single_shot_action():
    scn = random_dispatch(21, 5, 7, length=9)
    e0 = float(scn.energy_grid()[3])
    actions, _, _ = solve_horizon(scn, e0)
    rep = receding_horizon_run(scn, e0, 1)
    assert rep.executed_actions[0] == actions[0]


def test_tail_of_plan_is_optimal_from_its_state():
    scn = random_dispatch(22, 5, 7)
    e0 = float(scn.energy_grid()[3])
    actions, obj, table = solve_horizon(scn, e0)
    shorter = DispatchScenario(scn.renewable, scn.load, scn.price, scn.battery, scn.cycle, 4, scn.grid_points)
    e1 = step_battery(e0, float(actions[0]), scn.battery)
    tail, _, _ = solve_horizon(shorter, e1, 1)
    assert plan_cost(scn, e0, actions) == pytest.approx(obj, rel=1e-9, abs=1e-9)
    assert plan_cost(shorter, e1, tail, 1) <= plan_cost(shorter, e1, actions[1:], 1) + 1e-9


@given(st.integers(0, 10_000))
def test_plan_never_loses_to_no_battery(seed):
    scn = random_dispatch(seed, 4, 6)
    actions, obj, _ = solve_horizon(scn, float(scn.energy_grid()[2]))
    assert obj <= baseline_cost(scn, 0, 4) + 1e-6


def test_forecast_error_run_is_deterministic():
    scn = random_dispatch(5, 4, 6, length=10)
    e0 = float(scn.energy_grid()[2])
    a = receding_horizon_run(scn, e0, 6, ForecastErrorSpec(0.05, 3))
    b = receding_horizon_run(scn, e0, 6, ForecastErrorSpec(0.05, 3))
    assert a.executed_actions.tobytes() == b.executed_actions.tobytes()
