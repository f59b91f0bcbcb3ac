import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microgrid_opt.battery import BatterySpec
from microgrid_opt.dp_dispatch import InfeasibleError
from microgrid_opt.oracles import box_least_squares, brute_force_smooth
from microgrid_opt.smoothing import (
    ConvergenceError,
    SmoothingParams,
    regulated_wind,
    smooth_bess,
    smooth_setpoints,
    smoothing_cost,
    smoothing_run,
    variation,
)
from microgrid_opt.tcl import TclParams

TCL = TclParams(n_units=320, beta=300.0, band_low=20.0, band_high=25.0)
SM = SmoothingParams(grid_points=11)
BESS = BatterySpec(e_max=240, e_min=72, e_cap_max=168, p_charge_max=70, p_discharge_max=70, d_loss=0.05,
                   delta_t=1 / 6)


def _stage_one_objective(sp, wind, t_out):
    return variation(regulated_wind(wind, t_out, sp, TCL.gain))


def test_constant_inputs_give_constant_setpoints():
    sp, pw = smooth_setpoints(np.full(8, 70.0), np.full(8, 30.0), TCL, SM)
    assert np.ptp(sp) < 1e-9
    assert variation(pw) < 1e-12


@pytest.mark.parametrize("seed", range(8))
def test_stage_one_matches_qp_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    wind = 60 + np.cumsum(rng.normal(0, 2, n))
    t_out = rng.uniform(21, 35, n)
    sp, _ = smooth_setpoints(wind, t_out, TCL, SM)
    lo, hi = np.full(n, SM.band_low), np.minimum(SM.band_high, t_out)
    D = np.diff(np.eye(n), axis=0)
    ref = box_least_squares(TCL.gain * D, -D @ (wind - TCL.gain * t_out), lo, hi)
    assert np.all((sp >= lo - 1e-12) & (sp <= hi + 1e-12))
    got, want = _stage_one_objective(sp, wind, t_out), _stage_one_objective(ref, wind, t_out)
    assert got == pytest.approx(want, abs=1e-6)
    mid = 0.5 * (lo + hi)
    assert got <= _stage_one_objective(np.full(n, np.min(mid)), wind, t_out) + 1e-9


def test_linear_ramp_is_flattened():
    wind = np.linspace(60, 62, 6)
    t_out = np.full(6, 30.0)
    _, pw = smooth_setpoints(wind, t_out, TCL, SM)
    assert variation(pw) < variation(wind)


def test_stage_one_reports_non_convergence():
    rng = np.random.default_rng(0)
    with pytest.raises(ConvergenceError):
        smooth_setpoints(np.linspace(60, 62, 10) + rng.normal(0, 0.1, 10), np.full(10, 30.0), TCL,
                         dataclasses.replace(SM, qp_max_iters=1, qp_tolerance=1e-15))


def test_constant_power_needs_no_battery():
    pw = np.full(5, 80.0)
    res = smooth_bess(pw, SM, BESS, 120.0, 80.0)
    assert np.all(res.p_b == 0)
    assert res.cost == pytest.approx(smoothing_cost(res.p_b, res.x, SM, BESS))
    assert res.cost == pytest.approx(5 * SM.gamma_b * res.x[0])


def test_step_drop_is_spread_over_steps():
    sm = dataclasses.replace(SM, grid_points=21)
    pw = np.array([80.0, 50.0, 50.0, 50.0])
    res = smooth_bess(pw, sm, BESS, 120.0, 80.0)
    dpg = np.diff(np.concatenate([[80.0], res.p_g]))
    assert np.all(np.abs(dpg) <= 20 + 1e-9)
    assert np.sum(res.p_b > 0) >= 2
    assert res.cost == pytest.approx(brute_force_smooth(pw, sm, BESS, 120.0, 80.0), rel=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_stage_two_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    pw = 70 + np.cumsum(rng.normal(0, 12, n))
    grid = np.linspace(BESS.e_min, BESS.e_cap_max, SM.grid_points)
    e0 = float(grid[rng.integers(len(grid))])
    pg_prev = float(pw[0] + rng.normal(0, 5))
    ref = brute_force_smooth(pw, SM, BESS, e0, pg_prev)
    if not np.isfinite(ref):
        with pytest.raises(InfeasibleError):
            smooth_bess(pw, SM, BESS, e0, pg_prev)
        return
    res = smooth_bess(pw, SM, BESS, e0, pg_prev)
    assert res.cost == pytest.approx(ref, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_stage_two_output_respects_ramp(seed):
    rng = np.random.default_rng(seed)
    pw = np.maximum(70 + np.cumsum(rng.normal(0, 15, 6)), 0)
    try:
        res = smooth_bess(pw, SM, BESS, 120.0, float(pw[0]))
    except InfeasibleError:
        return
    dpg = np.diff(np.concatenate([[pw[0]], res.p_g]))
    assert np.all((dpg >= SM.rr_min - 1e-9) & (dpg <= SM.rr_max + 1e-9))
    assert np.all(res.p_g >= -1e-9)


def test_impossible_ramp_is_reported():
    pw = np.array([80.0, 0.0, 0.0])
    tiny = dataclasses.replace(BESS, p_charge_max=1.0, p_discharge_max=1.0)
    with pytest.raises(InfeasibleError, match="ramp"):
        smooth_bess(pw, SM, tiny, 120.0, 80.0)


def test_rolling_run_on_perfect_forecasts():
    rng = np.random.default_rng(3)
    wind = np.clip(70 + np.cumsum(rng.normal(0, 6, 20)), 0, 140)
    t_out = np.full(20, 30.0)
    run = smoothing_run(wind, t_out, wind, t_out, TCL, SM, BESS, 120.0, 4)
    assert len(run.p_g) == 17
    assert variation(run.p_g) <= variation(run.wind)
    assert np.all(np.abs(np.diff(run.p_g)) <= 20 + 1e-9)
