"""Execute a validated scenario and write its artifacts.

Every run writes ``report.json`` (versioned summary with planning-data and
actual-data evaluations side by side), ``steps.csv`` and one plot-data CSV per
trace. Outputs depend only on the scenario and the seed.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .adp_dispatch import adp_dispatch_run
from .config import Scenario, load_scenario, network_data
from .dp_dispatch import DispatchScenario, perturbed, receding_horizon_run
from .network import adp_train, myopic_baseline, simulate_policy
from .smoothing import smoothing_run, variation
from .tcl import schedule_run
from .timeseries import ForecastErrorSpec, TimeSeries, inject_forecast_error, write_series

SCHEMA_VERSION = 1


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _improvement(baseline: float, objective: float) -> float:
    return 100.0 * (baseline - objective) / abs(baseline) if baseline else 0.0


def _forecast(series: TimeSeries, error: ForecastErrorSpec, offset: int, clip: bool | None = None) -> TimeSeries:
    return inject_forecast_error(series, ForecastErrorSpec(error.sigma_fraction, error.seed + offset), clip)


# --- strategies ------------------------------------------------------------------


def _run_dp(scn: Scenario, out: Path, progress):
    p = scn.params
    actual: DispatchScenario = p["scenario"]
    fc = perturbed(actual, scn.error)
    plan = receding_horizon_run(fc, p["e0"], p["total_steps"], None, p["method"])
    real = receding_horizon_run(actual, p["e0"], p["total_steps"], scn.error, p["method"], progress)
    _write_csv(out / "steps.csv", ["stage", "p_b", "energy", "p_grid", "step_cost"], real.rows())
    write_series(TimeSeries(real.trajectory, scn.step_minutes, "MWh"), out / "soc_trace.csv")
    price = actual.price.values
    _write_csv(out / "actions_vs_price.csv", ["stage", "p_b", "price"],
               ((k, a, float(price[k])) for k, a in enumerate(real.executed_actions)))
    _write_csv(out / "cost_trace.csv", ["stage", "cumulative_cost"],
               ((k, c) for k, c in enumerate(np.cumsum(real.step_costs))))
    summary = {"objective": real.overall_cost, "baseline": real.baseline_cost,
               "improvement_pct": 100.0 * real.improvement}
    return summary, real.summary(), plan.summary()


def _run_adp(scn: Scenario, out: Path, progress):
    p = scn.params
    wind, price = scn.series["wind"], scn.series["price"]
    kw_to_wh = 1000.0 * scn.step_minutes / 60.0
    wind_e = TimeSeries(wind.values * kw_to_wh, wind.step_minutes, "kW")
    real = adp_dispatch_run(wind_e, price, p["cfg"], scn.error, p["total_steps"], p["x0"], scn.seed, progress)
    w_fc = inject_forecast_error(wind_e, scn.error)
    m_fc = _forecast(price, scn.error, 1, clip=False)
    plan = adp_dispatch_run(w_fc, m_fc, p["cfg"], None, p["total_steps"], p["x0"], scn.seed)
    _write_csv(out / "steps.csv", ["stage", "u_wh", "energy_wh", "sold_wh", "step_cost"], real.rows())
    write_series(TimeSeries(real.trajectory / 1000.0, scn.step_minutes, "kWh"), out / "soc_trace.csv")
    _write_csv(out / "actions_vs_price.csv", ["stage", "u_wh", "price"],
               ((k, a, float(price.values[k])) for k, a in enumerate(real.executed_actions)))
    _write_csv(out / "cost_trace.csv", ["stage", "cumulative_cost"],
               ((k, c) for k, c in enumerate(np.cumsum(real.step_costs))))
    summary = {"objective": real.overall_cost, "baseline": real.baseline_cost,
               "improvement_pct": 100.0 * real.improvement}
    return summary, real.summary(), plan.summary()


def _schedule_summary(s) -> dict:
    return {"objective": s.objective, "curtailed": float(np.sum(s.curtailed)), "steps": len(s.p_g)}


def _run_tcl(scn: Scenario, out: Path, progress):
    p = scn.params
    solar, temp = scn.series["solar"], scn.series["temperature"]
    s_fc = _forecast(solar, scn.error, 0)
    t_fc = _forecast(temp, scn.error, 1, clip=False)
    h = p["horizon"]
    real = schedule_run(solar, temp, s_fc, t_fc, p["sp"], p["tcl"], p["x0"], h, progress)
    plan = schedule_run(s_fc, t_fc, s_fc, t_fc, p["sp"], p["tcl"], p["x0"], h)
    total = len(real.p_g)
    # one-step lookahead on the same forecasts, settled over the same stages
    base = schedule_run(solar.values[:total], temp.values[:total], s_fc.values[:total], t_fc.values[:total],
                        p["sp"], p["tcl"], p["x0"], 1)
    _write_csv(out / "steps.csv", ["stage", "p_g", "p_b", "energy", "demand", "curtailed", "stage_cost"], real.rows())
    write_series(TimeSeries(real.x, scn.step_minutes, "kWh"), out / "soc_trace.csv")
    _write_csv(out / "actions_vs_price.csv", ["stage", "p_b", "p_g", "demand"],
               ((k, real.p_b[k], real.p_g[k], real.demand[k]) for k in range(total)))
    _write_csv(out / "cost_trace.csv", ["stage", "cumulative_cost"],
               ((k, c) for k, c in enumerate(np.cumsum(real.stage_cost))))
    summary = {"objective": real.objective, "baseline": base.objective,
               "improvement_pct": _improvement(base.objective, real.objective)}
    return summary, {**_schedule_summary(real), "greedy_objective": base.objective}, _schedule_summary(plan)


def _smooth_summary(r) -> dict:
    ramps = np.diff(r.p_g)
    raw = np.diff(r.wind)
    return {
        "battery_cost": r.cost,
        "variation": variation(r.p_g),
        "raw_variation": variation(r.wind),
        "max_ramp": float(np.max(np.abs(ramps))) if len(ramps) else 0.0,
        "raw_max_ramp": float(np.max(np.abs(raw))) if len(raw) else 0.0,
        "steps": len(r.p_g),
    }


def _run_smooth(scn: Scenario, out: Path, progress):
    p = scn.params
    wind, temp = scn.series["wind"], scn.series["temperature"]
    w_fc = _forecast(wind, scn.error, 0)
    t_fc = _forecast(temp, scn.error, 1, clip=False)
    t_fc = t_fc.with_values(np.maximum(t_fc.values, p["sm"].band_low))
    args = (p["tcl"], p["sm"], p["bess"], p["e0"], p["horizon"], p["pg0"])
    real = smoothing_run(wind, temp, w_fc, t_fc, *args, progress=progress)
    plan = smoothing_run(w_fc, t_fc, w_fc, t_fc, *args)
    _write_csv(out / "steps.csv", ["stage", "wind", "pw_tcl", "p_g", "delta_p_g", "p_b", "energy"], real.rows())
    write_series(TimeSeries(real.x, scn.step_minutes, "MWh"), out / "soc_trace.csv")
    _write_csv(out / "smoothed_vs_raw.csv", ["stage", "raw", "smoothed"],
               ((k, real.wind[k], real.p_g[k]) for k in range(len(real.p_g))))
    _write_csv(out / "cost_trace.csv", ["stage", "setpoint", "p_b"],
               ((k, real.setpoints[k], real.p_b[k]) for k in range(len(real.p_g))))
    rs = _smooth_summary(real)
    # objective and baseline are both total variation of the dispatched power
    summary = {"objective": rs["variation"], "baseline": rs["raw_variation"],
               "improvement_pct": _improvement(rs["raw_variation"], rs["variation"])}
    return summary, rs, _smooth_summary(plan)


def _run_network(scn: Scenario, out: Path, progress):
    p = scn.params
    cfg = p["cfg"]
    k = cfg.K
    series = scn.series
    fc_series = {name: _forecast(s, scn.error, i, clip=name != "price") for i, (name, s) in enumerate(sorted(series.items()))}
    actual = network_data(series, k)
    forecast = network_data(fc_series, k)
    tr = adp_train(cfg, forecast, p["iterations"], seed=scn.seed, sigma_fraction=scn.error.sigma_fraction, progress=progress)
    real = simulate_policy(cfg, actual, tr.vfa)
    real_my = myopic_baseline(cfg, actual)
    plan = simulate_policy(cfg, forecast, tr.vfa)
    plan_my = myopic_baseline(cfg, forecast)
    header = ["stage"] + [f"p_exc_{i}" for i in range(1, k + 1)] + ["p_ug", "ep", "stage_cost"]
    _write_csv(out / "steps.csv", header, real.rows(cfg))
    _write_csv(out / "cost_trace.csv", ["iteration", "total_cost"],
               ((i + 1, c) for i, c in enumerate(tr.cost_trace)))
    lay = cfg.layout
    cols = [lay.mg(i)[0] for i in range(k)] + [lay.cems()[0]]
    _write_csv(out / "soc_trace.csv", ["stage"] + [f"e_b_{i}" for i in range(1, k + 2)],
               ((t, *real.states[t, cols]) for t in range(len(real.states))))
    _write_csv(out / "actions_vs_price.csv", ["stage", "ep"] + [f"u_pb_{i}" for i in range(1, k + 2)],
               ((t, real.states[t, lay.EP], *real.controls[t, [lay.mg_u(i)[1] for i in range(k)] + [lay.cems_u()[1]]])
                for t in range(len(real.states))))
    np.savetxt(out / "theta.csv", tr.vfa.theta, delimiter=",", fmt="%.17g")
    summary = {"objective": real.total, "baseline": real_my.total,
               "improvement_pct": _improvement(real_my.total, real.total)}
    return (summary, {"adp_total": real.total, "myopic_total": real_my.total, "iterations": p["iterations"]},
            {"adp_total": plan.total, "myopic_total": plan_my.total})


RUNNERS = {
    "dp-dispatch": _run_dp,
    "adp-dispatch": _run_adp,
    "tcl-schedule": _run_tcl,
    "wind-smooth": _run_smooth,
    "network-adp": _run_network,
}


def run_scenario(scn: Scenario, out_dir: Path, progress=None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary, actual, planning = RUNNERS[scn.strategy](scn, out_dir, progress)
    report = _clean({
        "schema_version": SCHEMA_VERSION,
        "strategy": scn.strategy,
        "seed": scn.seed,
        "summary": summary,
        "actual": actual,
        "planning": planning,
    })
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def _run_one(config_path: str, seed: int, out_dir: str):
    scn = load_scenario(config_path, seed_override=seed)
    return run_scenario(scn, Path(out_dir))


def run_seeds(config_path, base_seed: int, jobs: int, out_dir: Path) -> list[dict]:
    """Run ``jobs`` consecutive seeds in parallel into ``out_dir/seed-<n>``."""
    seeds = [base_seed + i for i in range(jobs)]
    dirs = [str(Path(out_dir) / f"seed-{s}") for s in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, [str(config_path)] * jobs, seeds, dirs))
