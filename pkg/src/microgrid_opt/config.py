"""Scenario files: loading, validation and construction of solver inputs.

A scenario is one YAML document::

    strategy: dp-dispatch          # or adp-dispatch, tcl-schedule, wind-smooth, network-adp
    seed: 7
    output_dir: out/dp             # optional, relative to the file
    data:
      length: 288
      step_minutes: 5
      series:
        renewable: {synth: {mean: 2.0, amplitude: 1.5, noise_std: 0.3, seed: 1}}
        load: {file: load.csv}     # series text format, relative to the file
    forecast_error: {sigma_fraction: 0.05}
    params: {...}                  # strategy block, see ``STRATEGIES``

Every series takes an optional ``unit``; the solver's unit is used when it is
omitted and files in another unit of the same kind are converted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .adp_dispatch import AdpDispatchConfig
from .battery import BatterySpec, CycleCostParams, ThroughputLifeSpec
from .dp_dispatch import METHODS, DispatchScenario
from .network import BessUnit, ClUnit, DgUnit, Microgrid, NetworkConfig, NetworkData, table_network
from .smoothing import SmoothingParams
from .tcl import DgParams, SchedulerParams, TclParams
from .timeseries import ForecastErrorSpec, SynthParams, TimeSeries, load_series, synthesize_scenario

# strategy -> {series name: solver unit}
STRATEGIES = {
    "dp-dispatch": {"renewable": "MW", "load": "MW", "price": "currency_per_MWh"},
    "adp-dispatch": {"wind": "kW", "price": "currency_per_MWh"},
    "tcl-schedule": {"solar": "kW", "temperature": "celsius"},
    "wind-smooth": {"wind": "MW", "temperature": "celsius"},
    "network-adp": {"price": "currency_per_MWh"},
}
_KIND = {"renewable": "wind", "wind": "wind", "load": "load", "price": "price", "solar": "solar",
         "temperature": "temperature", "res": "solar"}


class ConfigError(ValueError):
    """The scenario file cannot be read or describes an invalid problem."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass
class Scenario:
    strategy: str
    seed: int
    step_minutes: float
    series: dict
    error: ForecastErrorSpec
    params: dict
    output_dir: Path
    source: Path


def read_config(path) -> dict:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return raw


def required_series(raw: dict) -> dict:
    strategy = raw.get("strategy")
    need = dict(STRATEGIES.get(strategy, {}))
    if strategy == "network-adp":
        k = _network_k(raw.get("params") or {})
        for i in range(1, k + 1):
            need[f"res_{i}"] = "kW"
            need[f"load_{i}"] = "kW"
    return need


def _network_k(params: dict) -> int:
    mgs = params.get("microgrids")
    return len(mgs) if isinstance(mgs, list) and mgs else 3


def _kind(name: str) -> str:
    return _KIND[name.split("_")[0]]


def _build(cls, block, where: str, diags: list, **extra):
    block = dict(block or {})
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(block) - allowed)
    if unknown:
        diags.append(f"{where}: unknown keys {unknown}")
        return None
    try:
        return cls(**{**block, **extra})
    except (TypeError, ValueError) as exc:
        diags.append(f"{where}: {exc}")
        return None


def _series(name, spec, unit, length, step_minutes, base: Path, diags):
    where = f"data.series.{name}"
    if not isinstance(spec, dict) or ("file" in spec) == ("synth" in spec):
        diags.append(f"{where}: give exactly one of 'file' or 'synth'")
        return None
    want = spec.get("unit", unit)
    if "file" in spec:
        path = base / spec["file"]
        if not path.is_file():
            diags.append(f"{where}: file not found: {path}")
            return None
        try:
            s = load_series(path, want)
        except ValueError as exc:
            diags.append(f"{where}: {exc}")
            return None
        if want != unit:
            s = s.to_unit(unit)
    else:
        synth = dict(spec["synth"] or {})
        seed = int(synth.pop("seed", 0))
        p = _build(SynthParams, {"step_minutes": step_minutes, "unit": want, **synth}, where, diags)
        if p is None:
            return None
        try:
            s = synthesize_scenario(_kind(name), length, seed, p)
        except ValueError as exc:
            diags.append(f"{where}: {exc}")
            return None
        if want != unit:
            s = s.to_unit(unit)
    if len(s) < length:
        diags.append(f"{where}: {len(s)} values, need {length}")
        return None
    if s.step_minutes != step_minutes:
        diags.append(f"{where}: step {s.step_minutes} min differs from data.step_minutes {step_minutes}")
        return None
    return TimeSeries(s.values[:length], s.step_minutes, s.unit)


def load_scenario(path, seed_override: int | None = None) -> Scenario:
    """Read and validate ``path``; raises ``ConfigError`` listing every problem."""
    path = Path(path)
    raw = read_config(path)
    diags: list[str] = []
    scn = _scenario(raw, path, diags, seed_override)
    if diags:
        raise ConfigError(diags)
    return scn


def validate(path) -> list[str]:
    """Every problem found in the scenario file; empty when it is clean."""
    path = Path(path)
    try:
        raw = read_config(path)
    except ConfigError as exc:
        return exc.diagnostics
    diags: list[str] = []
    _scenario(raw, path, diags, None)
    return diags


def _scenario(raw: dict, path: Path, diags: list, seed_override):
    known = {"strategy", "seed", "output_dir", "data", "forecast_error", "params"}
    extra = sorted(set(raw) - known)
    if extra:
        diags.append(f"unknown top-level keys {extra}")
    strategy = raw.get("strategy")
    if strategy not in STRATEGIES:
        diags.append(f"strategy must be one of {sorted(STRATEGIES)}, got {strategy!r}")
        return None
    seed = raw.get("seed", 0) if seed_override is None else seed_override
    if not isinstance(seed, int) or seed < 0:
        diags.append("seed must be a non-negative integer")
        seed = 0
    data = raw.get("data") or {}
    length = data.get("length")
    step = data.get("step_minutes", 5)
    if not isinstance(length, int) or length < 2:
        diags.append("data.length must be an integer >= 2")
        length = 2
    if not isinstance(step, (int, float)) or step <= 0:
        diags.append("data.step_minutes must be positive")
        step = 5
    base = path.parent
    given = data.get("series") or {}
    series = {}
    for name, unit in required_series(raw).items():
        if name not in given:
            diags.append(f"data.series.{name}: missing series")
            continue
        s = _series(name, given[name], unit, length, float(step), base, diags)
        if s is not None:
            series[name] = s
    fe = _build(ForecastErrorSpec, {**(raw.get("forecast_error") or {}), "seed": seed}, "forecast_error", diags)
    params = raw.get("params") or {}
    if not isinstance(params, dict):
        diags.append("params must be a mapping")
        params = {}
    built = PARAM_BUILDERS[strategy](params, float(step), series, diags)
    out = raw.get("output_dir")
    out_dir = (base / out) if out else Path("out") / path.stem
    return Scenario(strategy, seed, float(step), series, fe or ForecastErrorSpec(), built or {}, out_dir, path)


# --- per-strategy parameter blocks -------------------------------------------------


def _check_keys(params: dict, allowed: set, diags: list):
    extra = sorted(set(params) - allowed)
    if extra:
        diags.append(f"params: unknown keys {extra}")


def _int(params, key, default, diags, minimum=1):
    v = params.get(key, default)
    if v is None:
        return None
    if not isinstance(v, int) or v < minimum:
        diags.append(f"params.{key} must be an integer >= {minimum}")
        return default
    return v


def _dp_params(params, step, series, diags):
    _check_keys(params, {"battery", "cycle", "horizon_steps", "grid_points", "e0", "total_steps", "method"}, diags)
    battery = _build(BatterySpec, params.get("battery"), "params.battery", diags, delta_t=step / 60.0)
    cycle = _build(CycleCostParams, params.get("cycle"), "params.cycle", diags)
    horizon = _int(params, "horizon_steps", 24, diags)
    grid_points = _int(params, "grid_points", 41, diags, 2)
    method = params.get("method", "exact")
    if method not in METHODS:
        diags.append(f"params.method must be one of {METHODS}")
    if battery is None or cycle is None or len(series) < 3:
        return None
    e0 = float(params.get("e0", 0.5 * (battery.e_min + battery.e_cap_max)))
    if not battery.e_min <= e0 <= battery.e_cap_max:
        diags.append(f"params.e0 {e0} outside [{battery.e_min}, {battery.e_cap_max}]")
    length = len(series["price"])
    total = _int(params, "total_steps", None, diags) or length - horizon + 1
    if total < 1 or total + horizon - 1 > length:
        diags.append(f"need total_steps + horizon_steps - 1 <= data.length ({length})")
        return None
    scn = DispatchScenario(series["renewable"], series["load"], series["price"], battery, cycle, horizon, grid_points)
    return {"scenario": scn, "e0": e0, "total_steps": total, "method": method}


def _adp_params(params, step, series, diags):
    cfg_keys = {f.name for f in fields(AdpDispatchConfig)} - {"life", "step_hours"}
    _check_keys(params, cfg_keys | {"life", "x0", "total_steps"}, diags)
    life = _build(ThroughputLifeSpec, params.get("life"), "params.life", diags)
    block = {k: v for k, v in params.items() if k in cfg_keys}
    cfg = _build(AdpDispatchConfig, block, "params", diags, life=life or ThroughputLifeSpec(), step_hours=step / 60.0)
    if cfg is None or len(series) < 2:
        return None
    x0 = float(params.get("x0", cfg.lb))
    if not cfg.lb <= x0 <= cfg.ub:
        diags.append(f"params.x0 {x0} outside [{cfg.lb}, {cfg.ub}]")
    length = len(series["price"])
    total = _int(params, "total_steps", None, diags) or length - cfg.horizon + 1
    if total < 1 or total + cfg.horizon - 1 > length:
        diags.append(f"need total_steps + horizon - 1 <= data.length ({length})")
        return None
    return {"cfg": cfg, "x0": x0, "total_steps": total}


def _tcl_params(params, step, series, diags):
    _check_keys(params, {"tcl", "dg", "bess", "gamma1", "gamma2", "eps_tolerance", "c_cur", "grid_points", "x0", "horizon"}, diags)
    tcl = _build(TclParams, params.get("tcl"), "params.tcl", diags)
    dg = _build(DgParams, params.get("dg"), "params.dg", diags)
    bess = None
    if "bess" in params:
        bess = _build(BatterySpec, params["bess"], "params.bess", diags, delta_t=step / 60.0)
    eps = params.get("eps_tolerance", 1.05)
    if not isinstance(eps, (int, float)) or eps <= 1:
        diags.append(f"params.eps_tolerance = {eps}: the demand band tolerance must exceed 1")
        return None
    block = {k: params[k] for k in ("gamma1", "gamma2", "c_cur", "grid_points") if k in params}
    extra = {"bess": bess} if bess is not None else {}
    sp = _build(SchedulerParams, {**block, "eps_tolerance": eps}, "params", diags, dg=dg or DgParams(), **extra)
    horizon = _int(params, "horizon", 12, diags, 1)
    if tcl is None or sp is None or len(series) < 2:
        return None
    x0 = float(params.get("x0", 0.5 * (sp.bess.e_min + sp.bess.e_cap_max)))
    if not sp.bess.e_min <= x0 <= sp.bess.e_cap_max:
        diags.append(f"params.x0 {x0} outside [{sp.bess.e_min}, {sp.bess.e_cap_max}]")
    if horizon > len(series["solar"]):
        diags.append("params.horizon exceeds data.length")
        return None
    return {"tcl": tcl, "sp": sp, "x0": x0, "horizon": horizon}


def _smooth_params(params, step, series, diags):
    _check_keys(params, {"tcl", "smoothing", "bess", "e0", "horizon", "pg0"}, diags)
    tcl = _build(TclParams, params.get("tcl"), "params.tcl", diags)
    sm = _build(SmoothingParams, params.get("smoothing"), "params.smoothing", diags)
    bess = _build(BatterySpec, params.get("bess"), "params.bess", diags, delta_t=step / 60.0)
    horizon = _int(params, "horizon", 12, diags, 2)
    if tcl is None or sm is None or bess is None or len(series) < 2:
        return None
    e0 = float(params.get("e0", 0.5 * (bess.e_min + bess.e_cap_max)))
    if not bess.e_min <= e0 <= bess.e_cap_max:
        diags.append(f"params.e0 {e0} outside [{bess.e_min}, {bess.e_cap_max}]")
    t = series["temperature"].values
    if np.any(t < sm.band_low):
        diags.append(f"data.series.temperature: values below the comfort band ({sm.band_low})")
    if horizon > len(t):
        diags.append("params.horizon exceeds data.length")
        return None
    pg0 = params.get("pg0")
    return {"tcl": tcl, "sm": sm, "bess": bess, "e0": e0, "horizon": horizon, "pg0": None if pg0 is None else float(pg0)}


_NET_KEYS = {"preset", "d_convention", "microgrids", "cems", "iterations", "levels", "explore", "rls_lambda", "rls_b0",
             "stepsize_eps", "stepsize_beta", "load_scale", "price_scale"}


def _bess_unit(block, where, conv, diags):
    block = dict(block or {})
    if "d" in block:
        d = block.pop("d")
        block["d_loss"] = 1 - d if conv == "efficiency" else d
    return _build(BessUnit, block, where, diags)


def _network_params(params, step, series, diags):
    _check_keys(params, _NET_KEYS, diags)
    conv = params.get("d_convention", "efficiency")
    if conv not in ("efficiency", "loss"):
        diags.append("params.d_convention must be 'efficiency' or 'loss'")
        conv = "efficiency"
    iterations = _int(params, "iterations", 100, diags)
    k = _network_k(params)
    have = all(f"res_{i}" in series and f"load_{i}" in series for i in range(1, k + 1)) and "price" in series
    max_loads = [float(np.max(series[f"load_{i}"].values)) for i in range(1, k + 1)] if have else [300.0] * k
    preset = params.get("preset", "table" if "microgrids" not in params else None)
    if preset == "table":
        if k != 3 or "microgrids" in params:
            diags.append("params.preset 'table' describes exactly three microgrids; drop 'microgrids'")
            return None
        cfg = table_network(max_loads, conv)
    elif preset is not None:
        diags.append(f"params.preset must be 'table', got {preset!r}")
        return None
    else:
        mgs = []
        for i, m in enumerate(params.get("microgrids") or []):
            where = f"params.microgrids[{i}]"
            m = dict(m or {})
            dg = _build(DgUnit, m.pop("dg", None), f"{where}.dg", diags)
            bess = _bess_unit(m.pop("bess", None), f"{where}.bess", conv, diags)
            cl = _build(ClUnit, m.pop("cl", None), f"{where}.cl", diags)
            if None in (dg, bess, cl):
                continue
            mg = _build(Microgrid, m, where, diags, dg=dg, bess=bess, cl=cl)
            if mg is not None:
                mgs.append(mg)
        cems = dict(params.get("cems") or {})
        cdg = _build(DgUnit, cems.get("dg"), "params.cems.dg", diags)
        cb = _bess_unit(cems.get("bess"), "params.cems.bess", conv, diags)
        if len(mgs) != k or cdg is None or cb is None:
            return None
        cfg = NetworkConfig(tuple(mgs), cdg, cb, cems_e0=float(cems.get("e0", cb.e_min)), cems_pg0=cems.get("pg0"),
                            load_scale=max(max_loads))
    tuning = {key: params[key] for key in ("levels", "explore", "rls_lambda", "rls_b0", "stepsize_eps", "stepsize_beta",
                                            "load_scale", "price_scale") if key in params}
    try:
        cfg = NetworkConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(NetworkConfig)}, **tuning,
                               "delta": step / 60.0})
    except (TypeError, ValueError) as exc:
        diags.append(f"params: {exc}")
        return None
    for i, mg in enumerate(cfg.microgrids):
        for name, lo, hi, x in (("e0", mg.bess.e_min, mg.bess.e_max, mg.e0),
                                ("pg0", mg.dg.p_min, mg.dg.p_max, mg.pg0), ("pcl0", mg.cl.p_min, mg.cl.p_max, mg.pcl0)):
            if x is not None and not lo <= x <= hi:
                diags.append(f"microgrid {i + 1}: {name} {x} outside [{lo}, {hi}]")
    if not cfg.cems_bess.e_min <= cfg.cems_e0 <= cfg.cems_bess.e_max:
        diags.append(f"cems: e0 {cfg.cems_e0} outside [{cfg.cems_bess.e_min}, {cfg.cems_bess.e_max}]")
    if not have:
        return None
    return {"cfg": cfg, "iterations": iterations, "series": series}


PARAM_BUILDERS = {
    "dp-dispatch": _dp_params,
    "adp-dispatch": _adp_params,
    "tcl-schedule": _tcl_params,
    "wind-smooth": _smooth_params,
    "network-adp": _network_params,
}


def network_data(series: dict, k: int, price_per_kwh: bool = True) -> NetworkData:
    """Stack per-MG series; prices are converted from per-MWh to per-kWh."""
    res = np.array([series[f"res_{i}"].values for i in range(1, k + 1)])
    load = np.array([series[f"load_{i}"].values for i in range(1, k + 1)])
    price = series["price"].values / (1000.0 if price_per_kwh else 1.0)
    return NetworkData(res, load, price)


def finite_or_none(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x
