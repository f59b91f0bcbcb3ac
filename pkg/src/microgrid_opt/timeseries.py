"""Uniformly sampled, piecewise-constant signals and their text format.

Series files look like::

    # unit=MW step_minutes=5
    0,41.25
    1,39.80

Power and energy values are converted to the unit the caller asks for
(``kW <-> MW``, ``kWh <-> MWh``); any other mismatch is an error.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

UNITS = ("kW", "MW", "kWh", "MWh", "currency_per_MWh", "celsius")
POWER_UNITS = ("kW", "MW")
_SCALE = {"kW": ("power", 1.0), "MW": ("power", 1000.0), "kWh": ("energy", 1.0), "MWh": ("energy", 1000.0)}
_HEADER = re.compile(r"^#\s*unit=(\S+)\s+step_minutes=(\S+)\s*$")


class SeriesFormatError(ValueError):
    """Raised for unreadable or inconsistent series files."""


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    step_minutes: float
    unit: str
    start_index: int = 0

    def __post_init__(self):
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}; expected one of {UNITS}")
        if not self.step_minutes > 0:
            raise ValueError("step_minutes must be positive")
        arr = np.array(self.values, dtype=float).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def step_hours(self) -> float:
        return self.step_minutes / 60.0

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(values, self.step_minutes, self.unit, self.start_index)

    def to_unit(self, unit: str) -> "TimeSeries":
        return TimeSeries(convert(self.values, self.unit, unit), self.step_minutes, unit, self.start_index)


@dataclass(frozen=True)
class ForecastErrorSpec:
    sigma_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_fraction < 0:
            raise ValueError("sigma_fraction must be non-negative")


def convert(values, src: str, dst: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if src == dst:
        return values
    if src in _SCALE and dst in _SCALE and _SCALE[src][0] == _SCALE[dst][0]:
        return values * (_SCALE[src][1] / _SCALE[dst][1])
    raise SeriesFormatError(f"unit mismatch: file has {src}, expected {dst}")


def load_series(path, expected_unit: str) -> TimeSeries:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"series file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise SeriesFormatError(f"{path}: empty series")
    m = _HEADER.match(lines[0].strip())
    if m is None:
        raise SeriesFormatError(f"{path}:1: expected header '# unit=<tag> step_minutes=<n>'")
    unit, step_txt = m.groups()
    if unit not in UNITS:
        raise SeriesFormatError(f"{path}:1: unknown unit {unit!r}")
    try:
        step = float(step_txt)
    except ValueError:
        raise SeriesFormatError(f"{path}:1: bad step_minutes {step_txt!r}") from None

    indices, values = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise SeriesFormatError(f"{path}:{lineno}: expected 'index,value', got {raw!r}")
        try:
            idx = int(parts[0])
            val = float(parts[1])
        except ValueError:
            raise SeriesFormatError(f"{path}:{lineno}: non-numeric entry {raw!r}") from None
        if not math.isfinite(val):
            raise SeriesFormatError(f"{path}:{lineno}: non-finite value")
        indices.append(idx)
        values.append(val)
    if not values:
        raise SeriesFormatError(f"{path}: empty series")
    if any(b != a + 1 for a, b in zip(indices, indices[1:])):
        log.warning("%s: stage indices are not consecutive; using file order", path)
    return TimeSeries(convert(values, unit, expected_unit), step, expected_unit, indices[0])


def format_series(series: TimeSeries) -> str:
    step = series.step_minutes
    step_txt = str(int(step)) if float(step).is_integer() else repr(float(step))
    out = [f"# unit={series.unit} step_minutes={step_txt}"]
    out += [f"{series.start_index + i},{float(v)!r}" for i, v in enumerate(series.values)]
    return "\n".join(out) + "\n"


def write_series(series: TimeSeries, path) -> Path:
    path = Path(path)
    path.write_text(format_series(series), encoding="utf-8")
    return path


def gaussian(rng: np.random.Generator, n: int) -> np.ndarray:
    """Standard normal draws by the Box-Muller transform."""
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1]
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:n]


def inject_forecast_error(series: TimeSeries, spec: ForecastErrorSpec, clip_negative: bool | None = None) -> TimeSeries:
    """Add zero-mean Gaussian noise with std ``sigma_fraction * mean(|series|)``.

    Power series are clipped at zero unless ``clip_negative`` says otherwise.
    """
    if len(series) == 0:
        raise ValueError("cannot perturb an empty series")
    if spec.sigma_fraction == 0:
        return series
    if clip_negative is None:
        clip_negative = series.unit in POWER_UNITS
    std = spec.sigma_fraction * float(np.mean(np.abs(series.values)))
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    out = series.values + std * gaussian(rng, len(series))
    if clip_negative:
        out = np.maximum(out, 0.0)
    return series.with_values(out)


def horizon_window(series: TimeSeries, k0: int, n: int) -> TimeSeries:
    if k0 < 0 or n < 1 or k0 + n > len(series):
        raise IndexError(f"window [{k0}, {k0 + n}) outside series of length {len(series)}")
    return TimeSeries(series.values[k0 : k0 + n], series.step_minutes, series.unit, series.start_index + k0)


_DEFAULT_UNITS = {"wind": "MW", "load": "MW", "price": "currency_per_MWh", "temperature": "celsius", "solar": "kW"}


@dataclass(frozen=True)
class SynthParams:
    """Diurnal sinusoid plus AR(1) noise that starts at zero.

    ``period`` is in steps. Stage 0 always equals ``mean`` (before clamping).
    """

    mean: float = 0.0
    amplitude: float = 0.0
    period: float = 288.0
    noise_std: float = 0.0
    rho: float = 0.9
    lower: float | None = None
    upper: float | None = None
    step_minutes: float = 5.0
    unit: str | None = None


def synthesize_scenario(kind: str, length: int, seed: int, params: SynthParams | None = None, **overrides) -> TimeSeries:
    if kind not in _DEFAULT_UNITS:
        raise ValueError(f"unknown scenario kind {kind!r}")
    if length < 1:
        raise ValueError("length must be positive")
    p = params or SynthParams()
    if overrides:
        p = SynthParams(**{**p.__dict__, **overrides})
    rng = np.random.Generator(np.random.PCG64(seed))
    k = np.arange(length)
    base = p.mean + p.amplitude * np.sin(2 * np.pi * k / p.period)
    noise = np.zeros(length)
    if p.noise_std > 0 and length > 1:
        z = gaussian(rng, length)
        scale = p.noise_std * math.sqrt(max(1.0 - p.rho**2, 0.0)) if abs(p.rho) < 1 else p.noise_std
        for i in range(1, length):
            noise[i] = p.rho * noise[i - 1] + scale * z[i]
    values = base + noise
    lower = p.lower
    if kind in ("wind", "load", "solar"):
        lower = 0.0 if lower is None else max(lower, 0.0)
    if lower is not None or p.upper is not None:
        values = np.clip(values, lower, p.upper)
    return TimeSeries(values, p.step_minutes, p.unit or _DEFAULT_UNITS[kind])
