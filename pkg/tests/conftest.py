import numpy as np
import pytest

from microgrid_opt.battery import BatterySpec, CycleCostParams
from microgrid_opt.dp_dispatch import DispatchScenario
from microgrid_opt.timeseries import TimeSeries

TABLE_BATTERY = BatterySpec(e_max=12.5, e_min=1.25, e_cap_max=11.25, p_charge_max=24, p_discharge_max=24,
                            d_loss=0.05, delta_t=1 / 12, n_parallel=5)
TABLE_CYCLE = CycleCostParams(n_fail_100=2347, kp=1.1, r_c=2.5e6)


def random_dispatch(seed: int, n: int, grid_points: int, length: int | None = None, *, kp: float | None = None,
                    ren_mean: float = 20.0, load_mean: float = 25.0) -> DispatchScenario:
    """Small random dispatch instance whose grid moves stay inside the power limits."""
    rng = np.random.default_rng(seed)
    length = length or n
    span = rng.uniform(2.0, 10.0)
    e_min = rng.uniform(0.5, 2.0)
    spec = BatterySpec(e_max=e_min + span + rng.uniform(0, 2), e_min=e_min, e_cap_max=e_min + span,
                       p_charge_max=rng.uniform(20, 60), p_discharge_max=rng.uniform(20, 60), d_loss=0.05,
                       delta_t=1 / 12, n_parallel=int(rng.integers(1, 6)))
    cyc = CycleCostParams(n_fail_100=2347, kp=kp if kp is not None else float(rng.uniform(0.8, 2.0)),
                          r_c=float(rng.uniform(0, 3e5)))

    def ts(mean, spread, unit):
        return TimeSeries(np.maximum(rng.normal(mean, spread, length), 0 if unit == "MW" else -np.inf), 5, unit)

    return DispatchScenario(ts(ren_mean, 8, "MW"), ts(load_mean, 8, "MW"), ts(80, 40, "currency_per_MWh"),
                            spec, cyc, n, grid_points)


@pytest.fixture
def table_scenario():
    def make(ren, load, price, n=None, grid_points=41):
        series = [TimeSeries(np.asarray(v, float), 5, u) for v, u in
                  ((ren, "MW"), (load, "MW"), (price, "currency_per_MWh"))]
        return DispatchScenario(*series, TABLE_BATTERY, TABLE_CYCLE, n or len(ren), grid_points)

    return make
