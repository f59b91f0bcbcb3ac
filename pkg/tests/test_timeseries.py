import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microgrid_opt.timeseries import (
    ForecastErrorSpec,
    SeriesFormatError,
    SynthParams,
    TimeSeries,
    format_series,
    horizon_window,
    inject_forecast_error,
    load_series,
    synthesize_scenario,
    write_series,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def _write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_two_rows(tmp_path):
    p = _write(tmp_path, "# unit=MW step_minutes=5\n0,10.0\n1,12.0\n")
    s = load_series(p, "MW")
    assert s.step_minutes == 5
    assert s.values.tolist() == [10.0, 12.0]
    assert s.unit == "MW"


def test_load_converts_mw_to_kw(tmp_path):
    p = _write(tmp_path, "# unit=MW step_minutes=5\n0,1.5\n")
    assert load_series(p, "kW").values.tolist() == [1500.0]


def test_load_empty_body(tmp_path):
    p = _write(tmp_path, "# unit=MW step_minutes=5\n")
    with pytest.raises(SeriesFormatError, match="empty series"):
        load_series(p, "MW")


def test_load_non_numeric_names_line(tmp_path):
    p = _write(tmp_path, "# unit=MW step_minutes=5\n0,1.0\n1,abc\n")
    with pytest.raises(SeriesFormatError, match=":3:"):
        load_series(p, "MW")


def test_load_unit_mismatch(tmp_path):
    p = _write(tmp_path, "# unit=celsius step_minutes=5\n0,1.0\n")
    with pytest.raises(SeriesFormatError, match="unit mismatch"):
        load_series(p, "MW")


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_series(tmp_path / "nope.csv", "MW")


def test_load_bad_header(tmp_path):
    p = _write(tmp_path, "0,1.0\n")
    with pytest.raises(SeriesFormatError, match="header"):
        load_series(p, "MW")


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=1, max_size=30), st.sampled_from(["kW", "MWh", "celsius"]),
       st.sampled_from([5, 10, 7.5]))
def test_round_trip_is_byte_identical(tmp_path_factory, values, unit, step):
    d = tmp_path_factory.mktemp("rt")
    s = TimeSeries(values, step, unit)
    p = write_series(s, d / "a.csv")
    again = load_series(p, unit)
    assert format_series(again) == p.read_text()
    np.testing.assert_array_equal(again.values, s.values)


def test_zero_sigma_is_identity():
    s = TimeSeries([1.0, -2.0, 3.0], 5, "celsius")
    out = inject_forecast_error(s, ForecastErrorSpec(0.0, 9))
    np.testing.assert_array_equal(out.values, s.values)


def test_fixed_seed_is_deterministic():
    s = synthesize_scenario("wind", 200, 1, mean=50, amplitude=10, noise_std=3)
    a = inject_forecast_error(s, ForecastErrorSpec(0.05, 4))
    b = inject_forecast_error(s, ForecastErrorSpec(0.05, 4))
    assert a.values.tobytes() == b.values.tobytes()


def test_noise_std_matches_sigma_fraction():
    s = TimeSeries(np.full(10_000, 100.0), 5, "MW")
    out = inject_forecast_error(s, ForecastErrorSpec(0.05, 11))
    assert abs(np.std(out.values - s.values) - 5.0) <= 0.2


def test_power_series_clipped_at_zero():
    s = TimeSeries(np.full(1000, 1.0), 5, "MW")
    out = inject_forecast_error(s, ForecastErrorSpec(2.0, 3))
    assert out.values.min() == 0.0


def test_window_examples():
    s = TimeSeries(np.arange(5.0), 5, "MW")
    np.testing.assert_array_equal(horizon_window(s, 0, 5).values, s.values)
    assert horizon_window(s, 4, 1).values.tolist() == [4.0]
    with pytest.raises(IndexError):
        horizon_window(s, 3, 3)


@given(st.lists(finite, min_size=1, max_size=40))
def test_full_window_is_identity(values):
    s = TimeSeries(values, 5, "kW")
    np.testing.assert_array_equal(horizon_window(s, 0, len(s)).values, s.values)


def test_synth_length_one_equals_mean():
    s = synthesize_scenario("load", 1, 3, mean=42.0, amplitude=10.0, noise_std=5.0)
    assert s.values.tolist() == [42.0]


def test_synth_same_seed_twice():
    p = SynthParams(mean=30, amplitude=5, noise_std=2)
    a = synthesize_scenario("price", 100, 8, p)
    b = synthesize_scenario("price", 100, 8, p)
    assert a.values.tobytes() == b.values.tobytes()


def test_synth_wind_within_rating():
    s = synthesize_scenario("wind", 10_000, 2, mean=90, amplitude=50, noise_std=20, upper=140)
    assert s.values.min() >= 0 and s.values.max() <= 140


def test_synth_rejects_bad_length():
    with pytest.raises(ValueError):
        synthesize_scenario("wind", 0, 1)
