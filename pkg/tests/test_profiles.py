import numpy as np
import pandas as pd
import pytest

from gridrep.profiles import (
    ProfileError,
    average_subhourly,
    hourly_fuel_prices,
    parse_daily,
    parse_fuel_prices,
    parse_heat_rate_table,
    parse_profile,
    parse_unit_records,
)


def hourly_csv(values, column="load", start="2019-12-16T00:00", skip=()):
    idx = pd.date_range(start, periods=len(values), freq="h")
    rows = [f"{t.isoformat()},{v}" for k, (t, v) in enumerate(zip(idx, values)) if k not in skip]
    return "timestamp," + column + "\n" + "\n".join(rows) + "\n"


def test_24_rows_one_column():
    p = parse_profile(hourly_csv(range(24)), ["load"])
    assert len(p) == 24 and p.columns == ["load"]
    assert p.index.freqstr is None or p.index.freqstr == "h"


def test_one_missing_hour_interpolated():
    p = parse_profile(hourly_csv([10, 0, 14], skip={1}), ["load"])
    assert p["load"].tolist() == [10.0, 12.0, 14.0]


def test_blank_cells_interpolated():
    text = "timestamp,a,b\n2019-01-01T00:00,1,5\n2019-01-01T01:00,,6\n2019-01-01T02:00,3,\n2019-01-01T03:00,4,8\n"
    p = parse_profile(text)
    assert p["a"].tolist() == [1, 2, 3, 4] and p["b"].tolist() == [5, 6, 7, 8]


def test_three_hour_gap_filled_five_hour_gap_rejected():
    ok = parse_profile(hourly_csv([0, 0, 0, 0, 8], skip={1, 2, 3}))
    assert ok["load"].tolist() == [0, 2, 4, 6, 8]
    with pytest.raises(ProfileError, match="gap exceeds 3 hours"):
        parse_profile(hourly_csv(range(7), skip={1, 2, 3, 4, 5}))


def test_edge_gap_rejected():
    text = "timestamp,a\n2019-01-01T00:00,\n2019-01-01T01:00,2\n"
    with pytest.raises(ProfileError, match="edge"):
        parse_profile(text)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("time,load\n2019-01-01T00:00,1\n", "first column"),
        ("timestamp,load\n2019-01-01T00:30,1\n", "on the hour"),
        ("timestamp,load\n2019-01-01T01:00,1\n2019-01-01T00:00,1\n", "strictly increasing"),
        ("timestamp,load\n2019-01-01T00:00,1\n2019-01-01T00:00,2\n", "strictly increasing"),
        ("timestamp,load\n2019-01-01T00:00,abc\n", "non-numeric"),
        ("timestamp,load\nyesterday,1\n", "unparseable"),
        ("", "empty"),
    ],
)
def test_profile_errors(text, fragment):
    with pytest.raises(ProfileError, match=fragment):
        parse_profile(text)


def test_column_policy():
    with pytest.raises(ProfileError, match="missing column"):
        parse_profile(hourly_csv([1]), ["load", "wind"])
    with pytest.raises(ProfileError, match="unknown column"):
        parse_profile("timestamp,load,lod\n2019-01-01T00:00,1,2\n", ["load"])


def test_timezone_aware_stamps_converted_to_utc():
    p = parse_profile("timestamp,a\n2019-01-01T00:00-05:00,1\n2019-01-01T01:00-05:00,2\n")
    assert p.index[0] == pd.Timestamp("2019-01-01T05:00")


def sub(stamps_values):
    return "timestamp,v\n" + "\n".join(f"{t},{v}" for t, v in stamps_values) + "\n"


def test_average_constant_five_minute():
    rows = [(pd.Timestamp("2019-01-01") + pd.Timedelta(minutes=5 * k), 7.5) for k in range(12)]
    p = average_subhourly(sub(rows))
    assert p["v"].tolist() == [7.5]


def test_average_two_values():
    p = average_subhourly(sub([("2019-01-01T00:10", 0), ("2019-01-01T00:50", 10)]))
    assert p["v"].tolist() == [5.0]


def test_average_thirteen_irregular():
    rng = np.random.default_rng(1)
    secs = np.sort(rng.choice(3600, 13, replace=False))
    vals = rng.uniform(0, 100, 13)
    rows = [(pd.Timestamp("2019-01-01T03:00") + pd.Timedelta(seconds=int(s)), v) for s, v in zip(secs, vals)]
    p = average_subhourly(sub(rows))
    assert p["v"].iloc[0] == pytest.approx(sum(vals) / 13, rel=1e-14)


def test_average_boundary_record_belongs_to_next_hour():
    p = average_subhourly(sub([("2019-01-01T00:00", 1), ("2019-01-01T01:00", 3)]))
    assert p["v"].tolist() == [1.0, 3.0]


def test_average_empty_hour_rejected():
    with pytest.raises(ProfileError, match="empty hour"):
        average_subhourly(sub([("2019-01-01T00:10", 1), ("2019-01-01T02:10", 3)]))


def test_daily_and_fuel_prices():
    cf = parse_daily("timestamp,N1\n2019-12-16,0.97\n2019-12-17,0.5\n")
    assert cf.index[1] == pd.Timestamp("2019-12-17") and cf["N1"].tolist() == [0.97, 0.5]
    with pytest.raises(ProfileError, match="duplicate day"):
        parse_daily("timestamp,N1\n2019-12-16,0.97\n2019-12-16T05:00,0.5\n")

    wide = parse_fuel_prices("timestamp,fuel,price_per_mmbtu\n2019-12-16,gas,3\n2019-12-16,oil,12\n2019-12-18,gas,4\n")
    idx = pd.date_range("2019-12-16", periods=72, freq="h")
    hourly = hourly_fuel_prices(wide, idx)
    assert hourly["gas"].iloc[47] == 3 and hourly["gas"].iloc[48] == 4
    assert (hourly["oil"] == 12).all()
    with pytest.raises(ProfileError, match="start after"):
        hourly_fuel_prices(wide, pd.date_range("2019-12-15", periods=2, freq="h"))
    with pytest.raises(ProfileError, match="negative"):
        parse_fuel_prices("timestamp,fuel,price_per_mmbtu\n2019-12-16,gas,-3\n")


def test_unit_records_and_heat_rate_table():
    recs = parse_unit_records(
        "unit_id,timestamp,heat_input,power_output\nU1,2019-01-01T01:00,50,5\nU1,2019-01-01T00:00,10,1\nU2,2019-01-01T00:00,0,0\n"
    )
    assert [r.power_output for r in recs["U1"]] == [1.0, 5.0]
    assert sorted(recs) == ["U1", "U2"]
    with pytest.raises(ProfileError, match="negative"):
        parse_unit_records("unit_id,timestamp,heat_input,power_output\nU1,2019-01-01T00:00,-1,1\n")
    table = parse_heat_rate_table("unit_type,fuel,heat_rate_mmbtu_per_mwh\ncombustion-turbine,gas,11\n")
    assert table == {("combustion-turbine", "gas"): 11.0}
    with pytest.raises(ProfileError, match="duplicate"):
        parse_heat_rate_table("unit_type,fuel,heat_rate_mmbtu_per_mwh\nct,gas,11\nct,gas,12\n")
