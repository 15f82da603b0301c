import json

import numpy as np
import pandas as pd
import pytest

from oracles import pearson_two_pass

from gridrep.dcopf import OpfProblem, solve_dcopf
from gridrep.model import Branch, Bus, CostCurve, Generator, Network
from gridrep.validation import (
    LmpRun,
    Rule,
    Season,
    ValidationError,
    compare_lmps,
    filter_extremes,
    find_outliers,
    pearson,
    scenario_rescale,
    write_report,
)

IDX = pd.date_range("2019-12-16", periods=200, freq="h")


def test_pearson_examples():
    x = np.arange(10.0)
    assert pearson(x, x) == 1.0
    assert pearson(x, -2 * x + 7) == -1.0
    rng = np.random.default_rng(17)
    a, b = rng.normal(size=200), rng.normal(size=200)
    b = 0.3 * a + b
    assert abs(pearson(a, b) - pearson_two_pass(a, b)) < 1e-12
    with pytest.raises(ValidationError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValidationError):
        pearson([1, 2], [1, 2, 3])


def test_filter_extremes():
    s = pd.Series([30.0, -1300.0, 45.0], index=IDX[:3])
    out, log = filter_extremes({"D": s, "E": s}, {"D": Rule(low=-1000.0)})
    assert out["D"].tolist() == [30.0, 45.0] and out["E"].equals(s)
    (r,) = log
    assert (r.zone, r.value, r.index) == ("D", -1300.0, IDX[1]) and "below" in r.reason
    out, log = filter_extremes({"Z": pd.Series([399.0, 401.0])}, {"Z": Rule(high=400.0)})
    assert out["Z"].tolist() == [399.0] and len(log) == 1
    with pytest.raises(ValidationError):
        Rule.from_dict({"lo": 1})


def test_find_outliers():
    (o,) = find_outliers(pd.Series([50.0]), pd.Series([85.0]), 30.0, "A")
    assert (o.real, o.sim, o.zone) == (50.0, 85.0, "A")
    same = pd.Series(np.linspace(10, 90, 50))
    assert find_outliers(same, same, 30.0) == []
    assert find_outliers(pd.Series([0.0]), pd.Series([30.0]), 30.0) == []  # boundary is inside the band


def test_exactly_43_outliers():
    rng = np.random.default_rng(18)
    real = pd.Series(rng.uniform(20, 80, 200), index=IDX)
    sim = real + rng.uniform(-29, 29, 200)
    hit = rng.choice(200, 43, replace=False)
    sim.iloc[hit] = real.iloc[hit] + rng.choice([-1, 1], 43) * rng.uniform(31, 100, 43)
    out = find_outliers(real, sim, 30.0)
    assert len(out) == 43 and sorted(o.hour for o in out) == sorted(IDX[hit])


def test_season_mask():
    s = Season.from_dict("w", [["2019-12-16", "2019-12-16T05:00"], ["2019-12-20", "2019-12-20T00:00"]])
    assert s.mask(IDX).sum() == 7


def test_compare_lmps_and_report(tmp_path):
    rng = np.random.default_rng(19)
    real = pd.DataFrame({"A": rng.uniform(20, 60, 200), "B": rng.uniform(20, 60, 200)}, index=IDX)
    sim = real + rng.normal(0, 2, real.shape)
    real.iloc[5, 0] = -1300.0
    sim.iloc[7, 1] += 50
    rep = compare_lmps(real, sim, {"A": Rule(low=-1000)}, 30.0,
                       [Season.from_dict("early", [["2019-12-16", "2019-12-19T23:00"]])])
    assert len(rep.removed) == 1 and rep.removed[0].value == -1300
    assert [(o.zone, o.hour) for o in rep.outliers] == [("B", IDX[7])]
    assert rep.correlations[("early", "A")] > 0.95
    written = write_report(rep, tmp_path, sim, real)
    names = {p.name for p in written}
    assert {"correlations.csv", "removed_points.csv", "outliers.csv", "summary.json", "scatter_A.csv"} <= names
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["n_outliers"] == 1 and summary["outliers_by_zone"] == {"B": 1}


def test_short_season_is_skipped_not_fatal():
    real = pd.DataFrame({"A": [1.0, 2.0, 3.0]}, index=IDX[:3])
    rep = compare_lmps(real, real, seasons=[Season.from_dict("one", [[str(IDX[0]), str(IDX[0])]])])
    assert np.isnan(rep.correlations[("one", "A")]) and rep.skipped


def thermal_net():
    return Network(100.0, (Bus(1, "A", "slack"), Bus(2, "B", base_load=100.0)), (Branch(1, 1, 2, 0.1, 50.0),),
                   (Generator("G1", 1, "gas", 500.0, cost=CostCurve(10.0)), Generator("G2", 2, "gas", 500.0, cost=CostCurve(30.0))))


def test_scenario_rescale():
    def build(h):
        return OpfProblem(thermal_net(), {2: 60.0 + h})
    base = {h: solve_dcopf(build(h)) for h in range(3)}
    ref = pd.DataFrame({"A": [15.0] * 3, "B": [45.0] * 3})
    run = LmpRun(build, base, ref)
    one = scenario_rescale(run, 1.0)
    assert (one.lmp_change.to_numpy() == 0).all()
    five = scenario_rescale(run, 5.0)
    np.testing.assert_allclose(five.zonal_lmp.to_numpy(), 5 * run.zonal_frame().to_numpy(), rtol=1e-12)
    half = scenario_rescale(run, 1.5)
    assert half.residual_scaled["A"] < half.residual_base["A"]
    assert half.residual_scaled["B"] < half.residual_base["B"]
