"""Regenerate the bundled synthetic fixtures in src/gridrep/data.

The outputs are committed; this script documents how they were made.  It is
deterministic (fixed seed), so rerunning it reproduces the files byte for
byte.  Reference flows and prices are produced by running the pipeline on the
synthetic inputs and perturbing the results.

    python3 scripts/make_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from gridrep.casefile import write_case
from gridrep.dcpf import interface_flow
from gridrep.model import Branch, Bus, CostCurve, Generator, Interface, Network
from gridrep.pipeline import Study

DATA = Path(__file__).resolve().parents[1] / "src" / "gridrep" / "data"
RNG = np.random.default_rng(20191216)

RECORD_START = pd.Timestamp("2019-11-23 00:00")
WEEK_START = pd.Timestamp("2019-12-16 00:00")
ALL_HOURS = pd.date_range(RECORD_START, periods=720, freq="h")
WEEK = ALL_HOURS[ALL_HOURS >= WEEK_START]
assert len(WEEK) == 168

ZONE_BASE = {"A": {1: 300.0, 2: 450.0, 3: 500.0, 4: 350.0},
             "B": {5: 500.0, 6: 700.0, 7: 600.0, 8: 400.0},
             "X": {9: 300.0, 10: 700.0, 11: 600.0, 12: 400.0}}
THERMAL = {  # id: bus, fuel, nameplate, slope, intercept, heat noise sd, price column, unit type
    "G1": (5, "gas", 600.0, 6.8, 400.0, 15.0, "gas", "combined-cycle"),
    "G2": (6, "gas", 450.0, 9.5, 300.0, 20.0, "gas", "steam"),
    "G3": (8, "oil", 250.0, 10.2, 200.0, 10.0, "oil", "steam"),
    "G4": (7, "dual-fuel", 350.0, 8.5, 500.0, 900.0, "gas", "combustion-turbine"),
}
COMMIT_ORDER = ["G1", "G4", "G2", "G3"]


def case12() -> tuple[Network, list[Interface]]:
    coords = {1: (43.0, -76.2), 2: (43.1, -75.6), 3: (42.7, -75.9), 4: (42.5, -75.2),
              5: (41.9, -74.6), 6: (41.6, -74.0), 7: (41.2, -73.9), 8: (40.9, -73.6),
              9: (44.0, -77.5), 10: (44.5, -78.5), 11: (44.9, -79.1), 12: (43.9, -79.4)}
    buses = []
    for zone, loads in ZONE_BASE.items():
        for b, load in loads.items():
            buses.append(Bus(b, zone, "slack" if b == 1 else "PQ", load, *coords[b]))
    lines = [  # id, from, to, x, rating
        (1, 1, 2, 0.05, 900), (2, 1, 3, 0.06, 900), (3, 2, 3, 0.04, 900), (4, 2, 4, 0.07, 900),
        (5, 3, 4, 0.05, 900), (6, 3, 5, 0.08, 700), (7, 4, 6, 0.09, 700), (8, 5, 6, 0.04, 900),
        (9, 5, 7, 0.05, 900), (10, 6, 8, 0.06, 700), (11, 7, 8, 0.05, 700), (12, 9, 1, 0.07, 600),
        (13, 12, 7, 0.08, 600), (14, 9, 10, 0.03, 1500), (15, 10, 11, 0.04, 1500), (16, 11, 12, 0.05, 1500),
    ]
    branches = [Branch(i, f, t, x, float(r), resistance=round(x / 10, 4)) for i, f, t, x, r in lines]
    gens = [
        Generator("NUC1", 2, "nuclear", 600.0, cost=CostCurve(2.0)),
        Generator("STL", 4, "hydro", 700.0, cost=CostCurve(5.0)),
        Generator("RMN", 1, "hydro", 900.0, cost=CostCurve(5.0)),
        Generator("HS1", 3, "hydro", 150.0, cost=CostCurve(5.0)),
        Generator("HS2", 2, "hydro", 100.0, cost=CostCurve(5.0)),
        Generator("HQ", 4, "hydro", 1200.0, dispatchable=False),
        Generator("W1", 3, "wind", 150.0, dispatchable=False),
        Generator("W2", 8, "wind", 100.0, dispatchable=False),
        Generator("OR1", 6, "other-renewable", 30.0, dispatchable=False),
        Generator("OR2", 2, "other-renewable", 20.0, dispatchable=False),
        Generator("GT1", 8, "gas", 40.0, cost=CostCurve(40.0)),
        Generator("GT2", 6, "oil", 25.0, cost=CostCurve(150.0)),
        Generator("X1", 10, "gas", 1500.0, cost=CostCurve(30.0)),
        Generator("X2", 11, "coal", 900.0, cost=CostCurve(25.0)),
        Generator("X3", 12, "gas", 800.0, cost=CostCurve(35.0)),
    ]
    for gid, (bus, fuel, cap, *_rest) in THERMAL.items():
        gens.append(Generator(gid, bus, fuel, cap, cost=CostCurve(30.0)))
    net = Network(100.0, tuple(buses), tuple(branches), tuple(gens))
    ifaces = [
        Interface("AB", ((6, 1), (7, 1)), 350.0, -350.0),
        Interface("B_CENTRAL", ((8, 1), (9, 1)), 1200.0, -1200.0),
        Interface("X_NY", ((12, 1), (13, 1)), 900.0, -900.0),
    ]
    return net, ifaces


def shape(t: pd.DatetimeIndex) -> np.ndarray:
    daily = 0.5 - 0.5 * np.cos(2 * np.pi * (t.hour.to_numpy() - 4) / 24)
    weekend = np.where(t.dayofweek.to_numpy() >= 5, 0.93, 1.0)
    cold = np.where((t >= "2019-12-18") & (t < "2019-12-20"), 1.08, 1.0)
    return daily, weekend * cold


def walk(n: int, sd: float) -> np.ndarray:
    w = np.cumsum(RNG.normal(0, sd, n))
    return w - np.linspace(0, w[-1], n)  # pinned ends keep it bounded


def hourly_inputs():
    t = ALL_HOURS
    n = len(t)
    daily, factor = shape(t)
    load = pd.DataFrame({
        "A": (1450 + 350 * daily) * factor + RNG.normal(0, 15, n),
        "B": (1950 + 500 * daily) * factor + RNG.normal(0, 20, n),
        "X": (1800 + 450 * daily) * factor + RNG.normal(0, 20, n),
    }, index=t)
    hydro = 1000 + 150 * daily + walk(n, 12)
    hydro[np.flatnonzero(t == pd.Timestamp("2019-12-21 04:00"))] = 560.0  # forces an RMN clamp
    wind = np.clip(110 + walk(n, 14) + 40 * np.sin(np.arange(n) / 17.0), 5, 240)
    other = 36 + RNG.normal(0, 2, n)
    mix = pd.DataFrame({"hydro": hydro, "wind": wind, "other_renewable": other}, index=t)
    dc = 150 + 80 * np.sin(np.arange(n) * 2 * np.pi / 24) + RNG.normal(0, 10, n)
    ac = 280 + 60 * daily + RNG.normal(0, 25, n)
    hq = 520 + walk(n, 10) + RNG.normal(0, 5, n)
    hq[np.flatnonzero(t == pd.Timestamp("2019-12-18 03:00"))] = -25.0  # brief export
    ties = pd.DataFrame({"X_NY": ac + dc, "DC1": dc, "HQ": hq}, index=t)
    days = pd.date_range(RECORD_START, WEEK[-1].normalize(), freq="D")
    cf = pd.DataFrame({"NUC1": np.where(days == pd.Timestamp("2019-12-19"), 0.55, 0.985)}, index=days)
    return load, mix, ties, cf


def subhourly(mix: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for ts, vals in mix.loc[WEEK].iterrows():
        count = 12 - int(RNG.integers(0, 3))
        minutes = np.sort(RNG.choice(np.arange(0, 60, 5), size=count, replace=False))
        for m in minutes:
            stamp = ts + pd.Timedelta(minutes=int(m), seconds=int(RNG.integers(0, 50)))
            rows.append((stamp, *(vals.to_numpy() + RNG.normal(0, [6, 3, 0.5]))))
    frame = pd.DataFrame(rows, columns=["timestamp", "hydro", "wind", "other_renewable"])
    frame[["hydro", "wind", "other_renewable"]] = frame[["hydro", "wind", "other_renewable"]].clip(lower=0)
    return frame


def thermal_records(need: pd.Series) -> pd.DataFrame:
    caps = {g: THERMAL[g][2] for g in COMMIT_ORDER}
    rows = []
    for ts, total in need.items():
        total = max(total, 160.0)
        committed, room = [], 0.0
        for g in COMMIT_ORDER:
            committed.append(g)
            room += caps[g]
            if room * 0.8 >= total:
                break
        total = min(total, room * 0.97)
        for g in COMMIT_ORDER:
            p = total * caps[g] / room if g in committed else 0.0
            _b, _f, _cap, slope, icpt, sd, *_ = THERMAL[g]
            heat = max(0.0, slope * p + icpt + RNG.normal(0, sd)) if p > 0 else 0.0
            rows.append((g, ts.isoformat(), round(heat, 3), round(p, 3)))
    return pd.DataFrame(rows, columns=["unit_id", "timestamp", "heat_input", "power_output"])


def fuel_price_rows() -> pd.DataFrame:
    days = pd.date_range(RECORD_START, WEEK[-1].normalize(), freq="D")
    gas = 3.4 + 0.05 * np.arange(len(days)) % 0.4
    gas = np.where((days >= "2019-12-18") & (days < "2019-12-20"), gas + 2.5, gas)
    rows = [(d.date().isoformat(), "gas", round(float(p), 4)) for d, p in zip(days, gas)]
    rows += [(d.date().isoformat(), "oil", 13.1) for d in days[::7]]
    return pd.DataFrame(rows, columns=["timestamp", "fuel", "price_per_mmbtu"])


def write_csv(frame: pd.DataFrame, name: str, index_label: str | None = "timestamp") -> None:
    frame.to_csv(DATA / name, index=index_label is not None, index_label=index_label, float_format="%.4f",
                 date_format="%Y-%m-%dT%H:%M:%S")


def study_config() -> dict:
    return {
        "case": "case12.txt",
        "reduction": "reduce12.json",
        "profiles": {
            "load": "load.csv", "fuel_mix": "fuel_mix_5min.csv", "ties": "ties.csv",
            "nuclear_cf": "nuclear_cf.csv", "fuel_prices": "fuel_prices.csv",
            "unit_records": "unit_records.csv", "heat_rates": "heat_rates.csv",
            "lmp": "lmp.csv", "flows": "interface_flows.csv",
        },
        "allocation": {
            "seed": 7,
            "hydro": {"stl_id": "STL", "rmn_id": "RMN", "units": ["STL", "RMN", "HS1", "HS2"],
                      "stl_monthly_cf": [0.74, 0.72, 0.75, 0.8, 0.85, 0.82, 0.8, 0.78, 0.74, 0.72, 0.7, 0.7],
                      "large_share": 0.8},
            "hq": {"generator": "HQ", "column": "HQ"},
            "external_areas": [{"label": "X", "load_column": "X", "tie_flow_column": "X_NY",
                                "baseline_gen": {"X1": 1100.0, "X2": 700.0, "X3": 500.0},
                                "tie_capability": 800.0, "lmp_column": "X"}],
            "thermal": {
                "G1": {"fuel": "gas", "unit_type": "combined-cycle"},
                "G2": {"fuel": "gas", "unit_type": "steam"},
                "G3": {"fuel": "oil", "unit_type": "steam"},
                "G4": {"fuel": "gas", "unit_type": "combustion-turbine"},
                "GT1": {"fuel": "gas", "unit_type": "combustion-turbine", "default": True},
                "GT2": {"fuel": "oil", "unit_type": "internal-combustion", "default": True},
            },
            "thermal_scale": {"B": 1.05},
            "marginal_cost_ranges": {"hydro": [1.0, 10.0], "nuclear": [1.0, 3.0]},
            "ten_minute_ramp": {"hydro": 0.9, "nuclear": 0.1},
        },
        "hvdc_schedules": {"DC1": "DC1"},
        "validation": {
            "band": 30.0,
            "rules": {"A": {"low": -1000.0, "high": 400.0}, "B": {"low": -1000.0, "high": 400.0}},
            "seasons": {"early": [["2019-12-16T00:00", "2019-12-18T23:00"]],
                        "late": [["2019-12-19T00:00", "2019-12-20T23:00"], ["2019-12-21T00:00", "2019-12-22T23:00"]]},
            "outlier_zones": ["A", "B"],
            "scenarios": [1.5, 5.0],
            "scenario_hours": [16, 17, 18, 40, 41, 42],
        },
    }


def reduction_plan() -> dict:
    return {
        "retained": [1, 2, 3, 4, 5, 6, 7, 8, 9, 12],
        "notes": "keep zones A and B plus the two external buses with ties into the study region",
        "remove_branches": [],
        "add_lines": [{"from_bus": 4, "to_bus": 8, "length_miles": 60.0, "kv": 345.0, "rating": 800.0,
                       "name": "A-B reinforcement"}],
        "hvdc": [{"from_bus": 12, "to_bus": 6, "name": "DC1", "limit": 300.0}],
    }


def case30() -> tuple[Network, list[Interface], dict]:
    rng = np.random.default_rng(30)
    n = 30
    buses = [Bus(b, "I" if b <= 12 else "E", "slack" if b == 1 else "PQ", round(float(rng.uniform(20, 120)), 1))
             for b in range(1, n + 1)]
    edges = set()
    for b in range(2, n + 1):  # random spanning tree inside each area, joined by ties
        lo, hi = (1, b - 1) if b <= 12 or b == 13 else (13, b - 1)
        edges.add((int(rng.integers(lo, hi + 1)), b))
    while len(edges) < 38:
        i, j = sorted(int(v) for v in rng.choice(np.arange(1, n + 1), 2, replace=False))
        if (i <= 12) != (j <= 12) and rng.random() < 0.6:
            continue
        edges.add((i, j))
    edges |= {(9, 20), (11, 27)}
    extra_external = [(14, 29), (16, 25), (18, 30)]  # parallel paths removed before reduction
    branches, k = [], 1
    for i, j in sorted(edges) + extra_external:
        branches.append(Branch(k, i, j, round(float(rng.uniform(0.02, 0.2)), 4), round(float(rng.uniform(200, 600)), 0)))
        k += 1
    remove = [len(branches) - 2, len(branches) - 1, len(branches)]
    gens = [Generator(f"G{b}", b, "gas", 300.0, cost=CostCurve(round(float(rng.uniform(15, 45)), 2)))
            for b in (1, 4, 8, 15, 22, 28)]
    net = Network(100.0, tuple(buses), tuple(branches), tuple(gens))
    ties = [br.id for br in branches if (br.from_bus <= 12) != (br.to_bus <= 12)]
    ifaces = [Interface("I_E", tuple((t, 1 if branches[t - 1].from_bus <= 12 else -1) for t in ties))]
    plan = {"retained": list(range(1, 13)), "notes": "internal area only; three external parallels removed first",
            "remove_branches": remove}
    return net, ifaces, plan


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    net, ifaces = case12()
    write_case(DATA / "case12.txt", net, ifaces, header="synthetic 12-bus, 3-zone study case")
    (DATA / "reduce12.json").write_text(json.dumps(reduction_plan(), indent=2) + "\n")
    config = study_config()
    (DATA / "study12.json").write_text(json.dumps(config, indent=2) + "\n")

    load, mix, ties, cf = hourly_inputs()
    dropped = [WEEK[30], WEEK[31]]  # a two-hour hole the ingester interpolates
    write_csv(load.loc[WEEK].drop(index=dropped), "load.csv")
    subhourly(mix).to_csv(DATA / "fuel_mix_5min.csv", index=False, float_format="%.4f",
                          date_format="%Y-%m-%dT%H:%M:%S")
    write_csv(ties.loc[WEEK], "ties.csv")
    cf.to_csv(DATA / "nuclear_cf.csv", index_label="timestamp", date_format="%Y-%m-%d")
    fuel_price_rows().to_csv(DATA / "fuel_prices.csv", index=False)
    pd.DataFrame([("combined-cycle", "gas", 7.0), ("combustion-turbine", "gas", 11.2),
                  ("combustion-turbine", "oil", 12.4), ("internal-combustion", "oil", 10.1),
                  ("steam", "gas", 10.0), ("steam", "oil", 10.4)],
                 columns=["unit_type", "fuel", "heat_rate_mmbtu_per_mwh"]).to_csv(DATA / "heat_rates.csv", index=False)

    nuke = 600.0 * cf["NUC1"].reindex(ALL_HOURS.normalize()).to_numpy()
    supply = nuke + mix["hydro"] + mix["wind"] + mix["other_renewable"] + ties["HQ"] + ties["X_NY"]
    need = (load["A"] + load["B"] - supply) / config["allocation"]["thermal_scale"]["B"]
    thermal_records(need).to_csv(DATA / "unit_records.csv", index=False)

    # external prices first: the OPF prices the external equivalents with them
    daily, factor = shape(WEEK)
    x_lmp = (24 + 14 * daily) * factor + RNG.normal(0, 1.5, len(WEEK))
    write_csv(pd.DataFrame({"X": x_lmp}, index=WEEK), "lmp.csv")
    write_csv(pd.DataFrame({i.name: np.zeros(len(WEEK)) for i in ifaces}, index=WEEK), "interface_flows.csv")

    study = Study.from_file(DATA / "study12.json")
    hours = range(len(WEEK))
    flows = {i.name: [] for i in ifaces}
    for t in hours:
        sol = study.pf_hour(t)
        for i in ifaces:
            rating = sum(study.study_net.branch(b).rating for b, _ in i.members)
            flows[i.name].append(interface_flow(sol, i) + RNG.normal(0, 0.035 * rating))
    write_csv(pd.DataFrame(flows, index=WEEK), "interface_flows.csv")

    run = study.run_opf(hours, scale=1.5)
    assert not run.failures, run.failures
    ref = pd.DataFrame({t: run.solutions[t].zonal_lmp for t in hours}).T
    ref.index = WEEK
    ref = ref[["A", "B"]] + RNG.normal(0, 1.0, (len(WEEK), 2))
    ref.iloc[[20, 44, 68, 92], 1] += 45.0  # price spikes the model cannot see
    ref.iloc[50, 0] = -1300.0
    ref.iloc[90, 1] = 450.0
    ref["X"] = x_lmp
    write_csv(ref, "lmp.csv")

    net30, ifaces30, plan30 = case30()
    write_case(DATA / "case30.txt", net30, ifaces30, header="synthetic 30-bus case for the 30 to 12 reduction")
    (DATA / "reduce30.json").write_text(json.dumps(plan30, indent=2) + "\n")


if __name__ == "__main__":
    main()
