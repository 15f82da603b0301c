"""Study assembly: load a study config, then build hourly PF and OPF inputs.

A study config is a JSON file naming the case, the reduction plan, the
profile files (relative to the config's directory) and the allocation and
validation settings.  See ``gridrep/data/study12.json`` for a complete
example.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd

from . import allocation as alloc
from .casefile import read_case
from .dcopf import OpfProblem, hourly_opf_run
from .dcpf import DcPowerFlow, interface_error, interface_flow, interface_rating
from .model import (
    CostCurve,
    Fuel,
    Generator,
    HourlyProfile,
    Interface,
    Network,
    net_injections,
)
from .paramfit import UnitParameters, default_small_unit, fit_unit
from .profiles import (
    average_subhourly,
    hourly_fuel_prices,
    parse_daily,
    parse_fuel_prices,
    parse_heat_rate_table,
    parse_profile,
    parse_unit_records,
)
from .reduction import ReducedNetwork, ReductionPlan, reduce_with_plan
from .validation import Rule, Season

PROFILE_KEYS = ("load", "fuel_mix", "ties", "nuclear_cf", "fuel_prices", "unit_records", "heat_rates", "lmp", "flows",
                "interface_limits")
CONFIG_KEYS = {"case", "reduction", "profiles", "allocation", "hvdc_schedules", "validation", "notes"}


class StudyError(ValueError):
    pass


@dataclass(frozen=True)
class ThermalUnit:
    fuel: str  # column in the fuel price file
    unit_type: str
    default: bool = False  # no usable telemetry: standard heat rate and nameplate limits


@dataclass
class Allocated:
    outputs: pd.DataFrame  # hours x generators, MW (full network)
    bus_loads: pd.DataFrame  # hours x buses, gross MW (full network)
    clamps: list = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def _require(path: Path) -> Path:
    if not path.is_file():
        raise StudyError(f"input file not found: {path}")
    return path


class Study:
    def __init__(self, config: dict, base_dir: Path, case_path: Path | None = None, profiles_dir: Path | None = None):
        extra = set(config) - CONFIG_KEYS
        if extra:
            raise StudyError(f"unknown study config keys {sorted(extra)}")
        self.config = config
        self.base_dir = Path(base_dir)
        self.case_path = _require(Path(case_path) if case_path else self.base_dir / config["case"])
        self.profiles_dir = Path(profiles_dir) if profiles_dir else self.base_dir
        self.reduction_path = _require(self.base_dir / config["reduction"]) if config.get("reduction") else None
        names = config.get("profiles", {})
        unknown = set(names) - set(PROFILE_KEYS)
        if unknown:
            raise StudyError(f"unknown profile keys {sorted(unknown)}")
        self.profile_paths = {k: self.profiles_dir / v for k, v in names.items()}
        self.full_net, self.interfaces = read_case(self.case_path)
        a = config.get("allocation", {})
        self.seed = int(a.get("seed", 0))

    @classmethod
    def from_file(cls, path, case=None, profiles=None) -> Study:
        path = _require(Path(path))
        with open(path, encoding="utf-8") as fh:
            try:
                config = json.load(fh)
            except json.JSONDecodeError as exc:
                raise StudyError(f"{path}: invalid JSON ({exc})") from None
        return cls(config, path.parent, case, profiles)

    def input_files(self) -> list[Path]:
        files = [self.case_path, *self.profile_paths.values()]
        if self.reduction_path:
            files.append(self.reduction_path)
        return files

    def _path(self, key: str) -> Path:
        if key not in self.profile_paths:
            raise StudyError(f"study config has no '{key}' profile")
        return _require(self.profile_paths[key])

    def _text(self, key: str) -> str:
        return self._path(key).read_text(encoding="utf-8")

    # ---------------------------------------------------------------- ingest

    @cached_property
    def load(self) -> HourlyProfile:
        zones = sorted({b.zone for b in self.full_net.buses})
        return parse_profile(self._text("load"), zones)

    @property
    def index(self) -> pd.DatetimeIndex:
        return self.load.index

    @cached_property
    def fuel_mix(self) -> HourlyProfile:
        return average_subhourly(self._text("fuel_mix"), ["hydro", "wind", "other_renewable"])

    @cached_property
    def ties(self) -> HourlyProfile:
        return parse_profile(self._text("ties"))

    @cached_property
    def nuclear_cf(self) -> pd.DataFrame:
        return parse_daily(self._text("nuclear_cf"))

    @cached_property
    def fuel_prices(self) -> HourlyProfile:
        return hourly_fuel_prices(parse_fuel_prices(self._text("fuel_prices")), self.index)

    @cached_property
    def unit_records(self):
        return parse_unit_records(self._text("unit_records"))

    @cached_property
    def heat_rates(self):
        return parse_heat_rate_table(self._text("heat_rates"))

    @cached_property
    def lmp(self) -> HourlyProfile | None:
        return parse_profile(self._text("lmp")) if "lmp" in self.profile_paths else None

    @cached_property
    def flows(self) -> HourlyProfile | None:
        return parse_profile(self._text("flows")) if "flows" in self.profile_paths else None

    @cached_property
    def interface_limits(self) -> pd.DataFrame | None:
        """Optional hourly limits: columns ``<interface>_pos`` and ``<interface>_neg``.

        A missing column (or the whole file) falls back to the static case limits.
        """
        if "interface_limits" not in self.profile_paths:
            return None
        prof = parse_profile(self._text("interface_limits"))
        names = {i.name for i in self.interfaces}
        for col in prof.columns:
            name, _, side = col.rpartition("_")
            if name not in names or side not in ("pos", "neg"):
                raise StudyError(f"interface limit column {col!r} must be <interface>_pos or <interface>_neg")
        frame = prof.frame.reindex(self.index)
        if frame.isna().any().any():
            raise StudyError("interface limit profile does not cover every study hour")
        return frame

    def hourly_interface_limits(self, t: int) -> dict[str, tuple[float, float]]:
        frame = self.interface_limits
        if frame is None:
            return {}
        row = frame.iloc[t]
        out = {}
        for i in self.interfaces:
            neg = float(row[f"{i.name}_neg"]) if f"{i.name}_neg" in row.index else i.limit_neg
            pos = float(row[f"{i.name}_pos"]) if f"{i.name}_pos" in row.index else i.limit_pos
            if neg > pos:
                raise StudyError(f"hour {t}: interface {i.name} limits cross ({neg} > {pos})")
            out[i.name] = (neg, pos)
        return out

    def ingest(self) -> dict[str, object]:
        """Parse every configured input; raises on the first bad file."""
        out = {"case": self.full_net, "load": self.load, "fuel_mix": self.fuel_mix, "ties": self.ties,
               "nuclear_cf": self.nuclear_cf, "fuel_prices": self.fuel_prices,
               "unit_records": self.unit_records, "heat_rates": self.heat_rates}
        if self.lmp is not None:
            out["lmp"] = self.lmp
        if self.flows is not None:
            out["flows"] = self.flows
        if self.interface_limits is not None:
            out["interface_limits"] = self.interface_limits
        for key in ("fuel_mix", "ties", "fuel_prices"):
            missing = self.index.difference(out[key].index)
            if len(missing):
                raise StudyError(f"{key} profile does not cover hour {missing[0]}")
        return out

    # ------------------------------------------------------------------- fit

    @cached_property
    def thermal_units(self) -> dict[str, ThermalUnit]:
        units = self.config.get("allocation", {}).get("thermal", {})
        return {gid: ThermalUnit(**spec) for gid, spec in sorted(units.items())}

    @cached_property
    def unit_parameters(self) -> dict[str, UnitParameters]:
        params = {}
        for gid, unit in self.thermal_units.items():
            g = self.full_net.generator(gid)
            recs = self.unit_records.get(gid, [])
            if unit.default or not recs:
                params[gid] = default_small_unit(g.p_max, unit.unit_type, unit.fuel, self.heat_rates)
            else:
                params[gid] = fit_unit(recs)
        return params

    def fitted_network(self, net: Network | None = None) -> Network:
        """``net`` with fitted limits and ramps, and costs at the mean fuel price."""
        net = self.full_net if net is None else net
        mean_price = self.fuel_prices.frame.mean()
        gens = []
        for g in net.generators:
            p = self.unit_parameters.get(g.id)
            if p is not None:
                price = float(mean_price[self.thermal_units[g.id].fuel])
                g = replace(g, p_max=p.p_max, p_min=p.p_min, ramp_hourly=p.ramp_hourly, cost=p.cost(price))
            elif g.id in self.drawn_costs:
                g = replace(g, cost=CostCurve(self.drawn_costs[g.id]), ramp_hourly=self.fixed_ramps.get(g.id, g.ramp_hourly))
            gens.append(g)
        return net.with_(generators=tuple(gens))

    # -------------------------------------------------------------- allocate

    @property
    def _alloc_cfg(self) -> dict:
        return self.config.get("allocation", {})

    @cached_property
    def hydro_config(self) -> alloc.HydroConfig:
        h = self._alloc_cfg["hydro"]
        return alloc.HydroConfig(h["stl_id"], h["rmn_id"], tuple(h["stl_monthly_cf"]), h.get("large_share", 0.8))

    @cached_property
    def hydro_units(self) -> list[str]:
        return list(self._alloc_cfg["hydro"]["units"])

    @cached_property
    def hq(self) -> dict | None:
        return self._alloc_cfg.get("hq")

    @cached_property
    def external_areas(self) -> list[tuple[alloc.ExternalArea, dict]]:
        areas = []
        for spec in self._alloc_cfg.get("external_areas", []):
            label = spec["label"]
            buses = tuple(self.full_net.zone_buses(label))
            areas.append((
                alloc.ExternalArea(
                    label=label,
                    buses=buses,
                    baseline_load={b: self.full_net.bus(b).base_load for b in buses},
                    baseline_gen=spec["baseline_gen"],
                    tie_flow_column=spec["tie_flow_column"],
                    load_column=spec.get("load_column", label),
                ),
                spec,
            ))
        return areas

    @cached_property
    def external_gens(self) -> set[str]:
        return {g for area, _ in self.external_areas for g in area.baseline_gen}

    @cached_property
    def drawn_costs(self) -> dict[str, float]:
        rng = np.random.default_rng(self.seed)
        ranges = self._alloc_cfg.get("marginal_cost_ranges", {"hydro": [1.0, 10.0], "nuclear": [1.0, 3.0]})
        hq = self.hq["generator"] if self.hq else None
        out = {}
        for fuel in sorted(ranges):
            ids = [g.id for g in self.full_net.generators
                   if g.fuel.value == fuel and g.id != hq and g.id not in self.external_gens]
            lo, hi = ranges[fuel]
            out.update(alloc.draw_marginal_costs(ids, lo, hi, rng))
        return out

    @cached_property
    def fixed_ramps(self) -> dict[str, float]:
        shares = self._alloc_cfg.get("ten_minute_ramp", {"hydro": 0.9, "nuclear": 0.1})
        return {g.id: alloc.hourly_ramp(g.p_max, shares[g.fuel.value])
                for g in self.full_net.generators if g.fuel.value in shares and g.id in self.drawn_costs}

    @cached_property
    def allocated(self) -> Allocated:
        net, idx = self.full_net, self.index
        outputs: dict[str, pd.Series] = {}
        notes: list[str] = []

        for g in net.generators:
            if g.fuel is Fuel.NUCLEAR:
                if g.id not in self.nuclear_cf.columns:
                    raise StudyError(f"no capacity factor column for nuclear unit {g.id}")
                outputs[g.id] = alloc.allocate_nuclear(g.p_max, self.nuclear_cf[g.id], idx)

        mix = self.fuel_mix.frame.reindex(idx)
        hydro_caps = {u: net.generator(u).p_max for u in self.hydro_units}
        hydro = alloc.allocate_hydro(mix["hydro"], self.hydro_config, hydro_caps)
        outputs.update({u: hydro.outputs[u] for u in hydro.outputs.columns})

        for fuel, col in ((Fuel.WIND, "wind"), (Fuel.OTHER_RENEWABLE, "other_renewable")):
            caps = {g.id: g.p_max for g in net.generators if g.fuel is fuel}
            if caps:
                frame = alloc.allocate_proportional(mix[col], caps)
                outputs.update({u: frame[u] for u in frame.columns})

        ties = self.ties.frame.reindex(idx)
        if self.hq:
            hq_out, hq_notes = alloc.hq_injection(ties[self.hq["column"]])
            outputs[self.hq["generator"]] = hq_out
            notes += hq_notes

        scale = self._alloc_cfg.get("thermal_scale", {})
        recorded = self._thermal_recorded()
        for gid in self.thermal_units:
            zone = net.bus(net.generator(gid).bus).zone
            outputs[gid] = recorded.get(gid, pd.Series(0.0, index=idx)) * float(scale.get(zone, 1.0))

        load = self.load.frame
        loads = {}
        external_buses = {b for area, _ in self.external_areas for b in area.buses}
        for zone in net.zones:
            buses = [b for b in net.zone_buses(zone) if b not in external_buses]
            if not buses:
                continue
            base = {b: net.bus(b).base_load for b in buses}
            rows = [alloc.allocate_zone_load(float(v), buses, base) for v in load[zone]]
            for b in buses:
                loads[b] = pd.Series([r[b] for r in rows], index=idx)
        for area, spec in self.external_areas:
            rows = [alloc.rebalance_external(area, float(d), float(l))
                    for d, l in zip(load[area.load_column], ties[area.tie_flow_column])]
            for b in area.buses:
                loads[b] = pd.Series([r.loads.get(b, 0.0) for r in rows], index=idx)
            for g in area.baseline_gen:
                outputs[g] = pd.Series([r.gens[g] for r in rows], index=idx)

        covered = set(outputs)
        missing = [g.id for g in net.generators if g.id not in covered]
        if missing:
            raise StudyError(f"no allocation rule covers generator(s) {missing}")
        out_frame = pd.DataFrame(outputs, index=idx)[[g.id for g in net.generators]]
        load_frame = pd.DataFrame(loads, index=idx)[list(net.bus_ids)]
        return Allocated(out_frame, load_frame, hydro.clamps, notes)

    def _thermal_recorded(self) -> dict[str, pd.Series]:
        out = {}
        for gid in self.thermal_units:
            recs = self.unit_records.get(gid)
            if not recs:
                continue
            s = pd.Series({r.timestamp: r.power_output for r in recs}, dtype=float)
            out[gid] = s.reindex(self.index).fillna(0.0)
        return out

    # ---------------------------------------------------------------- reduce

    @cached_property
    def plan(self) -> ReductionPlan | None:
        if not self.reduction_path:
            return None
        with open(self.reduction_path, encoding="utf-8") as fh:
            return ReductionPlan.from_dict(json.load(fh))

    def full_injections(self, t: int) -> np.ndarray:
        a = self.allocated
        dispatch = a.outputs.iloc[t].to_dict()
        return net_injections(self.full_net, dispatch, a.bus_loads.iloc[t].to_numpy())

    def baseline_injections(self) -> np.ndarray:
        """Injections for the reduction: mean allocated output minus mean load."""
        a = self.allocated
        return net_injections(self.full_net, a.outputs.mean().to_dict(), a.bus_loads.mean().to_numpy())

    @cached_property
    def reduced(self) -> tuple[ReducedNetwork, Network]:
        if self.plan is None:
            red = ReducedNetwork(self.full_net, np.zeros(self.full_net.n_bus), {}, (), np.zeros((self.full_net.n_bus, 0)))
            return red, self.full_net
        return reduce_with_plan(self.full_net, self.baseline_injections(), self.plan)

    @property
    def study_net(self) -> Network:
        return self.reduced[1]

    # -------------------------------------------------------------------- pf

    @cached_property
    def hvdc_columns(self) -> dict[str, str]:
        return dict(self.config.get("hvdc_schedules", {}))

    def hvdc_schedule(self, t: int) -> dict[str, float]:
        ties = self.ties.frame.iloc[t]
        out = {}
        for br in self.study_net.hvdc_branches:
            col = self.hvdc_columns.get(br.name)
            if col is None:
                raise StudyError(f"no schedule column for HVDC proxy {br.name or br.id}")
            out[br.name or br.id] = float(ties[col])
        return out

    @cached_property
    def _pf(self) -> DcPowerFlow:
        return DcPowerFlow(self.study_net)

    def study_injections(self, t: int) -> np.ndarray:
        red, net = self.reduced
        inj = red.equivalent_injections(self.plan.prepare(self.full_net) if self.plan else self.full_net,
                                        self.full_injections(t))
        return np.array([inj[red.network.bus_index[b]] for b in net.bus_ids])

    def pf_hour(self, t: int):
        return self._pf.solve(self.study_injections(t), self.hvdc_schedule(t))

    def run_pf(self, hours) -> tuple[pd.DataFrame, dict[int, object], list[tuple[int, str]]]:
        """Interface comparison rows plus the solutions and per-hour failures."""
        rows, sols, failures = [], {}, []
        flows = self.flows.frame if self.flows is not None else None
        net = self.study_net
        for t in hours:
            try:
                sol = self.pf_hour(t)
            except (RuntimeError, ValueError) as exc:
                failures.append((t, str(exc)))
                continue
            sols[t] = sol
            for iface in self.interfaces:
                sim = interface_flow(sol, iface)
                real = float(flows[iface.name].iloc[t]) if flows is not None and iface.name in flows else math.nan
                rating = interface_rating(net, iface)
                eps = interface_error(real, sim, rating) if not math.isnan(real) else math.nan
                rows.append({"hour": t, "timestamp": self.index[t].isoformat(), "interface": iface.name,
                             "real": real, "sim": sim, "epsilon": eps})
        return pd.DataFrame(rows, columns=["hour", "timestamp", "interface", "real", "sim", "epsilon"]), sols, failures

    # ------------------------------------------------------------------- opf

    @cached_property
    def external_bus_set(self) -> set[int]:
        return {b for area, _ in self.external_areas for b in area.buses}

    @cached_property
    def opf_network(self) -> Network:
        """Study network with fitted costs and one equivalent unit per retained external bus."""
        net = self.fitted_network(self.study_net)
        extra = []
        for area, spec in self.external_areas:
            for b in area.buses:
                if b in net.bus_index:
                    extra.append(Generator(f"EQ_{area.label}_{b}", b, Fuel.EXTERNAL, p_max=1e6, p_min=0.0,
                                           cost=CostCurve(0.0), dispatchable=True))
        return net.with_(generators=net.generators + tuple(extra))

    def _external_split(self, t: int):
        """Per-study-bus external load and expected external generation for hour ``t``."""
        red, net = self.reduced
        a = self.allocated
        load_full = a.bus_loads.iloc[t]
        gen_bus = pd.Series(0.0, index=list(self.full_net.bus_ids))
        for g in self.external_gens:
            gen_bus[self.full_net.generator(g).bus] += a.outputs.iloc[t][g]
        load_e = np.array([load_full[b] if b in self.external_bus_set else 0.0 for b in red.eliminated])
        gen_e = np.array([gen_bus[b] for b in red.eliminated])
        load_d = red.distribute(load_e) if red.eliminated else np.zeros(red.network.n_bus)
        gen_d = red.distribute(gen_e) if red.eliminated else np.zeros(red.network.n_bus)
        ext_load, ext_gen = {}, {}
        for k, b in enumerate(red.network.bus_ids):
            own_load = load_full[b] if b in self.external_bus_set else 0.0
            ext_load[b] = own_load + load_d[k]
            ext_gen[b] = gen_bus[b] + gen_d[k]
        return ext_load, ext_gen

    def opf_problem(self, t: int, scale: float = 1.0) -> tuple[OpfProblem, np.ndarray]:
        net = self.opf_network
        a = self.allocated
        out = a.outputs.iloc[t]
        loads_full = a.bus_loads.iloc[t]
        ext_load, ext_gen = self._external_split(t)
        red = self.reduced[0]
        eliminated = set(red.eliminated)
        if set(eliminated) - self.external_bus_set:
            internal = sorted(eliminated - self.external_bus_set)
            raise StudyError(f"OPF assembly only supports eliminating external buses; {internal} are internal")

        loads = np.zeros(net.n_bus)
        fixed = np.zeros(net.n_bus)
        for k, b in enumerate(net.bus_ids):
            loads[k] = ext_load[b] if b in self.external_bus_set else loads_full[b]
        bounds, costs, available = {}, {}, {}
        prices = self.fuel_prices.frame.iloc[t]
        hq = self.hq["generator"] if self.hq else None
        lmp = self.lmp.frame.iloc[t] if self.lmp is not None else None
        for g in net.generators:
            if g.fuel is Fuel.EXTERNAL:
                continue
            if g.id in self.external_gens:
                available[g.id] = False  # represented by the area's equivalent units
            elif not g.dispatchable or g.id == hq:
                fixed[net.bus_index[g.bus]] += out[g.id]
                available[g.id] = False
            elif g.id in self.thermal_units:
                unit = self.thermal_units[g.id]
                costs[g.id] = self.unit_parameters[g.id].cost(float(prices[unit.fuel])).c1
                recs = self.unit_records.get(g.id)
                if recs and not unit.default:
                    available[g.id] = bool(out[g.id] > 0)
            elif g.fuel in (Fuel.NUCLEAR, Fuel.HYDRO):
                bounds[g.id] = (0.0, float(out[g.id]))
        for area, spec in self.external_areas:
            cap = float(spec.get("tie_capability", 0.0))
            buses = [b for b in area.buses if b in net.bus_index]
            expected = {b: ext_gen[b] for b in buses}
            total = sum(expected.values())
            for b in buses:
                gid = f"EQ_{area.label}_{b}"
                share = expected[b] / total if total > 0 else 1.0 / len(buses)
                e = expected[b]
                bounds[gid] = (max(0.0, e - cap * share), e + cap * share)
                if lmp is None or spec.get("lmp_column") not in self.lmp:
                    raise StudyError(f"external area {area.label} needs an 'lmp_column' in the LMP profile")
                costs[gid] = max(0.0, float(lmp[spec["lmp_column"]]))
        net_iface = tuple(Interface(i.name, i.members, i.limit_pos, i.limit_neg) for i in self.interfaces)
        prob = OpfProblem(net, loads, interfaces=net_iface, interface_limits=self.hourly_interface_limits(t),
                          available=available, bounds=bounds, costs=costs, fixed_injections=fixed, scale=scale)
        return prob, loads

    def run_opf(self, hours, scale: float = 1.0, jobs: int = 1, linked: bool = False):
        return hourly_opf_run(lambda t: self.opf_problem(t, scale), hours, jobs=jobs, linked=linked)

    # -------------------------------------------------------------- validate

    @cached_property
    def validation_settings(self) -> dict:
        v = self.config.get("validation", {})
        return {
            "band": float(v.get("band", 30.0)),
            "rules": {z: Rule.from_dict(r) for z, r in v.get("rules", {}).items()},
            "seasons": [Season.from_dict(n, r) for n, r in v.get("seasons", {}).items()],
            "outlier_zones": v.get("outlier_zones"),
            "scenarios": [float(s) for s in v.get("scenarios", [])],
            "scenario_hours": v.get("scenario_hours"),
        }
