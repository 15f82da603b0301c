"""Split fleet and zonal hourly totals into per-unit and per-bus values."""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class AllocationError(ValueError):
    pass


@dataclass(frozen=True)
class Clamp:
    timestamp: pd.Timestamp
    unit: str
    raw: float
    value: float

    def __str__(self) -> str:
        return f"{self.timestamp} {self.unit}: {self.raw:.6g} MW clamped to {self.value:.6g} MW"


@dataclass(frozen=True)
class HydroConfig:
    """Roles in the hydro split.

    ``large_share`` of each hour's fleet total goes to the two large plants,
    the rest is shared by all other units in proportion to capacity.
    """

    stl_id: str
    rmn_id: str
    stl_monthly_cf: tuple[float, ...]
    large_share: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "stl_monthly_cf", tuple(float(v) for v in self.stl_monthly_cf))
        if self.stl_id == self.rmn_id:
            raise AllocationError("STL and RMN must be different generators")
        if len(self.stl_monthly_cf) != 12:
            raise AllocationError("need 12 monthly capacity factors")
        if not all(0 <= v <= 1 for v in self.stl_monthly_cf):
            raise AllocationError("monthly capacity factors must lie in [0, 1]")
        if not 0 <= self.large_share <= 1:
            raise AllocationError("large_share must lie in [0, 1]")


@dataclass(frozen=True)
class ExternalArea:
    label: str
    buses: tuple[int, ...]
    baseline_load: Mapping[int, float]
    baseline_gen: Mapping[str, float]  # keyed by generator id
    tie_flow_column: str
    load_column: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "baseline_load", dict(self.baseline_load))
        object.__setattr__(self, "baseline_gen", dict(self.baseline_gen))


@dataclass(frozen=True)
class Rebalanced:
    loads: dict[int, float]
    gens: dict[str, float]
    alpha: float
    required_generation: float
    load_total: float
    tie_flow: float


@dataclass
class HydroAllocation:
    outputs: pd.DataFrame
    clamps: list[Clamp] = field(default_factory=list)


def _sum_exact(values: list[float], target: float) -> list[float]:
    """Nudge the last entry by ulps until ``math.fsum(values) == target``.

    When the exact sum sits on a rounding tie, stepping the last entry only
    hops between the two neighbours of ``target``; one ulp on the finest
    other entry breaks the tie.
    """
    if not values:
        return values
    others = sorted(range(len(values) - 1), key=lambda k: abs(values[k]))
    for attempt in range(len(others) + 1):
        for _ in range(64):
            s = math.fsum(values)
            if s == target:
                return values
            values[-1] = math.nextafter(values[-1], math.inf if s < target else -math.inf)
        if attempt < len(others):
            k = others[attempt]
            values[k] = math.nextafter(values[k], math.inf)
    return values


def allocate_nuclear(capacity: float, cf: pd.Series, index: pd.DatetimeIndex | None = None) -> pd.Series:
    """Hourly output ``capacity * cf``; a daily ``cf`` is held over ``index``."""
    values = np.asarray(cf, dtype=float)
    if np.any((values < 0) | (values > 1)) or np.any(np.isnan(values)):
        raise AllocationError("capacity factor outside [0, 1]")
    if index is not None:
        days = pd.DatetimeIndex(cf.index).normalize()
        lookup = pd.Series(values, index=days)
        wanted = index.normalize()
        missing = wanted.difference(days)
        if len(missing):
            raise AllocationError(f"no capacity factor for day {missing[0].date()}")
        return pd.Series(capacity * lookup.loc[wanted].to_numpy(), index=index, name=cf.name)
    return pd.Series(capacity * values, index=cf.index, name=cf.name)


def allocate_proportional(total: pd.Series, capacities: Mapping[str, float]) -> pd.DataFrame:
    """Each unit's share of the hourly total follows its share of capacity."""
    caps = pd.Series(capacities, dtype=float)
    cap_total = caps.sum()
    if not cap_total > 0:
        raise AllocationError("total capacity must be positive")
    weights = caps / cap_total
    tot = np.asarray(total, dtype=float)
    return pd.DataFrame(np.outer(tot, weights.to_numpy()), index=total.index, columns=list(caps.index))


def allocate_hydro(
    total: pd.Series, cfg: HydroConfig, capacities: Mapping[str, float]
) -> HydroAllocation:
    """Split the fleet hydro total into STL, RMN and the small plants."""
    if cfg.stl_id not in capacities or cfg.rmn_id not in capacities:
        raise AllocationError("STL and RMN capacities are required")
    tot = np.asarray(total, dtype=float)
    if np.any(tot < 0):
        raise AllocationError("hydro total must be nonnegative")
    small = {k: float(v) for k, v in capacities.items() if k not in (cfg.stl_id, cfg.rmn_id)}
    small_cap = sum(small.values())
    small_share = 1.0 - cfg.large_share
    if small_cap <= 0 and small_share > 0 and np.any(tot > 0):
        raise AllocationError("small hydro fleet has no capacity but carries a nonzero share")

    months = pd.DatetimeIndex(total.index).month.to_numpy()
    cf = np.array(cfg.stl_monthly_cf)[months - 1]
    raw = {cfg.stl_id: cf * capacities[cfg.stl_id]}
    raw[cfg.rmn_id] = cfg.large_share * tot - raw[cfg.stl_id]
    for uid, cap in small.items():
        raw[uid] = small_share * tot * (cap / small_cap) if small_cap > 0 else np.zeros_like(tot)

    columns, clamps = {}, []
    for uid, series in raw.items():
        cap = float(capacities[uid])
        clipped = np.clip(series, 0.0, cap)
        for k in np.flatnonzero(clipped != series):
            clamps.append(Clamp(total.index[k], uid, float(series[k]), float(clipped[k])))
        columns[uid] = clipped
    for c in clamps:
        logger.warning("hydro allocation: %s", c)
    return HydroAllocation(pd.DataFrame(columns, index=total.index), clamps)


def allocate_zone_load(
    zone_total: float, buses_in_zone: Sequence[int], baseline_loads: Mapping[int, float]
) -> dict[int, float]:
    """Spread a zonal load over buses in proportion to their baseline load.

    The last bus absorbs rounding so the allocation sums to ``zone_total``
    exactly (as a correctly rounded sum).
    """
    if not buses_in_zone:
        raise AllocationError("zone has no buses")
    base = [float(baseline_loads[b]) for b in buses_in_zone]
    denom = math.fsum(base)
    if denom <= 0:
        if zone_total == 0:
            return {b: 0.0 for b in buses_in_zone}
        raise AllocationError("zone baseline load is zero but the zone carries load")
    values = [zone_total * w / denom for w in base[:-1]]
    values.append(zone_total - math.fsum(values))
    values = _sum_exact(values, zone_total)
    return dict(zip(buses_in_zone, values))


def rebalance_external(area: ExternalArea, load_total: float, tie_flow: float) -> Rebalanced:
    """Scale an external area's loads to ``load_total`` and its generation
    so that generation minus load equals the tie flow into the study region."""
    base_load = math.fsum(area.baseline_load[b] for b in area.buses if b in area.baseline_load)
    base_gen = math.fsum(area.baseline_gen.values())
    if not base_gen > 0:
        raise AllocationError(f"area {area.label}: baseline generation must be positive")
    load_buses = [b for b in area.buses if b in area.baseline_load]
    if base_load > 0:
        loads = [area.baseline_load[b] * (load_total / base_load) for b in load_buses[:-1]]
        loads.append(load_total - math.fsum(loads))
        loads = _sum_exact(loads, load_total)
    elif load_total == 0:
        loads = [0.0] * len(load_buses)
    else:
        raise AllocationError(f"area {area.label}: baseline load is zero but the area carries load")
    required = load_total + tie_flow
    alpha = required / base_gen
    if alpha < 0:
        raise AllocationError(
            f"area {area.label}: export {-tie_flow} MW exceeds area load {load_total} MW (alpha={alpha:.4g})"
        )
    gen_ids = list(area.baseline_gen)
    gens = [alpha * area.baseline_gen[g] for g in gen_ids[:-1]]
    gens.append(required - math.fsum(gens))
    gens = _sum_exact(gens, required)
    return Rebalanced(dict(zip(load_buses, loads)), dict(zip(gen_ids, gens)), alpha, required, load_total, tie_flow)


def hq_injection(tie_flow: pd.Series | float) -> tuple[pd.Series | float, list[str]]:
    """Output of the import proxy generator equals the recorded tie flow.

    Negative values (exports) are passed through and reported.
    """
    notes = []
    if isinstance(tie_flow, pd.Series):
        for t, v in tie_flow[tie_flow < 0].items():
            notes.append(f"{t}: negative import {v} MW (export)")
        return tie_flow.astype(float).copy(), notes
    if tie_flow < 0:
        notes.append(f"negative import {tie_flow} MW (export)")
    return float(tie_flow), notes


def hourly_ramp(capacity: float, ten_minute_fraction: float) -> float:
    """Hourly ramp from a ten-minute ramp expressed as a share of capacity."""
    return min(6.0 * ten_minute_fraction * capacity, capacity)


def draw_marginal_costs(ids: Sequence[str], low: float, high: float, rng: np.random.Generator) -> dict[str, float]:
    """Uniform random marginal costs, drawn in sorted id order for reproducibility."""
    ids = sorted(ids)
    return dict(zip(ids, rng.uniform(low, high, size=len(ids)).tolist()))
