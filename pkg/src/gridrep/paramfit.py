"""Thermal unit parameters estimated from hourly heat-input and output records."""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .model import CostCurve
from .profiles import UnitHourlyRecord

POOR_FIT_R2 = 0.9


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class HeatRateFit:
    """Heat input (MMBtu/h) as ``slope * P + intercept``."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int

    @property
    def poor_fit(self) -> bool:
        return self.n_points > 0 and not self.r_squared >= POOR_FIT_R2


@dataclass(frozen=True)
class UnitParameters:
    p_max: float
    p_min: float
    ramp_hourly: float
    heat_rate: HeatRateFit
    source: str = "fitted"

    def cost(self, fuel_price: float) -> CostCurve:
        return make_cost_curve(self.heat_rate, fuel_price)


def _arrays(records: Sequence[UnitHourlyRecord]) -> tuple[np.ndarray, np.ndarray]:
    p = np.array([r.power_output for r in records], dtype=float)
    h = np.array([r.heat_input for r in records], dtype=float)
    return p, h


def fit_heat_rate(records: Sequence[UnitHourlyRecord]) -> HeatRateFit:
    """Least-squares line of heat input on power output over operating hours."""
    p, h = _arrays(records)
    running = p > 0
    p, h = p[running], h[running]
    if p.size < 2:
        raise FitError(f"need at least 2 records with positive output, got {p.size}")
    if np.ptp(p) == 0:
        raise FitError("all positive outputs are equal; heat-rate slope is undetermined")
    design = np.column_stack([p, np.ones_like(p)])
    (slope, intercept), *_ = np.linalg.lstsq(design, h, rcond=None)
    resid = h - design @ np.array([slope, intercept])
    ss_tot = float(np.sum((h - h.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else math.nan
    return HeatRateFit(float(slope), float(intercept), r2, int(p.size))


def extract_limits(records: Sequence[UnitHourlyRecord]) -> tuple[float, float]:
    """``(p_max, p_min)``: the largest output and the nearest-rank 5th percentile
    of positive outputs."""
    p, _ = _arrays(records)
    p = np.sort(p[p > 0])
    if p.size == 0:
        raise FitError("no records with positive output")
    rank = max(1, math.ceil(0.05 * p.size))
    return float(p[-1]), float(p[rank - 1])


def extract_ramp(records: Sequence[UnitHourlyRecord]) -> float:
    """Largest hour-to-hour output change.

    Pairs whose second hour has zero output are ignored when the change is
    downward, so shutdowns do not count as ramping.
    """
    if len(records) < 2:
        raise FitError("need at least two records to measure ramping")
    stamps = pd.DatetimeIndex([r.timestamp for r in records])
    p, _ = _arrays(records)
    order = np.argsort(stamps.asi8, kind="stable")
    stamps, p = stamps[order], p[order]
    consecutive = np.diff(stamps.asi8) == pd.Timedelta(hours=1).value
    if not consecutive.any():
        raise FitError("no consecutive-hour record pairs")
    delta = np.diff(p)
    shutdown = (delta < 0) & (p[1:] == 0)
    usable = consecutive & ~shutdown
    if not usable.any():
        return 0.0
    return float(np.max(np.abs(delta[usable])))


def make_cost_curve(fit: HeatRateFit, fuel_price: float) -> CostCurve:
    if fuel_price < 0:
        raise FitError(f"negative fuel price {fuel_price}")
    return CostCurve(c1=fit.slope * fuel_price, c0=fit.intercept * fuel_price)


def fit_unit(records: Sequence[UnitHourlyRecord]) -> UnitParameters:
    p_max, p_min = extract_limits(records)
    return UnitParameters(p_max, p_min, extract_ramp(records), fit_heat_rate(records))


def default_small_unit(
    nameplate: float, unit_type: str, fuel: str, heat_rates: Mapping[tuple[str, str], float]
) -> UnitParameters:
    """Parameters for a unit without usable telemetry.

    Full nameplate range, one-hour ramp to full output, and a flat standard
    heat rate looked up by ``(unit_type, fuel)``.
    """
    if not nameplate > 0:
        raise FitError(f"nameplate must be positive, got {nameplate}")
    try:
        rate = heat_rates[(unit_type, fuel)]
    except KeyError:
        raise FitError(f"no standard heat rate for unit type {unit_type!r} burning {fuel!r}") from None
    fit = HeatRateFit(slope=float(rate), intercept=0.0, r_squared=math.nan, n_points=0)
    return UnitParameters(float(nameplate), 0.0, float(nameplate), fit, source="default")
