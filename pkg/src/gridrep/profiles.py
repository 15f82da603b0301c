"""CSV readers for hourly profiles, sub-hourly telemetry, unit records and tables."""

from __future__ import annotations

import io
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import TextIO

import numpy as np
import pandas as pd

from .model import HourlyProfile

MAX_GAP_HOURS = 3


class ProfileError(ValueError):
    pass


def _read_csv(text: str | TextIO | pd.DataFrame) -> pd.DataFrame:
    if isinstance(text, pd.DataFrame):
        return text.copy()
    stream = io.StringIO(text) if isinstance(text, str) else text
    try:
        frame = pd.read_csv(stream, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise ProfileError("empty CSV input") from None
    frame.columns = [str(c).strip() for c in frame.columns]
    return frame


def _timestamps(frame: pd.DataFrame, column: str = "timestamp") -> pd.DatetimeIndex:
    if not len(frame.columns) or frame.columns[0] != column:
        raise ProfileError(f"first column must be {column!r}, got {list(frame.columns)[:1]}")
    try:
        stamps = pd.to_datetime(frame[column], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise ProfileError(f"unparseable timestamp: {exc}") from None
    if getattr(stamps.dt, "tz", None) is not None:
        stamps = stamps.dt.tz_convert("UTC").dt.tz_localize(None)
    return pd.DatetimeIndex(stamps)


def _check_columns(found: Sequence[str], expected: Iterable[str] | None) -> list[str]:
    if expected is None:
        return list(found)
    expected = list(expected)
    missing = [c for c in expected if c not in found]
    unknown = [c for c in found if c not in expected]
    if missing:
        raise ProfileError(f"missing column(s) {missing}")
    if unknown:
        raise ProfileError(f"unknown column(s) {unknown}")
    return expected


def _fill_gaps(frame: pd.DataFrame) -> pd.DataFrame:
    for col in frame.columns:
        missing = frame[col].isna().to_numpy()
        if not missing.any():
            continue
        if missing[0] or missing[-1]:
            raise ProfileError(f"column {col!r}: missing values at the edge of the record cannot be filled")
        # run lengths of consecutive missing hours
        edges = np.flatnonzero(np.diff(np.r_[0, missing.astype(int), 0]))
        for start, stop in zip(edges[::2], edges[1::2]):
            if stop - start > MAX_GAP_HOURS:
                raise ProfileError(
                    f"column {col!r}: gap exceeds {MAX_GAP_HOURS} hours "
                    f"({stop - start} h starting {frame.index[start]})"
                )
        frame[col] = frame[col].interpolate(method="linear", limit_area="inside")
    return frame


def parse_profile(text: str | TextIO | pd.DataFrame, expected_columns: Iterable[str] | None = None) -> HourlyProfile:
    """Read an hourly CSV whose first column is ``timestamp``.

    Missing hours and blank cells are filled by linear interpolation when a
    run is at most three hours long; longer runs raise :class:`ProfileError`.
    """
    frame = _read_csv(text)
    index = _timestamps(frame)
    values = frame.drop(columns=frame.columns[0])
    cols = _check_columns(list(values.columns), expected_columns)
    values = values[cols]
    try:
        values = values.apply(pd.to_numeric, errors="raise").astype(float)
    except ValueError as exc:
        raise ProfileError(f"non-numeric value: {exc}") from None
    values.index = index
    if len(index) == 0:
        raise ProfileError("profile has no rows")
    if not (index == index.floor("h")).all():
        raise ProfileError("timestamps must fall on the hour")
    if len(index) > 1 and not (np.diff(index.asi8) > 0).all():
        bad = int(np.flatnonzero(np.diff(index.asi8) <= 0)[0]) + 1
        raise ProfileError(f"timestamps not strictly increasing at row {bad + 1} ({index[bad]})")
    full = pd.date_range(index[0], index[-1], freq="h")
    values = values.reindex(full)
    values.index.name = "timestamp"
    return HourlyProfile(_fill_gaps(values))


def average_subhourly(records: str | TextIO | pd.DataFrame, expected_columns: Iterable[str] | None = None) -> HourlyProfile:
    """Mean of all records falling in each clock hour ``[h, h+1)``.

    Every hour between the first and last record must hold at least one
    record.
    """
    frame = _read_csv(records)
    index = _timestamps(frame)
    values = frame.drop(columns=frame.columns[0])
    cols = _check_columns(list(values.columns), expected_columns)
    values = values[cols].apply(pd.to_numeric, errors="raise").astype(float)
    if values.isna().to_numpy().any():
        raise ProfileError("sub-hourly records contain blank values")
    if len(index) == 0:
        raise ProfileError("no sub-hourly records")
    values.index = index
    hours = index.floor("h")
    means = values.groupby(hours).mean()
    full = pd.date_range(hours.min(), hours.max(), freq="h")
    empty = full.difference(means.index)
    if len(empty):
        raise ProfileError(f"empty hour {empty[0]} has no records")
    means.index = pd.DatetimeIndex(means.index, name="timestamp")
    return HourlyProfile(means.reindex(full).rename_axis("timestamp"))


def parse_daily(text: str | TextIO | pd.DataFrame, expected_columns: Iterable[str] | None = None) -> pd.DataFrame:
    """Read a series indexed by calendar day (e.g. nuclear capacity factors)."""
    frame = _read_csv(text)
    index = _timestamps(frame)
    values = frame.drop(columns=frame.columns[0])
    cols = _check_columns(list(values.columns), expected_columns)
    values = values[cols].apply(pd.to_numeric, errors="raise").astype(float)
    values.index = index.normalize()
    if values.index.has_duplicates:
        raise ProfileError("duplicate day in daily series")
    if values.isna().to_numpy().any():
        raise ProfileError("daily series contains blank values")
    return values.sort_index()


def parse_fuel_prices(text: str | TextIO | pd.DataFrame) -> pd.DataFrame:
    """Long ``timestamp, fuel, price_per_mmbtu`` CSV to a wide fuel-by-time table."""
    frame = _read_csv(text)
    index = _timestamps(frame)
    _check_columns(list(frame.columns[1:]), ["fuel", "price_per_mmbtu"])
    frame["timestamp"] = index
    price = pd.to_numeric(frame["price_per_mmbtu"], errors="raise")
    if (price < 0).any():
        raise ProfileError("negative fuel price")
    frame["price_per_mmbtu"] = price
    if frame.duplicated(["timestamp", "fuel"]).any():
        raise ProfileError("duplicate (timestamp, fuel) price entry")
    wide = frame.pivot(index="timestamp", columns="fuel", values="price_per_mmbtu").sort_index()
    wide.columns.name = None
    return wide


def hourly_fuel_prices(prices: pd.DataFrame, index: pd.DatetimeIndex) -> HourlyProfile:
    """Hold each fuel's most recent published price over ``index``."""
    if len(prices) == 0 or index[0] < prices.index[0]:
        raise ProfileError("fuel prices start after the requested hours")
    filled = prices.ffill().reindex(prices.index.union(index)).ffill().reindex(index)
    return HourlyProfile(filled.rename_axis("timestamp"))


@dataclass(frozen=True)
class UnitHourlyRecord:
    unit_id: str
    timestamp: pd.Timestamp
    heat_input: float  # MMBtu
    power_output: float  # MWh

    def __post_init__(self):
        if self.heat_input < 0 or self.power_output < 0:
            raise ProfileError(f"unit {self.unit_id} at {self.timestamp}: negative heat input or output")


def parse_unit_records(text: str | TextIO | pd.DataFrame) -> dict[str, list[UnitHourlyRecord]]:
    """Read ``unit_id, timestamp, heat_input, power_output`` rows, grouped by unit."""
    frame = _read_csv(text)
    _check_columns(list(frame.columns), ["unit_id", "timestamp", "heat_input", "power_output"])
    stamps = pd.to_datetime(frame["timestamp"], format="ISO8601")
    out: dict[str, list[UnitHourlyRecord]] = {}
    for uid, t, h, p in zip(frame["unit_id"].astype(str), stamps, frame["heat_input"], frame["power_output"]):
        out.setdefault(uid, []).append(UnitHourlyRecord(uid, t, float(h), float(p)))
    for recs in out.values():
        recs.sort(key=lambda r: r.timestamp)
    return out


def parse_heat_rate_table(text: str | TextIO | pd.DataFrame) -> dict[tuple[str, str], float]:
    frame = _read_csv(text)
    _check_columns(list(frame.columns), ["unit_type", "fuel", "heat_rate_mmbtu_per_mwh"])
    table = {}
    for ut, fuel, hr in zip(frame["unit_type"], frame["fuel"], frame["heat_rate_mmbtu_per_mwh"]):
        key = (str(ut).strip(), str(fuel).strip())
        if key in table:
            raise ProfileError(f"duplicate heat-rate entry {key}")
        table[key] = float(hr)
    return table
