"""Comparison of simulated against recorded prices: correlation, filtering, outliers."""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .dcopf import OpfProblem, OpfSolution, solve_dcopf


class ValidationError(ValueError):
    pass


def pearson(x, y) -> float:
    """Product-moment correlation of two equal-length series."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValidationError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValidationError("need at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    if sxx == 0 or syy == 0:
        raise ValidationError("zero variance series")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class Rule:
    """Bounds outside which a recorded point is removed (``None`` = no bound)."""

    low: float | None = None
    high: float | None = None

    @classmethod
    def from_dict(cls, d: Mapping) -> Rule:
        extra = set(d) - {"low", "high"}
        if extra:
            raise ValidationError(f"unknown rule keys {sorted(extra)}")
        return cls(d.get("low"), d.get("high"))

    def reason(self, value: float) -> str | None:
        if self.low is not None and value < self.low:
            return f"below {self.low}"
        if self.high is not None and value > self.high:
            return f"above {self.high}"
        return None


@dataclass(frozen=True)
class Removed:
    index: object
    zone: str
    value: float
    reason: str


def filter_extremes(
    series: Mapping[str, pd.Series] | pd.DataFrame, rules: Mapping[str, Rule]
) -> tuple[dict[str, pd.Series], list[Removed]]:
    """Drop points that break a zone's rule; every removal is logged."""
    out, log = {}, []
    for zone, s in dict(series).items():
        s = pd.Series(s)
        rule = rules.get(zone)
        if rule is None:
            out[zone] = s.copy()
            continue
        keep = np.ones(len(s), dtype=bool)
        for k, (idx, val) in enumerate(s.items()):
            why = rule.reason(float(val))
            if why is not None:
                keep[k] = False
                log.append(Removed(idx, zone, float(val), why))
        out[zone] = s[keep].copy()
    return out, log


@dataclass(frozen=True)
class Outlier:
    hour: object
    zone: str
    real: float
    sim: float


def find_outliers(real: pd.Series, sim: pd.Series, band: float, zone: str = "") -> list[Outlier]:
    """Hours where the simulated price is more than ``band`` from the recorded one."""
    if not band > 0:
        raise ValidationError("outlier band must be positive")
    real, sim = pd.Series(real), pd.Series(sim)
    real, sim = real.align(sim, join="inner")
    gap = (sim - real).abs()
    return [Outlier(h, zone, float(real[h]), float(sim[h])) for h in gap.index[gap.to_numpy() > band]]


@dataclass(frozen=True)
class Season:
    name: str
    ranges: tuple[tuple[pd.Timestamp, pd.Timestamp], ...]  # inclusive

    @classmethod
    def from_dict(cls, name: str, ranges: Sequence[Sequence[str]]) -> Season:
        return cls(name, tuple((pd.Timestamp(a), pd.Timestamp(b)) for a, b in ranges))

    def mask(self, index: pd.DatetimeIndex) -> np.ndarray:
        m = np.zeros(len(index), dtype=bool)
        for a, b in self.ranges:
            m |= (index >= a) & (index <= b)
        return m


@dataclass
class ScenarioResult:
    scale: float
    zonal_lmp: pd.DataFrame
    lmp_change: pd.DataFrame  # scaled minus base
    residual_base: dict[str, float]  # mean |sim - real|
    residual_scaled: dict[str, float]


@dataclass
class ComparisonReport:
    correlations: dict[tuple[str, str], float]  # (season, zone) -> r
    removed: list[Removed]
    outliers: list[Outlier]
    scenarios: dict[float, ScenarioResult] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "correlations": [
                {"season": s, "zone": z, "pearson": (None if math.isnan(r) else r)}
                for (s, z), r in sorted(self.correlations.items())
            ],
            "removed": [{"index": str(r.index), "zone": r.zone, "value": r.value, "reason": r.reason}
                        for r in self.removed],
            "n_outliers": len(self.outliers),
            "outliers_by_zone": _count_by_zone(self.outliers),
            "scenarios": {
                str(k): {"residual_base": v.residual_base, "residual_scaled": v.residual_scaled}
                for k, v in sorted(self.scenarios.items())
            },
            "skipped": list(self.skipped),
        }


def _count_by_zone(outliers: Iterable[Outlier]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for o in outliers:
        counts[o.zone] = counts.get(o.zone, 0) + 1
    return dict(sorted(counts.items()))


def compare_lmps(
    real: pd.DataFrame,
    sim: pd.DataFrame,
    rules: Mapping[str, Rule] | None = None,
    band: float = 30.0,
    seasons: Sequence[Season] | None = None,
    outlier_zones: Sequence[str] | None = None,
) -> ComparisonReport:
    """Per-season, per-zone correlation after filtering, plus price-band outliers."""
    zones = [z for z in sim.columns if z in real.columns]
    real, sim = real[zones].align(sim[zones], join="inner", axis=0)
    filtered, removed = filter_extremes(real, rules or {})
    seasons = list(seasons) if seasons else [Season("all", ((real.index.min(), real.index.max()),))]
    corr, skipped = {}, []
    for season in seasons:
        for z in zones:
            r = filtered[z]
            r = r[season.mask(pd.DatetimeIndex(r.index))]
            s = sim.loc[r.index, z]
            try:
                corr[(season.name, z)] = pearson(r.to_numpy(), s.to_numpy())
            except ValidationError as exc:
                corr[(season.name, z)] = math.nan
                skipped.append(f"{season.name}/{z}: {exc}")
    outliers = []
    for z in outlier_zones if outlier_zones is not None else zones:
        outliers += find_outliers(filtered[z], sim.loc[filtered[z].index, z], band, z)
    return ComparisonReport(corr, removed, outliers, {}, skipped)


@dataclass
class LmpRun:
    """Base OPF run kept for scenario re-solves."""

    build: Callable[[object], OpfProblem | tuple[OpfProblem, object]]
    solutions: dict[object, OpfSolution]
    reference: pd.DataFrame | None = None

    def zonal_frame(self, solutions: Mapping[object, OpfSolution] | None = None) -> pd.DataFrame:
        sols = self.solutions if solutions is None else solutions
        return pd.DataFrame({h: s.zonal_lmp for h, s in sols.items()}).T.sort_index()


def scenario_rescale(run: LmpRun, scale: float, hours: Iterable | None = None) -> ScenarioResult:
    """Re-solve hours with every marginal cost multiplied by ``scale``."""
    hours = list(run.solutions) if hours is None else list(hours)
    sols = {}
    for h in hours:
        out = run.build(h)
        prob, weights = out if isinstance(out, tuple) else (out, None)
        sols[h] = solve_dcopf(replace(prob, scale=prob.scale * scale), weights)
    base = run.zonal_frame({h: run.solutions[h] for h in hours})
    scaled = run.zonal_frame(sols)
    res_base, res_scaled = {}, {}
    if run.reference is not None:
        for z in scaled.columns:
            if z not in run.reference.columns:
                continue
            ref = run.reference.loc[scaled.index, z]
            res_base[z] = float((base[z] - ref).abs().mean())
            res_scaled[z] = float((scaled[z] - ref).abs().mean())
    return ScenarioResult(scale, scaled, scaled - base, res_base, res_scaled)


def write_report(report: ComparisonReport, outdir, sim: pd.DataFrame | None = None,
                 real: pd.DataFrame | None = None) -> list[Path]:
    """CSV tables, a JSON summary and optional per-zone scatter files."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    rows = [{"season": s, "zone": z, "pearson": r} for (s, z), r in sorted(report.correlations.items())]
    p = out / "correlations.csv"
    pd.DataFrame(rows, columns=["season", "zone", "pearson"]).to_csv(p, index=False)
    written.append(p)
    p = out / "removed_points.csv"
    pd.DataFrame([vars(r) for r in report.removed], columns=["index", "zone", "value", "reason"]).to_csv(p, index=False)
    written.append(p)
    p = out / "outliers.csv"
    pd.DataFrame([vars(o) for o in report.outliers], columns=["hour", "zone", "real", "sim"]).to_csv(p, index=False)
    written.append(p)
    for k, sc in sorted(report.scenarios.items()):
        p = out / f"scenario_scale_{k:g}.csv"
        sc.zonal_lmp.rename_axis("timestamp").to_csv(p)
        written.append(p)
    if sim is not None and real is not None:
        for z in sim.columns:
            if z in real.columns:
                p = out / f"scatter_{z}.csv"
                pd.DataFrame({"real": real[z], "sim": sim[z]}).dropna().rename_axis("timestamp").to_csv(p)
                written.append(p)
    p = out / "summary.json"
    p.write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    written.append(p)
    return written
