"""DC power flow, interface flows and the interface percentage-error metric."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.sparse.linalg as spla

from .model import Interface, Network, bus_vector

RESIDUAL_TOL = 1e-10  # per unit


class PowerFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class PfSolution:
    bus_ids: tuple[int, ...]
    branch_ids: tuple[int, ...]
    angles: np.ndarray  # radians, slack at zero
    branch_flows: np.ndarray  # MW, positive from -> to
    slack_injection: float  # MW
    injections: np.ndarray  # MW per bus after HVDC schedules, slack as solved
    residual: float  # max-norm of the reduced system residual, per unit

    def flow(self, branch_id: int) -> float:
        return float(self.branch_flows[self.branch_ids.index(branch_id)])

    def angle(self, bus_id: int) -> float:
        return float(self.angles[self.bus_ids.index(bus_id)])

    def flows_by_id(self) -> dict[int, float]:
        return dict(zip(self.branch_ids, self.branch_flows.tolist()))


def _schedule_vector(net: Network, hvdc_schedules: Mapping | None) -> tuple[np.ndarray, np.ndarray]:
    """Bus injections implied by HVDC schedules and the per-branch flow array."""
    sched = dict(hvdc_schedules or {})
    by_name = {br.name: br.id for br in net.hvdc_branches if br.name}
    resolved: dict[int, float] = {}
    for key, mw in sched.items():
        bid = by_name.get(key, key)
        if bid not in net.branch_index or not net.branch(bid).is_hvdc:
            raise PowerFlowError(f"schedule given for {key!r}, which is not an HVDC proxy")
        resolved[bid] = float(mw)
    inj = np.zeros(net.n_bus)
    flows = np.zeros(len(net.branches))
    for br in net.hvdc_branches:
        if br.id not in resolved:
            raise PowerFlowError(f"missing schedule for HVDC proxy {br.id} {br.name}".rstrip())
        f = resolved[br.id]
        inj[net.bus_index[br.from_bus]] -= f
        inj[net.bus_index[br.to_bus]] += f
        flows[net.branch_index[br.id]] = f
    return inj, flows


class DcPowerFlow:
    """DC power flow on a fixed topology.

    The reduced susceptance matrix is factorized once; :meth:`solve` can then
    be called for any number of injection vectors and is safe to call from
    several threads.
    """

    def __init__(self, net: Network):
        self.net = net
        self.slack_pos = net.bus_index[net.slack]
        n = net.n_bus
        self.keep = np.array([i for i in range(n) if i != self.slack_pos], dtype=int)
        self.B = net.susceptance_matrix().tocsc()
        self._reduced = self.B[self.keep][:, self.keep].tocsc()
        if n > 1:
            try:
                self._lu = spla.splu(self._reduced)
            except RuntimeError as exc:
                raise PowerFlowError(f"susceptance matrix is singular ({exc}); is the network connected?") from None
            diag = np.abs(self._lu.U.diagonal())
            if diag.size and diag.min() <= 1e-14 * max(diag.max(), 1.0):
                raise PowerFlowError("susceptance matrix is singular; is the network connected?")
        self._ac = [(net.branch_index[br.id], net.bus_index[br.from_bus], net.bus_index[br.to_bus], br.reactance)
                    for br in net.ac_branches]

    def solve(self, injections, hvdc_schedules: Mapping | None = None) -> PfSolution:
        net = self.net
        p = bus_vector(net, injections).astype(float).copy()
        dc_inj, flows = _schedule_vector(net, hvdc_schedules)
        p += dc_inj
        p_pu = p / net.base_mva
        theta = np.zeros(net.n_bus)
        if net.n_bus > 1:
            theta[self.keep] = self._lu.solve(p_pu[self.keep])
        mismatch = self.B @ theta
        residual = float(np.max(np.abs(mismatch[self.keep] - p_pu[self.keep]))) if net.n_bus > 1 else 0.0
        if residual > RESIDUAL_TOL * max(1.0, float(np.max(np.abs(p_pu)))):
            raise PowerFlowError(f"DC power flow residual {residual:.3e} pu exceeds tolerance")
        for k, f, t, x in self._ac:
            flows[k] = net.base_mva * (theta[f] - theta[t]) / x
        solved = p.copy()
        solved[self.slack_pos] = mismatch[self.slack_pos] * net.base_mva
        return PfSolution(
            bus_ids=net.bus_ids,
            branch_ids=tuple(br.id for br in net.branches),
            angles=theta,
            branch_flows=flows,
            slack_injection=float(solved[self.slack_pos]),
            injections=solved,
            residual=residual,
        )


def solve_dcpf(net: Network, injections, hvdc_schedules: Mapping | None = None) -> PfSolution:
    return DcPowerFlow(net).solve(injections, hvdc_schedules)


def interface_flow(sol: PfSolution, iface: Interface) -> float:
    """Signed sum of member branch flows in MW."""
    total = 0.0
    for bid, sign in iface.members:
        total += sign * sol.flow(bid)
    return total


def interface_error(real: float, sim: float, rating: float) -> float:
    """Recorded minus simulated flow as a fraction of the interface rating."""
    if not rating > 0:
        raise ValueError(f"interface rating must be positive, got {rating}")
    return (real - sim) / rating


def interface_rating(net: Network, iface: Interface) -> float:
    """Sum of member branch ratings, used as the interface MVA rating."""
    return float(sum(net.branch(bid).rating for bid, _ in iface.members))


@dataclass(frozen=True)
class ErrorStats:
    n: int
    median: float
    q1: float
    q3: float
    p2_5: float
    p97_5: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[tuple[object, float], ...]

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    @property
    def iqr_within_10pct(self) -> bool:
        return self.q1 >= -0.10 and self.q3 <= 0.10

    @property
    def interval95_within_15pct(self) -> bool:
        return self.p2_5 >= -0.15 and self.p97_5 <= 0.15

    def as_dict(self) -> dict:
        return {
            "n": self.n, "median": self.median, "q1": self.q1, "q3": self.q3, "iqr": self.iqr,
            "p2_5": self.p2_5, "p97_5": self.p97_5,
            "whisker_low": self.whisker_low, "whisker_high": self.whisker_high,
            "n_outliers": len(self.outliers),
            "iqr_within_10pct": self.iqr_within_10pct,
            "interval95_within_15pct": self.interval95_within_15pct,
        }


def error_summary(errors: pd.DataFrame | Mapping[str, pd.Series]) -> dict[str, ErrorStats]:
    """Box-plot statistics per interface (percentiles by linear interpolation)."""
    frame = pd.DataFrame(errors)
    out = {}
    for name in frame.columns:
        s = frame[name].dropna()
        if s.empty:
            raise ValueError(f"no error samples for interface {name!r}")
        v = s.to_numpy(dtype=float)
        q1, med, q3, lo, hi = np.percentile(v, [25, 50, 75, 2.5, 97.5])
        iqr = q3 - q1
        wl, wh = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        outl = tuple((idx, float(val)) for idx, val in s.items() if val < wl or val > wh)
        out[name] = ErrorStats(len(v), float(med), float(q1), float(q3), float(lo), float(hi), float(wl), float(wh), outl)
    return out
