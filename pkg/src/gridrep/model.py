"""Immutable network, generator, interface and time-series types."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


class BusKind(str, Enum):
    PQ = "PQ"
    PV = "PV"
    SLACK = "slack"


class BranchKind(str, Enum):
    PHYSICAL = "physical-AC"
    EQUIVALENT = "equivalent"
    HVDC = "hvdc-proxy"
    ADDED = "added-AC"


class Fuel(str, Enum):
    NUCLEAR = "nuclear"
    HYDRO = "hydro"
    WIND = "wind"
    OTHER_RENEWABLE = "other-renewable"
    GAS = "gas"
    OIL = "oil"
    COAL = "coal"
    DUAL_FUEL = "dual-fuel"
    EXTERNAL = "external-equivalent"


THERMAL_FUELS = frozenset({Fuel.GAS, Fuel.OIL, Fuel.COAL, Fuel.DUAL_FUEL})


@dataclass(frozen=True)
class Bus:
    id: int
    zone: str
    kind: BusKind = BusKind.PQ
    base_load: float = 0.0
    lat: float | None = None
    lon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", BusKind(self.kind))


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    reactance: float
    rating: float = math.inf
    in_service: bool = True
    kind: BranchKind = BranchKind.PHYSICAL
    resistance: float = 0.0  # carried through files, unused by the DC solvers
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", BranchKind(self.kind))

    @property
    def is_hvdc(self) -> bool:
        return self.kind is BranchKind.HVDC

    @property
    def susceptance(self) -> float:
        return 1.0 / self.reactance


@dataclass(frozen=True)
class CostCurve:
    """Linear cost ``c0 + c1 * P`` in $/h."""

    c1: float = 0.0
    c0: float = 0.0

    def __call__(self, p: float) -> float:
        return self.c0 + self.c1 * p

    def scaled(self, k: float) -> CostCurve:
        return CostCurve(self.c1 * k, self.c0 * k)


@dataclass(frozen=True)
class Generator:
    id: str
    bus: int
    fuel: Fuel
    p_max: float
    p_min: float = 0.0
    ramp_hourly: float = math.inf
    cost: CostCurve = field(default_factory=CostCurve)
    dispatchable: bool = True

    def __post_init__(self):
        object.__setattr__(self, "fuel", Fuel(self.fuel))


@dataclass(frozen=True)
class Interface:
    """Signed set of branches whose aggregate flow is monitored."""

    name: str
    members: tuple[tuple[int, int], ...]
    limit_pos: float = math.inf
    limit_neg: float = -math.inf

    def __post_init__(self):
        object.__setattr__(self, "members", tuple((int(b), int(s)) for b, s in self.members))


@dataclass(frozen=True)
class Network:
    """A DC network case. Collections are stored sorted by id."""

    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...] = ()
    generators: tuple[Generator, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(sorted(self.buses, key=lambda b: b.id)))
        object.__setattr__(self, "branches", tuple(sorted(self.branches, key=lambda b: b.id)))
        object.__setattr__(self, "generators", tuple(sorted(self.generators, key=lambda g: g.id)))

    @cached_property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b: i for i, b in enumerate(self.bus_ids)}

    @cached_property
    def branch_index(self) -> dict[int, int]:
        return {br.id: i for i, br in enumerate(self.branches)}

    @cached_property
    def gen_index(self) -> dict[str, int]:
        return {g.id: i for i, g in enumerate(self.generators)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @cached_property
    def zones(self) -> tuple[str, ...]:
        return tuple(sorted({b.zone for b in self.buses}))

    @cached_property
    def slack(self) -> int:
        slacks = [b.id for b in self.buses if b.kind is BusKind.SLACK]
        if len(slacks) != 1:
            raise ValueError(f"network has {len(slacks)} slack buses, expected 1")
        return slacks[0]

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.bus_index[bus_id]]

    def branch(self, branch_id: int) -> Branch:
        return self.branches[self.branch_index[branch_id]]

    def generator(self, gen_id: str) -> Generator:
        return self.generators[self.gen_index[gen_id]]

    def zone_buses(self, zone: str) -> list[int]:
        return [b.id for b in self.buses if b.zone == zone]

    @property
    def ac_branches(self) -> list[Branch]:
        """In-service impedance branches (everything except HVDC proxies)."""
        return [br for br in self.branches if br.in_service and not br.is_hvdc]

    @property
    def hvdc_branches(self) -> list[Branch]:
        return [br for br in self.branches if br.in_service and br.is_hvdc]

    def base_loads(self) -> np.ndarray:
        return np.array([b.base_load for b in self.buses], dtype=float)

    def susceptance_matrix(self) -> sp.csr_matrix:
        """Bus susceptance matrix in per unit (a weighted graph Laplacian)."""
        idx = self.bus_index
        rows, cols, vals = [], [], []
        for br in self.ac_branches:
            f, t, b = idx[br.from_bus], idx[br.to_bus], 1.0 / br.reactance
            rows += [f, t, f, t]
            cols += [f, t, t, f]
            vals += [b, b, -b, -b]
        n = self.n_bus
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def incidence(self, branches: Iterable[Branch] | None = None) -> sp.csr_matrix:
        """Branch-bus incidence, +1 at from bus and -1 at to bus."""
        branches = self.ac_branches if branches is None else list(branches)
        idx = self.bus_index
        rows, cols, vals = [], [], []
        for k, br in enumerate(branches):
            rows += [k, k]
            cols += [idx[br.from_bus], idx[br.to_bus]]
            vals += [1.0, -1.0]
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(branches), self.n_bus))

    def with_(self, **changes) -> Network:
        return replace(self, **changes)


def is_connected(net: Network) -> bool:
    n = net.n_bus
    if n <= 1:
        return True
    idx = net.bus_index
    brs = [br for br in net.ac_branches if br.from_bus in idx and br.to_bus in idx]
    rows = [idx[br.from_bus] for br in brs]
    cols = [idx[br.to_bus] for br in brs]
    graph = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, _ = connected_components(graph, directed=False)
    return ncomp == 1


def validate_network(net: Network) -> list[str]:
    """Return one message per violated invariant; empty when the case is valid."""
    problems: list[str] = []
    seen: set[int] = set()
    for b in net.buses:
        if b.id in seen:
            problems.append(f"bus {b.id}: duplicate id")
        seen.add(b.id)
        if not b.base_load >= 0:
            problems.append(f"bus {b.id}: negative base_load {b.base_load}")
    n_slack = sum(b.kind is BusKind.SLACK for b in net.buses)
    if n_slack != 1:
        problems.append(f"network: {n_slack} slack buses, expected exactly one")

    branch_ids: set[int] = set()
    for br in net.branches:
        tag = f"branch {br.id}"
        if br.id in branch_ids:
            problems.append(f"{tag}: duplicate id")
        branch_ids.add(br.id)
        if br.from_bus == br.to_bus:
            problems.append(f"{tag}: from_bus equals to_bus")
        for end in (br.from_bus, br.to_bus):
            if end not in seen:
                problems.append(f"{tag}: unknown bus {end}")
        if not br.is_hvdc and not br.reactance > 0:
            problems.append(f"{tag}: nonpositive reactance {br.reactance}")
        if not br.rating > 0:
            problems.append(f"{tag}: nonpositive rating {br.rating}")

    gen_ids: set[str] = set()
    for g in net.generators:
        tag = f"generator {g.id}"
        if g.id in gen_ids:
            problems.append(f"{tag}: duplicate id")
        gen_ids.add(g.id)
        if g.bus not in seen:
            problems.append(f"{tag}: unknown bus {g.bus}")
        if not 0 <= g.p_min <= g.p_max:
            problems.append(f"{tag}: limits violate 0 <= p_min <= p_max ({g.p_min}, {g.p_max})")
        if not g.ramp_hourly >= 0:
            problems.append(f"{tag}: negative ramp")
        if not g.cost.c1 >= 0:
            problems.append(f"{tag}: negative marginal cost")

    if not is_connected(net):
        problems.append("network: graph disconnected")
    return problems


def validate_interfaces(net: Network, interfaces: Iterable[Interface]) -> list[str]:
    problems = []
    for iface in interfaces:
        for bid, sign in iface.members:
            if bid not in net.branch_index:
                problems.append(f"interface {iface.name}: unknown branch {bid}")
            if sign not in (1, -1):
                problems.append(f"interface {iface.name}: sign {sign} is not +1/-1")
        if not iface.limit_neg <= 0 <= iface.limit_pos:
            problems.append(f"interface {iface.name}: limits not bracketing zero")
    return problems


def bus_vector(net: Network, values: Mapping[int, float] | np.ndarray | None) -> np.ndarray:
    """Coerce a per-bus mapping or aligned array to an array in bus order."""
    if values is None:
        return np.zeros(net.n_bus)
    if isinstance(values, Mapping):
        out = np.zeros(net.n_bus)
        for bus_id, v in values.items():
            if bus_id not in net.bus_index:
                raise KeyError(f"unknown bus {bus_id}")
            out[net.bus_index[bus_id]] += v
        return out
    arr = np.asarray(values, dtype=float)
    if arr.shape != (net.n_bus,):
        raise ValueError(f"expected {net.n_bus} bus values, got shape {arr.shape}")
    return arr


def net_nondispatchable(net: Network, loads, outputs: Mapping[str, float]) -> np.ndarray:
    """Subtract non-dispatchable unit outputs from the load at their buses."""
    load = bus_vector(net, loads).copy()
    for gid, mw in outputs.items():
        g = net.generator(gid)
        load[net.bus_index[g.bus]] -= mw
    return load


def net_injections(net: Network, dispatch: Mapping[str, float], loads) -> np.ndarray:
    """Per-bus generation minus load, in MW, aligned with ``net.buses``.

    Non-dispatchable units in ``dispatch`` are netted against their bus load,
    which is arithmetically the same as adding them as generation.
    """
    load = bus_vector(net, loads)
    gen = np.zeros(net.n_bus)
    for gid, mw in dispatch.items():
        if gid not in net.gen_index:
            raise KeyError(f"unknown generator {gid!r}")
        g = net.generators[net.gen_index[gid]]
        if g.dispatchable:
            gen[net.bus_index[g.bus]] += mw
    load = net_nondispatchable(
        net, load, {gid: mw for gid, mw in dispatch.items() if not net.generator(gid).dispatchable}
    )
    return gen - load


class HourlyProfile:
    """Hourly, gap-free table of named real-valued series.

    Thin wrapper over a :class:`pandas.DataFrame` with a strictly increasing
    hourly :class:`~pandas.DatetimeIndex`.
    """

    def __init__(self, frame: pd.DataFrame):
        if not isinstance(frame.index, pd.DatetimeIndex):
            raise TypeError("profile index must be a DatetimeIndex")
        if len(frame) > 1:
            steps = np.diff(frame.index.asi8)
            if not np.all(steps == pd.Timedelta(hours=1).value):
                raise ValueError("profile timestamps must be strictly increasing at hourly spacing")
        if frame.isna().to_numpy().any():
            raise ValueError("profile contains missing values")
        self._frame = frame.astype(float).copy()

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    @property
    def index(self) -> pd.DatetimeIndex:
        return self._frame.index

    @property
    def columns(self) -> list[str]:
        return list(self._frame.columns)

    def __len__(self) -> int:
        return len(self._frame)

    def __getitem__(self, column: str) -> pd.Series:
        return self._frame[column].copy()

    def __contains__(self, column: str) -> bool:
        return column in self._frame.columns

    def row(self, i: int) -> pd.Series:
        return self._frame.iloc[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, HourlyProfile) and self._frame.equals(other._frame)

    def __repr__(self) -> str:
        span = f"{self.index[0]} .. {self.index[-1]}" if len(self) else "empty"
        return f"HourlyProfile({len(self)} h, {self.columns}, {span})"
