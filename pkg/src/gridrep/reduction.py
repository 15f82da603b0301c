"""Ward-type DC network equivalents and topology edits applied around them.

The eliminated buses are removed by a Schur complement of the bus
susceptance matrix.  New off-diagonal coupling between retained buses
becomes *equivalent* branches and the eliminated injections are carried to
the boundary through the distribution matrix ``-B_ie B_ee^-1``.  The DC
power flow on the result reproduces the retained angles of the full
network exactly (to rounding).
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .dcpf import solve_dcpf
from .model import Branch, BranchKind, Network, bus_vector, is_connected, validate_network

PRUNE_TOL = 1e-8
ORDERINGS = {"minimum-degree": "MMD_AT_PLUS_A", "colamd": "COLAMD", "natural": "NATURAL"}


class ReductionError(ValueError):
    pass


@dataclass(frozen=True)
class ReductionSpec:
    retained: frozenset[int]
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "retained", frozenset(int(b) for b in self.retained))


@dataclass(frozen=True)
class ReducedNetwork:
    network: Network
    boundary_injections: np.ndarray  # MW, aligned with network.buses
    provenance: dict[int, dict]
    eliminated: tuple[int, ...] = ()
    distribution: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    pruned: tuple[tuple[int, int, float], ...] = ()  # (bus i, bus j, susceptance pu)
    _b_eq: np.ndarray | None = None

    @property
    def retained(self) -> tuple[int, ...]:
        return self.network.bus_ids

    @property
    def boundary_buses(self) -> tuple[int, ...]:
        if self.distribution.size == 0:
            return ()
        rows = np.flatnonzero(np.abs(self.distribution).sum(axis=1) > 0)
        return tuple(self.retained[k] for k in rows)

    def distribute(self, eliminated_values: Mapping[int, float] | np.ndarray) -> np.ndarray:
        """Carry per-eliminated-bus MW onto retained buses (before pruning folds)."""
        if isinstance(eliminated_values, Mapping):
            vec = np.array([eliminated_values.get(b, 0.0) for b in self.eliminated], dtype=float)
        else:
            vec = np.asarray(eliminated_values, dtype=float)
        if not self.eliminated:
            return np.zeros(self.network.n_bus)
        return self.distribution @ vec

    def equivalent_injections(self, full_net: Network, injections) -> np.ndarray:
        """Per-retained-bus injections (MW) for another hour's full-network injections.

        Reuses the stored Ward structure; only the injection folding is recomputed.
        """
        p = bus_vector(full_net, injections)
        idx = full_net.bus_index
        p_i = np.array([p[idx[b]] for b in self.retained])
        p_e = np.array([p[idx[b]] for b in self.eliminated])
        return p_i + self._boundary(p_i, p_e)

    def _boundary(self, p_i: np.ndarray, p_e: np.ndarray) -> np.ndarray:
        extra = self.distribution @ p_e if self.eliminated else np.zeros_like(p_i)
        if self.pruned:
            extra = extra + _pruned_correction(
                self.network, self._b_eq, p_i + extra, self.pruned
            )
        return extra


def _pruned_correction(net: Network, b_eq: np.ndarray, p_eq: np.ndarray, pruned) -> np.ndarray:
    """Injection changes that replace the flow on pruned equivalent couplings."""
    slack = net.bus_index[net.slack]
    keep = [k for k in range(net.n_bus) if k != slack]
    theta = np.zeros(net.n_bus)
    theta[keep] = np.linalg.solve(b_eq[np.ix_(keep, keep)], p_eq[keep] / net.base_mva)
    corr = np.zeros(net.n_bus)
    for bi, bj, b in pruned:
        i, j = net.bus_index[bi], net.bus_index[bj]
        f = net.base_mva * b * (theta[i] - theta[j])
        corr[i] -= f
        corr[j] += f
    return corr


def _components(b_ee: sp.spmatrix) -> np.ndarray:
    graph = (abs(b_ee) > 0).astype(int)
    _, labels = connected_components(graph, directed=False)
    return labels


def ward_reduce(
    net: Network,
    injections,
    spec: ReductionSpec,
    prune_tol: float = PRUNE_TOL,
    ordering: str = "minimum-degree",
) -> ReducedNetwork:
    """Eliminate every bus not in ``spec.retained``.

    ``injections`` are the full-network bus injections in MW (generation minus
    load); their eliminated part is carried to the boundary buses.
    """
    problems = validate_network(net)
    if problems:
        raise ReductionError("invalid network: " + "; ".join(problems))
    unknown = spec.retained - set(net.bus_ids)
    if unknown:
        raise ReductionError(f"retained buses not in network: {sorted(unknown)}")
    if net.slack not in spec.retained:
        raise ReductionError(f"slack bus {net.slack} must be retained")
    if ordering not in ORDERINGS:
        raise ReductionError(f"unknown ordering {ordering!r}")
    p = bus_vector(net, injections)

    retained = [b for b in net.bus_ids if b in spec.retained]
    eliminated = [b for b in net.bus_ids if b not in spec.retained]
    for br in net.hvdc_branches:
        if br.from_bus not in spec.retained or br.to_bus not in spec.retained:
            raise ReductionError(f"HVDC proxy {br.id} touches an eliminated bus")
    if not eliminated:
        return ReducedNetwork(net, np.zeros(net.n_bus), {}, (), np.zeros((net.n_bus, 0)))

    idx = net.bus_index
    ip = np.array([idx[b] for b in retained])
    ep = np.array([idx[b] for b in eliminated])
    B = net.susceptance_matrix().tocsc()
    b_ii = B[ip][:, ip].toarray()
    b_ie = B[ip][:, ep].tocsc()
    b_ee = B[ep][:, ep].tocsc()

    labels = _components(b_ee)
    touches = np.asarray(abs(b_ie).sum(axis=0)).ravel() > 0
    for comp in np.unique(labels):
        if not touches[labels == comp].any():
            island = [eliminated[k] for k in np.flatnonzero(labels == comp)]
            raise ReductionError(f"eliminated buses {island} have no tie to retained buses (singular B_ee)")

    try:
        lu = spla.splu(b_ee, permc_spec=ORDERINGS[ordering])
    except RuntimeError as exc:
        raise ReductionError(f"singular B_ee: {exc}") from None
    x = lu.solve(b_ie.T.toarray())  # B_ee^-1 B_ei, |e| x |i|
    b_eq = b_ii - b_ie @ x
    asym = np.max(np.abs(b_eq - b_eq.T)) if b_eq.size else 0.0
    if asym > 1e-9 * max(1.0, np.max(np.abs(b_eq))):
        raise ReductionError(f"reduced susceptance matrix is not symmetric ({asym:.2e})")
    b_eq = 0.5 * (b_eq + b_eq.T)
    dist = -x.T  # -B_ie B_ee^-1

    # coupling already present through retained-to-retained branches
    b_int = np.zeros_like(b_ii)
    rpos = {b: k for k, b in enumerate(retained)}
    kept_branches = [br for br in net.branches if br.from_bus in rpos and br.to_bus in rpos]
    for br in kept_branches:
        if br.in_service and not br.is_hvdc:
            i, j, b = rpos[br.from_bus], rpos[br.to_bus], 1.0 / br.reactance
            b_int[i, i] += b
            b_int[j, j] += b
            b_int[i, j] -= b
            b_int[j, i] -= b
    diff = b_eq - b_int

    # eliminated components adjacent to each retained bus, for provenance
    adj = {}
    b_ie_coo = b_ie.tocoo()
    for r, c in zip(b_ie_coo.row, b_ie_coo.col):
        adj.setdefault(int(r), set()).add(int(labels[c]))

    next_id = max((br.id for br in net.branches), default=0) + 1
    equivalents, provenance, pruned = [], {}, []
    n_i = len(retained)
    for i in range(n_i):
        for j in range(i + 1, n_i):
            b = -diff[i, j]
            if b == 0.0:
                continue
            if abs(b) < prune_tol:
                pruned.append((retained[i], retained[j], float(b)))
                continue
            if b < 0:
                raise ReductionError(f"negative equivalent susceptance between {retained[i]} and {retained[j]}")
            br = Branch(next_id, retained[i], retained[j], reactance=1.0 / b, rating=math.inf,
                        kind=BranchKind.EQUIVALENT)
            comps = adj.get(i, set()) & adj.get(j, set())
            provenance[next_id] = {
                "from_bus": retained[i],
                "to_bus": retained[j],
                "susceptance_pu": float(b),
                "eliminated_buses": sorted(eliminated[k] for k in range(len(eliminated)) if labels[k] in comps),
            }
            equivalents.append(br)
            next_id += 1

    reduced = Network(
        base_mva=net.base_mva,
        buses=tuple(net.bus(b) for b in retained),
        branches=tuple(kept_branches) + tuple(equivalents),
        generators=tuple(g for g in net.generators if g.bus in rpos),
    )
    if not is_connected(reduced):
        raise ReductionError("reduced network is disconnected")

    p_i, p_e = p[ip], p[ep]
    out = ReducedNetwork(reduced, np.zeros(n_i), provenance, tuple(eliminated), dist, tuple(pruned), b_eq)
    object.__setattr__(out, "boundary_injections", out._boundary(p_i, p_e))
    return out


def equivalence_error(full: Network, full_injections, reduced: ReducedNetwork, hvdc_schedules=None) -> dict:
    """Largest retained-angle and retained-branch-flow mismatch, in per unit."""
    full_sol = solve_dcpf(full, full_injections, hvdc_schedules)
    p = bus_vector(full, full_injections)
    p_red = np.array([p[full.bus_index[b]] for b in reduced.retained]) + reduced.boundary_injections
    red_sol = solve_dcpf(reduced.network, p_red, hvdc_schedules)
    ang = max(
        (abs(full_sol.angle(b) - red_sol.angle(b)) for b in reduced.retained), default=0.0
    )
    flow = 0.0
    for br in reduced.network.branches:
        if br.kind is BranchKind.EQUIVALENT or br.id not in full.branch_index:
            continue
        flow = max(flow, abs(full_sol.flow(br.id) - red_sol.flow(br.id)) / full.base_mva)
    return {"max_angle_error_rad": ang, "max_flow_error_pu": flow}


def remove_branches(net: Network, branch_ids: Iterable[int]) -> Network:
    ids = set(branch_ids)
    unknown = ids - set(net.branch_index)
    if unknown:
        raise ReductionError(f"unknown branch id(s) {sorted(unknown)}")
    out = net.with_(branches=tuple(br for br in net.branches if br.id not in ids))
    if not is_connected(out):
        raise ReductionError(f"removing branches {sorted(ids)} disconnects the network")
    return out


def estimated_reactance(
    length_miles: float, kv: float, base_mva: float, per_mile_x: float = 0.4, detour: float = 1.5
) -> float:
    """Per-unit reactance of a line from its straight-line length."""
    if not length_miles > 0:
        raise ReductionError(f"line length must be positive, got {length_miles}")
    if not kv > 0:
        raise ReductionError(f"voltage must be positive, got {kv}")
    z_base = kv**2 / base_mva
    return detour * length_miles * per_mile_x / z_base


def _check_ends(net: Network, from_bus: int, to_bus: int) -> None:
    for b in (from_bus, to_bus):
        if b not in net.bus_index:
            raise ReductionError(f"unknown bus {b}")
    if from_bus == to_bus:
        raise ReductionError("line endpoints must differ")


def add_line_estimated(
    net: Network,
    from_bus: int,
    to_bus: int,
    length_miles: float,
    kv: float,
    per_mile_x: float = 0.4,
    detour: float = 1.5,
    rating: float = math.inf,
    name: str = "",
) -> Network:
    _check_ends(net, from_bus, to_bus)
    x = estimated_reactance(length_miles, kv, net.base_mva, per_mile_x, detour)
    new_id = max((br.id for br in net.branches), default=0) + 1
    br = Branch(new_id, from_bus, to_bus, reactance=x, rating=rating, kind=BranchKind.ADDED, name=name)
    return net.with_(branches=net.branches + (br,))


def add_hvdc_proxy(net: Network, from_bus: int, to_bus: int, name: str, limit: float) -> Network:
    """Controllable tie carrying a scheduled (PF) or bounded free (OPF) flow."""
    _check_ends(net, from_bus, to_bus)
    if not limit > 0:
        raise ReductionError("HVDC limit must be positive")
    new_id = max((br.id for br in net.branches), default=0) + 1
    br = Branch(new_id, from_bus, to_bus, reactance=0.0, rating=float(limit), kind=BranchKind.HVDC, name=name)
    return net.with_(branches=net.branches + (br,))


@dataclass(frozen=True)
class LineToAdd:
    from_bus: int
    to_bus: int
    length_miles: float
    kv: float
    per_mile_x: float = 0.4
    detour: float = 1.5
    rating: float = math.inf
    name: str = ""


@dataclass(frozen=True)
class HvdcToAdd:
    from_bus: int
    to_bus: int
    name: str
    limit: float


@dataclass(frozen=True)
class ReductionPlan:
    """Everything a reduction spec file describes."""

    spec: ReductionSpec
    remove: tuple[int, ...] = ()
    add_lines: tuple[LineToAdd, ...] = ()
    hvdc: tuple[HvdcToAdd, ...] = ()

    @classmethod
    def from_dict(cls, data: Mapping) -> ReductionPlan:
        known = {"retained", "notes", "remove_branches", "add_lines", "hvdc"}
        extra = set(data) - known
        if extra:
            raise ReductionError(f"unknown reduction spec keys {sorted(extra)}")
        if "retained" not in data:
            raise ReductionError("reduction spec needs a 'retained' bus list")
        return cls(
            spec=ReductionSpec(frozenset(data["retained"]), data.get("notes", "")),
            remove=tuple(int(b) for b in data.get("remove_branches", ())),
            add_lines=tuple(LineToAdd(**d) for d in data.get("add_lines", ())),
            hvdc=tuple(HvdcToAdd(**d) for d in data.get("hvdc", ())),
        )

    def to_dict(self) -> dict:
        return {
            "retained": sorted(self.spec.retained),
            "notes": self.spec.notes,
            "remove_branches": list(self.remove),
            "add_lines": [vars(a) for a in self.add_lines],
            "hvdc": [vars(h) for h in self.hvdc],
        }

    def prepare(self, net: Network) -> Network:
        """Topology edits made before reduction."""
        return remove_branches(net, self.remove) if self.remove else net

    def finish(self, net: Network) -> Network:
        """Topology edits made on the reduced network."""
        for a in self.add_lines:
            net = add_line_estimated(net, a.from_bus, a.to_bus, a.length_miles, a.kv, a.per_mile_x,
                                     a.detour, a.rating, a.name)
        for h in self.hvdc:
            net = add_hvdc_proxy(net, h.from_bus, h.to_bus, h.name, h.limit)
        return net


def load_reduction_plan(path) -> ReductionPlan:
    with open(path, encoding="utf-8") as fh:
        return ReductionPlan.from_dict(json.load(fh))


def reduce_with_plan(net: Network, injections, plan: ReductionPlan, **kwargs) -> tuple[ReducedNetwork, Network]:
    """Apply ``plan``: remove lines, Ward-reduce, then add lines and HVDC proxies.

    Returns the raw Ward result (for equivalence checks against the prepared
    full network) and the final study network.
    """
    prepared = plan.prepare(net)
    red = ward_reduce(prepared, bus_vector(net, injections), plan.spec, **kwargs)
    return red, plan.finish(red.network)


def provenance_sidecar(red: ReducedNetwork) -> dict:
    return {
        "retained": list(red.retained),
        "eliminated": list(red.eliminated),
        "distribution": red.distribution.tolist(),
        "boundary_injections_mw": red.boundary_injections.tolist(),
        "pruned": [list(p) for p in red.pruned],
        "equivalent_branches": {str(k): v for k, v in sorted(red.provenance.items())},
    }


def distribution_from_sidecar(data: Mapping) -> tuple[tuple[int, ...], tuple[int, ...], np.ndarray]:
    dist = np.array(data["distribution"], dtype=float).reshape(len(data["retained"]), len(data["eliminated"]))
    return tuple(data["retained"]), tuple(data["eliminated"]), dist
