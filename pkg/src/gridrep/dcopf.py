"""Hourly DC optimal power flow with nodal prices from the bus-balance duals."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .model import Interface, Network, bus_vector

logger = logging.getLogger(__name__)

CERT_TOL = 1e-7


class OpfError(RuntimeError):
    pass


class OpfInfeasible(OpfError):
    def __init__(self, message: str, conflicts: Sequence[str] = ()):
        self.conflicts = list(conflicts)
        hint = f" (conflicting limits: {', '.join(self.conflicts)})" if self.conflicts else ""
        super().__init__(message + hint)


@dataclass(frozen=True)
class OpfProblem:
    network: Network
    loads: Mapping[int, float] | np.ndarray
    interfaces: tuple[Interface, ...] = ()
    interface_limits: Mapping[str, tuple[float, float]] = field(default_factory=dict)  # name -> (neg, pos)
    available: Mapping[str, bool] = field(default_factory=dict)
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    costs: Mapping[str, float] = field(default_factory=dict)  # c1 overrides, $/MWh
    fixed_injections: Mapping[int, float] | np.ndarray | None = None
    scale: float = 1.0
    enforce_ratings: bool = True

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"cost scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class OpfSolution:
    bus_ids: tuple[int, ...]
    branch_ids: tuple[int, ...]
    dispatch: dict[str, float]
    angles: np.ndarray
    flows: np.ndarray  # MW per branch in network order; HVDC entries are the decision flows
    nodal_lmp: np.ndarray  # $/MWh per bus
    zonal_lmp: dict[str, float]
    objective: float  # $/h, marginal-cost part only
    binding: tuple[str, ...]
    degenerate: bool
    certificate: dict[str, float]

    def lmp(self, bus_id: int) -> float:
        return float(self.nodal_lmp[self.bus_ids.index(bus_id)])

    def flow(self, branch_id: int) -> float:
        return float(self.flows[self.branch_ids.index(branch_id)])


def zonal_lmp(nodal_lmp, loads, zones) -> dict[str, float]:
    """Load-weighted mean of nodal prices per zone.

    ``zones`` maps zone label to bus positions (indices into ``nodal_lmp``).
    A zone with no positive load falls back to the plain mean.
    """
    lmp = np.asarray(nodal_lmp, dtype=float)
    load = np.asarray(loads, dtype=float)
    out = {}
    for zone, members in zones.items():
        members = list(members)
        if not members:
            raise ValueError(f"zone {zone!r} has no buses")
        w = load[members]
        total = w.sum()
        if total > 0:
            out[zone] = float(w @ lmp[members] / total)
        else:
            logger.warning("zone %s has no load; using the unweighted mean of %d nodal prices", zone, len(members))
            out[zone] = float(lmp[members].mean())
    return out


def zone_positions(net: Network) -> dict[str, list[int]]:
    pos: dict[str, list[int]] = {}
    for k, b in enumerate(net.buses):
        pos.setdefault(b.zone, []).append(k)
    return pos


@dataclass
class _Lp:
    c: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_ub: sp.csr_matrix | None
    b_ub: np.ndarray | None
    bounds: list[tuple[float | None, float | None]]
    ub_labels: list[str]
    gens: list
    n_g: int
    n_b: int
    hvdc: list


def _limit_rows(prob: OpfProblem, skip: frozenset[str] = frozenset()):
    """Inequality rows for branch ratings and interface limits, with labels."""
    net = prob.network
    n_g = sum(g.dispatchable for g in net.generators)
    n_b = net.n_bus
    hvdc_pos = {br.id: k for k, br in enumerate(net.hvdc_branches)}
    n_var = n_g + n_b + len(hvdc_pos)

    def flow_expr(branch_id: int) -> dict[int, float]:
        br = net.branch(branch_id)
        if not br.in_service:
            return {}
        if br.is_hvdc:
            return {n_g + n_b + hvdc_pos[br.id]: 1.0}
        k = net.base_mva / br.reactance
        return {n_g + net.bus_index[br.from_bus]: k, n_g + net.bus_index[br.to_bus]: -k}

    rows, rhs, labels = [], [], []

    def add(expr: dict[int, float], limit: float, label: str):
        if label in skip or not math.isfinite(limit):
            return
        rows.append(expr)
        rhs.append(limit)
        labels.append(label)

    if prob.enforce_ratings:
        for br in net.ac_branches:
            if math.isfinite(br.rating):
                e = flow_expr(br.id)
                add(e, br.rating, f"branch {br.id} +")
                add({k: -v for k, v in e.items()}, br.rating, f"branch {br.id} -")
    for iface in prob.interfaces:
        expr: dict[int, float] = {}
        for bid, sign in iface.members:
            for k, v in flow_expr(bid).items():
                expr[k] = expr.get(k, 0.0) + sign * v
        neg, pos = prob.interface_limits.get(iface.name, (iface.limit_neg, iface.limit_pos))
        add(expr, pos, f"interface {iface.name} +")
        add({k: -v for k, v in expr.items()}, -neg, f"interface {iface.name} -")

    if rows:
        r, c, v = [], [], []
        for i, expr in enumerate(rows):
            for k, val in expr.items():
                r.append(i)
                c.append(k)
                v.append(val)
        a_ub = sp.csr_matrix((v, (r, c)), shape=(len(rows), n_var))
        return a_ub, np.array(rhs, dtype=float), labels
    return None, None, []


def _build(prob: OpfProblem, skip: frozenset[str] = frozenset(), relax_gen_bounds: bool = False) -> _Lp:
    net = prob.network
    gens = [g for g in net.generators if g.dispatchable]
    hvdc = net.hvdc_branches
    n_g, n_b, n_h = len(gens), net.n_bus, len(hvdc)
    n_var = n_g + n_b + n_h

    c = np.zeros(n_var)
    bounds: list[tuple[float | None, float | None]] = []
    for k, g in enumerate(gens):
        c[k] = prob.costs.get(g.id, g.cost.c1) * prob.scale
        lo, hi = prob.bounds.get(g.id, (g.p_min, g.p_max))
        if not prob.available.get(g.id, True):
            lo, hi = 0.0, 0.0
        if relax_gen_bounds:
            lo, hi = None, None
        bounds.append((lo, hi))
    slack = net.bus_index[net.slack]
    for k in range(n_b):
        bounds.append((0.0, 0.0) if k == slack else (None, None))
    for br in hvdc:
        bounds.append((None, None) if f"hvdc {br.id}" in skip else (-br.rating, br.rating))

    # bus balance: gen - base*B*theta - hvdc out + hvdc in = load - fixed
    B = net.susceptance_matrix().tocoo()
    r = list(net.bus_index[g.bus] for g in gens)
    cc = list(range(n_g))
    v = [1.0] * n_g
    r += B.row.tolist()
    cc += (B.col + n_g).tolist()
    v += (-net.base_mva * B.data).tolist()
    for k, br in enumerate(hvdc):
        r += [net.bus_index[br.from_bus], net.bus_index[br.to_bus]]
        cc += [n_g + n_b + k] * 2
        v += [-1.0, 1.0]
    a_eq = sp.csr_matrix((v, (r, cc)), shape=(n_b, n_var))
    b_eq = bus_vector(net, prob.loads) - bus_vector(net, prob.fixed_injections)

    a_ub, b_ub, labels = _limit_rows(prob, skip)
    return _Lp(c, a_eq, b_eq, a_ub, b_ub, bounds, labels, gens, n_g, n_b, hvdc)


def _run(lp: _Lp, c=None, bounds=None, a_eq=None, b_eq=None):
    return linprog(
        lp.c if c is None else c,
        A_ub=lp.a_ub,
        b_ub=lp.b_ub,
        A_eq=lp.a_eq if a_eq is None else a_eq,
        b_eq=lp.b_eq if b_eq is None else b_eq,
        bounds=lp.bounds if bounds is None else bounds,
        method="highs-ds",
        options={"presolve": True, "primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )


def _certificate(lp: _Lp, res) -> dict[str, float]:
    x = res.x
    lo = np.array([-np.inf if b[0] is None else b[0] for b in lp.bounds])
    hi = np.array([np.inf if b[1] is None else b[1] for b in lp.bounds])
    primal = float(np.max(np.abs(lp.a_eq @ x - lp.b_eq), initial=0.0))
    primal = max(primal, float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))
    grad = lp.a_eq.T @ res.eqlin.marginals + res.lower.marginals + res.upper.marginals
    comp = 0.0
    if lp.a_ub is not None:
        slack = lp.b_ub - lp.a_ub @ x
        primal = max(primal, float(np.max(-slack, initial=0.0)))
        z = res.ineqlin.marginals
        grad = grad + lp.a_ub.T @ z
        comp = float(np.max(np.abs(z * slack), initial=0.0))
    dual = float(np.max(np.abs(lp.c - grad), initial=0.0))
    fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
    comp = max(
        comp,
        float(np.max(np.abs(res.lower.marginals[fin_lo] * (x - lo)[fin_lo]), initial=0.0)),
        float(np.max(np.abs(res.upper.marginals[fin_hi] * (hi - x)[fin_hi]), initial=0.0)),
    )
    return {"primal_residual": primal, "dual_residual": dual, "complementarity": comp}


def _is_degenerate(lp: _Lp, res, tol: float = 1e-7) -> bool:
    """More tight constraints than variables at the optimum (non-unique duals)."""
    x = res.x
    n_tight = lp.a_eq.shape[0]
    for (lo, hi), xv in zip(lp.bounds, x):
        if lo is not None and hi is not None and lo == hi:
            n_tight += 1
        elif (lo is not None and abs(xv - lo) <= tol * max(1.0, abs(lo))) or (
            hi is not None and abs(xv - hi) <= tol * max(1.0, abs(hi))
        ):
            n_tight += 1
    if lp.a_ub is not None:
        slack = lp.b_ub - lp.a_ub @ x
        n_tight += int(np.sum(np.abs(slack) <= tol * np.maximum(1.0, np.abs(lp.b_ub))))
    return n_tight > len(x)


def _diagnose(prob: OpfProblem) -> list[str]:
    """Find a small set of network limits that together make the hour infeasible."""
    net = prob.network
    lp = _build(prob)
    lo = sum(b[0] for b in lp.bounds[: lp.n_g])
    hi = sum(b[1] for b in lp.bounds[: lp.n_g])
    demand = float(np.sum(lp.b_eq))
    if hi < demand - 1e-9:
        return [f"dispatchable capacity {hi:.6g} MW < net load {demand:.6g} MW"]
    if lo > demand + 1e-9:
        return [f"minimum generation {lo:.6g} MW > net load {demand:.6g} MW"]
    limit_labels = list(lp.ub_labels) + [f"hvdc {br.id}" for br in net.hvdc_branches]
    groups = sorted({lab.rsplit(" ", 1)[0] if not lab.startswith("hvdc") else lab for lab in limit_labels})

    def feasible(active: set[str]) -> bool:
        skip = frozenset(
            lab for lab in limit_labels
            if (lab if lab.startswith("hvdc") else lab.rsplit(" ", 1)[0]) not in active
        )
        return _run(_build(prob, skip)).status == 0

    if not feasible(set()):
        return ["generator bounds with nodal balance (no single network limit)"]
    active = set(groups)
    if feasible(active):
        return []
    for g in groups:  # deletion filter: keep only limits needed for infeasibility
        trial = active - {g}
        if not feasible(trial):
            active = trial
    return sorted(active)


def _tie_groups(lp: _Lp) -> list[list[int]]:
    """Positions of free dispatchable units sharing a marginal cost, per cost."""
    by_cost: dict[float, list[int]] = {}
    for k in range(lp.n_g):
        lo, hi = lp.bounds[k]
        if lo != hi:
            by_cost.setdefault(float(lp.c[k]), []).append(k)
    return [g for g in by_cost.values() if len(g) > 1]


def _break_ties(lp: _Lp, x: np.ndarray, groups: list[list[int]]) -> np.ndarray:
    tied = {k for g in groups for k in g}
    bounds = list(lp.bounds)
    for k in range(lp.n_g):
        if k not in tied:
            bounds[k] = (x[k], x[k])
    rows = []
    for g in groups:
        row = np.zeros(len(x))
        row[g] = 1.0
        rows.append(row)
    a_eq = sp.vstack([lp.a_eq, sp.csr_matrix(np.array(rows))]).tocsr()
    b_eq = np.r_[lp.b_eq, [x[g].sum() for g in groups]]
    rank = np.zeros(len(x))
    rank[: lp.n_g] = np.arange(1, lp.n_g + 1)
    res = _run(lp, c=rank, bounds=bounds, a_eq=a_eq, b_eq=b_eq)
    return res.x if res.status == 0 else x


def solve_dcopf(prob: OpfProblem, zone_loads=None) -> OpfSolution:
    """Least-cost dispatch; nodal LMP is the balance dual ($ per extra MW of load).

    ``zone_loads`` gives the per-bus weights for zonal prices (defaults to
    the problem loads).
    """
    net = prob.network
    lp = _build(prob)
    res = _run(lp)
    if res.status == 2:
        raise OpfInfeasible("DC-OPF infeasible", _diagnose(prob))
    if res.status == 3:
        raise OpfError("DC-OPF reported unbounded; generator bounds should prevent this")
    if res.status != 0:
        raise OpfError(f"LP solver failed: {res.message}")

    cert = _certificate(lp, res)
    norm = max(1.0, float(np.max(np.abs(lp.c), initial=0.0)), float(np.max(np.abs(lp.b_eq), initial=0.0)))
    if max(cert.values()) > CERT_TOL * norm:
        logger.warning("optimality certificate above tolerance: %s", cert)
    cert["ok"] = float(max(cert.values()) <= CERT_TOL * norm)
    lmp = np.asarray(res.eqlin.marginals, dtype=float).copy()
    x = res.x
    degenerate = _is_degenerate(lp, res)

    groups = _tie_groups(lp)
    if groups:
        # among equal-cost units, favour the lowest generator id; every other
        # unit and each group's total stay at the first-stage optimum
        x = _break_ties(lp, x, groups)

    n_g, n_b = lp.n_g, lp.n_b
    dispatch = {g.id: float(x[k]) for k, g in enumerate(lp.gens)}
    theta = x[n_g : n_g + n_b]
    flows = np.zeros(len(net.branches))
    for br in net.ac_branches:
        f, t = net.bus_index[br.from_bus], net.bus_index[br.to_bus]
        flows[net.branch_index[br.id]] = net.base_mva * (theta[f] - theta[t]) / br.reactance
    for k, br in enumerate(lp.hvdc):
        flows[net.branch_index[br.id]] = x[n_g + n_b + k]

    binding = []
    if lp.a_ub is not None:
        slack = lp.b_ub - lp.a_ub @ x
        binding += [lab for lab, s, b in zip(lp.ub_labels, slack, lp.b_ub) if abs(s) <= 1e-7 * max(1.0, abs(b))]
    for k, g in enumerate(lp.gens):
        lo, hi = lp.bounds[k]
        if hi is not None and abs(x[k] - hi) <= 1e-7 * max(1.0, abs(hi)) and lo != hi:
            binding.append(f"gen {g.id} max")
        elif lo is not None and abs(x[k] - lo) <= 1e-7 * max(1.0, abs(lo)) and lo != hi:
            binding.append(f"gen {g.id} min")
    for k, br in enumerate(lp.hvdc):
        if abs(abs(x[n_g + n_b + k]) - br.rating) <= 1e-7 * max(1.0, br.rating):
            binding.append(f"hvdc {br.id}")

    weights = bus_vector(net, prob.loads if zone_loads is None else zone_loads)
    return OpfSolution(
        bus_ids=net.bus_ids,
        branch_ids=tuple(br.id for br in net.branches),
        dispatch=dispatch,
        angles=theta.copy(),
        flows=flows,
        nodal_lmp=lmp,
        zonal_lmp=zonal_lmp(lmp, weights, zone_positions(net)),
        objective=float(lp.c[:n_g] @ x[:n_g]),
        binding=tuple(binding),
        degenerate=degenerate,
        certificate=cert,
    )


@dataclass
class OpfRun:
    solutions: dict[object, OpfSolution]
    failures: list[tuple[object, str]]


def hourly_opf_run(
    build: Callable[[object], OpfProblem] | Callable[[object], tuple[OpfProblem, object]],
    hours: Iterable,
    jobs: int = 1,
    linked: bool = False,
    ramp: Mapping[str, float] | None = None,
) -> OpfRun:
    """Solve one problem per hour; infeasible hours are logged and skipped.

    ``build(hour)`` returns either an :class:`OpfProblem` or a pair
    ``(problem, zone_loads)``.  With ``linked=True`` hours are solved in order
    and each unit's bounds are narrowed to its previous dispatch +/- ramp.
    """
    hours = list(hours)

    def prepare(h):
        out = build(h)
        return out if isinstance(out, tuple) else (out, None)

    def one(h, prev=None):
        prob, weights = prepare(h)
        if prev is not None:
            new_bounds = dict(prob.bounds)
            for g in prob.network.generators:
                if not g.dispatchable or g.id not in prev:
                    continue
                r = (ramp or {}).get(g.id, g.ramp_hourly)
                lo, hi = new_bounds.get(g.id, (g.p_min, g.p_max))
                new_bounds[g.id] = (max(lo, prev[g.id] - r), min(hi, prev[g.id] + r))
            prob = replace(prob, bounds=new_bounds)
        return solve_dcopf(prob, weights)

    solutions: dict[object, OpfSolution] = {}
    failures: list[tuple[object, str]] = []
    if linked:
        prev = None
        for h in hours:
            try:
                sol = one(h, prev)
            except OpfError as exc:
                failures.append((h, str(exc)))
                logger.warning("hour %s: %s", h, exc)
                prev = None
                continue
            solutions[h] = sol
            prev = sol.dispatch
    else:
        def guarded(h):
            try:
                return h, one(h), None
            except OpfError as exc:
                return h, None, str(exc)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(guarded, hours))
        else:
            results = [guarded(h) for h in hours]
        for h, sol, err in results:
            if err is None:
                solutions[h] = sol
            else:
                failures.append((h, err))
                logger.warning("hour %s: %s", h, err)
    if hours and not solutions:
        raise OpfError(f"no hour could be solved ({len(failures)} failures)")
    return OpfRun(solutions, failures)
