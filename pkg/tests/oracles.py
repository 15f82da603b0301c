"""Independent reference computations used by the tests.

Nothing here calls the package's solvers: power flow uses a dense
pseudo-inverse, small LPs are solved by vertex enumeration, statistics use
plain two-pass formulas.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from gridrep.model import Branch, Bus, CostCurve, Generator, Network


def dense_dcpf(net: Network, injections_mw: np.ndarray) -> tuple[np.ndarray, dict[int, float]]:
    """Angles (slack 0) and AC branch flows from a dense Laplacian solve."""
    n = net.n_bus
    idx = net.bus_index
    L = np.zeros((n, n))
    for br in net.branches:
        if not br.in_service or br.is_hvdc:
            continue
        i, j, b = idx[br.from_bus], idx[br.to_bus], 1.0 / br.reactance
        L[i, i] += b
        L[j, j] += b
        L[i, j] -= b
        L[j, i] -= b
    s = idx[net.slack]
    keep = [k for k in range(n) if k != s]
    theta = np.zeros(n)
    p = np.asarray(injections_mw, dtype=float) / net.base_mva
    theta[keep] = np.linalg.solve(L[np.ix_(keep, keep)], p[keep])
    flows = {br.id: net.base_mva * (theta[idx[br.from_bus]] - theta[idx[br.to_bus]]) / br.reactance
             for br in net.branches if br.in_service and not br.is_hvdc}
    return theta, flows


def random_network(rng: np.random.Generator, n: int, extra: float = 0.6, zones: int = 1,
                   rating: tuple[float, float] | None = None) -> Network:
    """Connected random mesh: a random spanning tree plus ``extra * n`` chords."""
    buses = [Bus(b, f"Z{(b - 1) * zones // n}", "slack" if b == 1 else "PQ", float(rng.uniform(0, 100)))
             for b in range(1, n + 1)]
    edges = []
    for b in range(2, n + 1):
        edges.append((int(rng.integers(1, b)), b))
    seen = set(edges)
    tries = 0
    while len(edges) < n - 1 + int(extra * n) and tries < 50 * n:
        tries += 1
        i, j = sorted(int(v) for v in rng.choice(np.arange(1, n + 1), 2, replace=False))
        if (i, j) not in seen:
            seen.add((i, j))
            edges.append((i, j))
    branches = []
    for k, (i, j) in enumerate(edges, start=1):
        r = float(rng.uniform(*rating)) if rating else math.inf
        branches.append(Branch(k, i, j, float(rng.uniform(0.01, 0.3)), r))
    return Network(100.0, tuple(buses), tuple(branches))


def random_injections(rng: np.random.Generator, net: Network) -> np.ndarray:
    p = rng.normal(0, 50, net.n_bus)
    p[net.bus_index[net.slack]] -= p.sum()
    return p


def vertex_lp(c, a_ub, b_ub, a_eq, b_eq, tol=1e-9):
    """Minimize c.x over {A_ub x <= b_ub, A_eq x = b_eq} by enumerating vertices.

    Only for a handful of variables; assumes the feasible set is bounded.
    """
    c = np.asarray(c, float)
    n = c.size
    a_ub, b_ub = np.asarray(a_ub, float).reshape(-1, n), np.asarray(b_ub, float)
    a_eq, b_eq = np.asarray(a_eq, float).reshape(-1, n), np.asarray(b_eq, float)
    best, best_x = math.inf, None
    m_eq = a_eq.shape[0]
    for rows in itertools.combinations(range(a_ub.shape[0]), n - m_eq):
        A = np.vstack([a_eq, a_ub[list(rows)]])
        b = np.r_[b_eq, b_ub[list(rows)]]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, b)
        if np.all(a_ub @ x <= b_ub + tol) and np.allclose(a_eq @ x, b_eq, atol=tol):
            val = float(c @ x)
            if val < best - tol:
                best, best_x = val, x
    return best, best_x


def ols_closed_form(p, h) -> tuple[float, float]:
    """Slope and intercept from centred sums (two-pass, compensated)."""
    p = [float(v) for v in p]
    h = [float(v) for v in h]
    n = len(p)
    pm = math.fsum(p) / n
    hm = math.fsum(h) / n
    sxy = math.fsum((a - pm) * (b - hm) for a, b in zip(p, h))
    sxx = math.fsum((a - pm) ** 2 for a in p)
    slope = sxy / sxx
    return slope, hm - slope * pm


def pearson_two_pass(x, y) -> float:
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    xm, ym = math.fsum(x) / n, math.fsum(y) / n
    sxy = math.fsum((a - xm) * (b - ym) for a, b in zip(x, y))
    sxx = math.fsum((a - xm) ** 2 for a in x)
    syy = math.fsum((b - ym) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def nearest_rank(values, q: float) -> float:
    v = sorted(values)
    return v[max(1, math.ceil(q * len(v))) - 1]


def random_opf_network(rng: np.random.Generator, n: int, congested: bool) -> Network:
    """Random network with 2 to 4 generators of distinct costs and capacity to spare."""
    net = random_network(rng, n, extra=0.5, rating=(15.0, 60.0) if congested else None)
    n_gen = int(rng.integers(2, 5))
    buses = rng.choice(np.arange(1, n + 1), n_gen, replace=False)
    costs = rng.permutation(np.linspace(10, 60, n_gen)) + rng.uniform(0, 1, n_gen)
    total_load = float(net.base_loads().sum())
    gens = tuple(Generator(f"G{k}", int(b), "gas", p_max=total_load, cost=CostCurve(float(c)))
                 for k, (b, c) in enumerate(zip(buses, costs)))
    loads = rng.uniform(0, 30, n)
    buses_ = tuple(Bus(b.id, b.zone, b.kind, float(loads[k])) for k, b in enumerate(net.buses))
    return net.with_(buses=buses_, generators=gens)
