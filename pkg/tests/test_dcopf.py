import numpy as np
import pytest

from oracles import random_opf_network, vertex_lp

from gridrep.dcopf import OpfError, OpfInfeasible, OpfProblem, hourly_opf_run, solve_dcopf, zonal_lmp
from gridrep.model import Branch, BranchKind, Bus, CostCurve, Generator, Interface, Network


def two_bus(limit=50.0, hvdc=False):
    br = (Branch(1, 1, 2, 0.0, limit, kind=BranchKind.HVDC, name="DC") if hvdc
          else Branch(1, 1, 2, 0.1, limit))
    return Network(
        100.0,
        (Bus(1, "A", "slack"), Bus(2, "B", base_load=100.0)),
        (br,),
        (Generator("A", 1, "gas", 500.0, cost=CostCurve(10.0)), Generator("B", 2, "gas", 500.0, cost=CostCurve(30.0))),
    )


def test_congested_two_bus():
    sol = solve_dcopf(OpfProblem(two_bus(), {2: 100.0}))
    assert sol.dispatch["A"] == pytest.approx(50, abs=1e-9) and sol.dispatch["B"] == pytest.approx(50, abs=1e-9)
    assert sol.lmp(1) == pytest.approx(10, abs=1e-9) and sol.lmp(2) == pytest.approx(30, abs=1e-9)
    assert sol.objective == pytest.approx(2000, rel=1e-12)
    assert sol.binding == ("branch 1 +",)
    assert sol.certificate["ok"] == 1.0


def test_congested_two_bus_vertex_oracle():
    # variables (gA, gB, f): balance gA - f = 0, gB + f = 100
    best, x = vertex_lp([10, 30, 0],
                        [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1]],
                        [0, 500, 0, 500, 50, 50],
                        [[1, 0, -1], [0, 1, 1]], [0, 100])
    sol = solve_dcopf(OpfProblem(two_bus(), {2: 100.0}))
    assert sol.objective == pytest.approx(best, rel=1e-12)
    assert sol.dispatch["A"] == pytest.approx(x[0], abs=1e-9)


def test_single_bus():
    net = Network(100.0, (Bus(1, "A", "slack"),), (), (Generator("G", 1, "gas", 100.0, cost=CostCurve(20.0)),))
    sol = solve_dcopf(OpfProblem(net, {1: 70.0}))
    assert sol.dispatch == {"G": pytest.approx(70)} and sol.lmp(1) == pytest.approx(20)


def test_uncongested_uniform_price():
    sol = solve_dcopf(OpfProblem(two_bus(200.0), {2: 100.0}))
    np.testing.assert_allclose(sol.nodal_lmp, [10, 10], atol=1e-9)
    assert sol.dispatch["A"] == pytest.approx(100)


def test_ratings_can_be_ignored():
    sol = solve_dcopf(OpfProblem(two_bus(), {2: 100.0}, enforce_ratings=False))
    assert sol.dispatch["A"] == pytest.approx(100)


def test_interface_limit_binds():
    iface = Interface("AB", ((1, 1),), 40.0, -40.0)
    sol = solve_dcopf(OpfProblem(two_bus(200.0), {2: 100.0}, interfaces=(iface,)))
    assert sol.flow(1) == pytest.approx(40) and sol.lmp(2) == pytest.approx(30)
    tighter = solve_dcopf(OpfProblem(two_bus(200.0), {2: 100.0}, interfaces=(iface,), interface_limits={"AB": (-20.0, 20.0)}))
    assert tighter.flow(1) == pytest.approx(20)


def test_hvdc_pinned_at_limit():
    sol = solve_dcopf(OpfProblem(two_bus(100.0, hvdc=True), {2: 300.0}))
    assert sol.flow(1) == pytest.approx(100, abs=1e-9)
    assert sol.dispatch["A"] == pytest.approx(100, abs=1e-9) and sol.dispatch["B"] == pytest.approx(200, abs=1e-9)


def test_zonal_lmp():
    assert zonal_lmp([10, 20], [100, 300], {"Z": [0, 1]}) == {"Z": 17.5}
    assert zonal_lmp([10, 20], [100, 300], {"Z": [1]}) == {"Z": 20}
    rng = np.random.default_rng(15)
    lmp, load = rng.uniform(10, 50, 4), rng.uniform(1, 100, 4)
    assert zonal_lmp(lmp, load, {"Z": range(4)})["Z"] == pytest.approx(float(np.sum(lmp * load) / np.sum(load)), rel=1e-14)
    assert zonal_lmp([10, 30], [0, 0], {"Z": [0, 1]}) == {"Z": 20}


def test_infeasible_reports_conflicts():
    with pytest.raises(OpfInfeasible) as exc:
        solve_dcopf(OpfProblem(two_bus(), {2: 2000.0}))
    assert exc.value.conflicts == ["dispatchable capacity 1000 MW < net load 2000 MW"]


def test_equal_costs_prefer_lowest_id():
    net = Network(100.0, (Bus(1, "A", "slack"),), (),
                  tuple(Generator(g, 1, "gas", 100.0, cost=CostCurve(20.0)) for g in ("c", "a", "b")))
    sol = solve_dcopf(OpfProblem(net, {1: 150.0}))
    assert sol.dispatch == {"a": pytest.approx(100), "b": pytest.approx(50), "c": pytest.approx(0, abs=1e-9)}


def test_random_cases_against_vertex_enumeration():
    rng = np.random.default_rng(16)
    for _ in range(5):
        net = random_opf_network(rng, 5, congested=False)
        loads = {b.id: b.base_load for b in net.buses}
        sol = solve_dcopf(OpfProblem(net, loads))
        n_g = len(net.generators)
        c = [g.cost.c1 for g in net.generators]
        a_ub = np.vstack([np.eye(n_g), -np.eye(n_g)])
        b_ub = np.r_[[g.p_max for g in net.generators], np.zeros(n_g)]
        best, _ = vertex_lp(c, a_ub, b_ub, np.ones((1, n_g)), [sum(loads.values())])
        assert sol.objective == pytest.approx(best, rel=1e-9)


def test_hourly_run_isolates_failures_and_is_deterministic():
    loads = {h: (3000.0 if h == 2 else 50.0 + h) for h in range(5)}

    def build(h):
        return OpfProblem(two_bus(), {2: loads[h]})

    run = hourly_opf_run(build, range(5), jobs=2)
    assert sorted(run.solutions) == [0, 1, 3, 4] and [h for h, _ in run.failures] == [2]
    again = hourly_opf_run(build, range(5), jobs=1)
    for h, sol in run.solutions.items():
        assert sol.dispatch == again.solutions[h].dispatch
        np.testing.assert_array_equal(sol.nodal_lmp, again.solutions[h].nodal_lmp)
    with pytest.raises(OpfError, match="no hour"):
        hourly_opf_run(build, [2])


def test_linked_hours_respect_ramp():
    net = two_bus(500.0)
    net = net.with_(generators=(Generator("A", 1, "gas", 500.0, cost=CostCurve(10.0), ramp_hourly=20.0),
                                Generator("B", 2, "gas", 500.0, cost=CostCurve(30.0))))
    run = hourly_opf_run(lambda h: OpfProblem(net, {2: [50.0, 150.0][h]}), range(2), linked=True)
    assert run.solutions[1].dispatch["A"] == pytest.approx(70)


def test_scale_must_be_positive():
    with pytest.raises(ValueError):
        OpfProblem(two_bus(), {2: 1.0}, scale=0)
