import json
import math
from importlib.resources import files

import numpy as np
import pytest

from oracles import dense_dcpf, random_injections, random_network

from gridrep.casefile import read_case
from gridrep.dcpf import solve_dcpf
from gridrep.model import Branch, BranchKind, Bus, Network, validate_network
from gridrep.reduction import (
    ReductionError,
    ReductionPlan,
    ReductionSpec,
    add_hvdc_proxy,
    add_line_estimated,
    distribution_from_sidecar,
    equivalence_error,
    estimated_reactance,
    load_reduction_plan,
    provenance_sidecar,
    reduce_with_plan,
    remove_branches,
    ward_reduce,
)

DATA = files("gridrep") / "data"


def chain():
    return Network(100.0, (Bus(1, "A", "slack"), Bus(2, "A"), Bus(3, "A")),
                   (Branch(1, 1, 2, 0.1), Branch(2, 2, 3, 0.2)))


def test_chain_series_equivalent():
    red = ward_reduce(chain(), [0.0, 0.0, 0.0], ReductionSpec({1, 3}))
    (eq,) = red.network.branches
    assert eq.kind is BranchKind.EQUIVALENT and (eq.from_bus, eq.to_bus) == (1, 3)
    assert eq.reactance == pytest.approx(0.3, rel=1e-12)
    assert red.provenance[eq.id]["eliminated_buses"] == [2]


def test_middle_injection_split_by_admittance():
    red = ward_reduce(chain(), [0.0, 30.0, 0.0], ReductionSpec({1, 3}))
    # 2/3 of the middle bus injection lands on the stiffer (x=0.1) side
    np.testing.assert_allclose(red.boundary_injections, [20.0, 10.0], rtol=1e-14)


def test_leaf_elimination():
    net = chain()
    red = ward_reduce(net, [0.0, 0.0, 0.0], ReductionSpec({1, 2}))
    assert [br.id for br in red.network.branches] == [1]
    np.testing.assert_array_equal(red.boundary_injections, [0.0, 0.0])


def test_retain_all_is_identity():
    net = chain()
    red = ward_reduce(net, [0.0, 5.0, -5.0], ReductionSpec({1, 2, 3}))
    assert red.network == net and not red.boundary_injections.any()


def test_random_30_bus_retain_12():
    rng = np.random.default_rng(11)
    net = random_network(rng, 30)
    p = random_injections(rng, net)
    keep = {1} | set(int(b) for b in rng.choice(np.arange(2, 31), 11, replace=False))
    red = ward_reduce(net, p, ReductionSpec(keep))
    err = equivalence_error(net, p, red)
    assert err["max_flow_error_pu"] < 1e-9 and err["max_angle_error_rad"] < 1e-9
    # independent check against the dense oracle
    _, flows = dense_dcpf(net, p)
    idx = net.bus_index
    p_red = np.array([p[idx[b]] for b in red.retained]) + red.boundary_injections
    sol = solve_dcpf(red.network, p_red)
    for br in red.network.branches:
        if br.kind is not BranchKind.EQUIVALENT:
            assert abs(sol.flow(br.id) - flows[br.id]) / 100 < 1e-9


def test_other_hour_injections_reuse_structure():
    rng = np.random.default_rng(12)
    net = random_network(rng, 25)
    red = ward_reduce(net, random_injections(rng, net), ReductionSpec({1, 2, 3, 4, 5, 6, 7, 8}))
    p2 = random_injections(rng, net)
    again = ward_reduce(net, p2, ReductionSpec({1, 2, 3, 4, 5, 6, 7, 8}))
    np.testing.assert_allclose(red.equivalent_injections(net, p2) - np.array([p2[net.bus_index[b]] for b in red.retained]),
                               again.boundary_injections, atol=1e-10)


def test_reduce_errors():
    with pytest.raises(ReductionError, match="slack"):
        ward_reduce(chain(), [0, 0, 0], ReductionSpec({2, 3}))
    with pytest.raises(ReductionError, match="not in network"):
        ward_reduce(chain(), [0, 0, 0], ReductionSpec({1, 9}))
    with pytest.raises(ReductionError, match="ordering"):
        ward_reduce(chain(), [0, 0, 0], ReductionSpec({1, 3}), ordering="random")


def test_remove_branches():
    par = Network(100.0, (Bus(1, "A", "slack"), Bus(2, "A")), (Branch(1, 1, 2, 0.1), Branch(2, 1, 2, 0.1)))
    out = remove_branches(par, [2])
    assert validate_network(out) == [] and len(out.branches) == 1
    with pytest.raises(ReductionError, match="disconnects"):
        remove_branches(chain(), [1])
    with pytest.raises(ReductionError, match="unknown"):
        remove_branches(chain(), [99])


def test_remove_three_ties_from_case30():
    net, _ = read_case(DATA / "case30.txt")
    plan = load_reduction_plan(DATA / "reduce30.json")
    assert len(net.branches) - len(plan.prepare(net).branches) == 3


def test_estimated_reactance():
    x = estimated_reactance(100, 345, 100, 0.4, 1.5)
    assert 345**2 / 100 == 1190.25
    assert x == pytest.approx(60 / 1190.25, rel=1e-15)
    assert x == pytest.approx(0.050410, rel=1e-5)
    with pytest.raises(ReductionError):
        estimated_reactance(0, 345, 100, 0.4, 1.0)
    net = add_line_estimated(chain(), 1, 3, 100, 345, name="new")
    assert net.branches[-1].kind is BranchKind.ADDED and net.branches[-1].reactance == x


def test_hvdc_proxy():
    base = chain()
    net = add_hvdc_proxy(base, 3, 1, "DC", 100)
    br = net.branches[-1]
    assert br.is_hvdc and br.rating == 100
    p = [0.0, 20.0, -20.0]
    a, b = solve_dcpf(base, p), solve_dcpf(net, p, {"DC": 0.0})
    np.testing.assert_array_equal(a.angles, b.angles)
    np.testing.assert_array_equal(a.branch_flows, b.branch_flows[:2])
    with pytest.raises(ReductionError):
        add_hvdc_proxy(base, 1, 3, "DC", 0)


def test_hvdc_on_eliminated_bus_rejected():
    net = add_hvdc_proxy(chain(), 2, 3, "DC", 10)
    with pytest.raises(ReductionError, match="HVDC"):
        ward_reduce(net, [0, 0, 0], ReductionSpec({1, 3}))


def test_plan_round_trip_and_fixture_reduction():
    net, _ = read_case(DATA / "case12.txt")
    plan = load_reduction_plan(DATA / "reduce12.json")
    assert ReductionPlan.from_dict(plan.to_dict()) == plan
    rng = np.random.default_rng(13)
    p = random_injections(rng, net)
    red, study = reduce_with_plan(net, p, plan)
    assert equivalence_error(net, p, red)["max_flow_error_pu"] < 1e-9
    kinds = [br.kind for br in study.branches]
    assert BranchKind.ADDED in kinds and BranchKind.HVDC in kinds
    side = json.loads(json.dumps(provenance_sidecar(red)))
    retained, eliminated, dist = distribution_from_sidecar(side)
    assert retained == red.retained and eliminated == red.eliminated
    np.testing.assert_array_equal(dist, red.distribution)
    with pytest.raises(ReductionError, match="unknown reduction spec keys"):
        ReductionPlan.from_dict({"retained": [1], "bogus": 1})


def test_case30_to_12_within_1e9():
    net, _ = read_case(DATA / "case30.txt")
    plan = load_reduction_plan(DATA / "reduce30.json")
    p = random_injections(np.random.default_rng(14), net)
    red, _ = reduce_with_plan(net, p, plan)
    assert red.network.n_bus == 12
    assert equivalence_error(plan.prepare(net), p, red)["max_flow_error_pu"] < 1e-9


def test_equivalent_ratings_unbounded():
    red = ward_reduce(chain(), [0, 0, 0], ReductionSpec({1, 3}))
    assert math.isinf(red.network.branches[0].rating)
