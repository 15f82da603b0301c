from importlib.resources import files

import numpy as np
import pandas as pd
import pytest

from oracles import dense_dcpf, random_injections, random_network

from gridrep.casefile import read_case
from gridrep.dcpf import DcPowerFlow, PowerFlowError, error_summary, interface_error, interface_flow, solve_dcpf
from gridrep.model import Branch, Bus, Interface, Network

DATA = files("gridrep") / "data"


def two_bus():
    return Network(100.0, (Bus(1, "A", "slack"), Bus(2, "A")), (Branch(1, 1, 2, 0.1),))


def test_two_bus_unit_transfer():
    sol = solve_dcpf(two_bus(), [100.0, -100.0])
    assert sol.angle(1) - sol.angle(2) == pytest.approx(0.1, rel=1e-14)
    assert sol.flow(1) == pytest.approx(100.0, rel=1e-14)
    assert sol.slack_injection == pytest.approx(100.0)


def test_zero_injections():
    sol = solve_dcpf(two_bus(), [0.0, 0.0])
    assert not sol.angles.any() and not sol.branch_flows.any()


def test_fixture_matches_dense_oracle():
    net, _ = read_case(DATA / "case12.txt")
    pf = DcPowerFlow(net)
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = random_injections(rng, net)
        sol = pf.solve(p)
        theta, flows = dense_dcpf(net, p)
        np.testing.assert_allclose(sol.angles, theta, rtol=0, atol=1e-12)
        for bid, f in flows.items():
            assert sol.flow(bid) / net.base_mva == pytest.approx(f / net.base_mva, abs=1e-10)


def test_random_networks_match_dense_oracle():
    rng = np.random.default_rng(8)
    for n in (3, 17, 60):
        net = random_network(rng, n)
        p = random_injections(rng, net)
        _, flows = dense_dcpf(net, p)
        sol = solve_dcpf(net, p)
        np.testing.assert_allclose([sol.flow(b) for b in flows], list(flows.values()), atol=1e-8)


def test_slack_absorbs_imbalance():
    sol = solve_dcpf(two_bus(), [0.0, -40.0])
    assert sol.slack_injection == pytest.approx(40.0) and sol.flow(1) == pytest.approx(40.0)


def test_hvdc_schedule_paired_injections():
    net = Network(100.0, (Bus(1, "A", "slack"), Bus(2, "A"), Bus(3, "A")),
                  (Branch(1, 1, 2, 0.1), Branch(2, 2, 3, 0.1), Branch(3, 3, 1, 0.0, kind="hvdc-proxy", name="DC")))
    sol = solve_dcpf(net, [0.0, 0.0, 0.0], {"DC": 600.0})
    assert sol.flow(3) == 600.0
    assert sol.injections[2] == -600.0 and sol.injections[0] == pytest.approx(600.0)
    assert sol.flow(2) == pytest.approx(600.0) and sol.flow(1) == pytest.approx(600.0)
    with pytest.raises(PowerFlowError, match="missing schedule"):
        solve_dcpf(net, [0.0, 0.0, 0.0])
    with pytest.raises(PowerFlowError, match="not an HVDC proxy"):
        solve_dcpf(net, [0.0, 0.0, 0.0], {"DC": 1.0, 1: 5.0})


def test_disconnected_network_rejected():
    net = Network(100.0, (Bus(1, "A", "slack"), Bus(2, "A"), Bus(3, "A")), (Branch(1, 1, 2, 0.1),))
    with pytest.raises(PowerFlowError, match="singular"):
        DcPowerFlow(net)


def test_interface_flow_examples():
    sol = solve_dcpf(two_bus(), [300.0, -300.0])
    assert interface_flow(sol, Interface("I", ((1, 1),))) == pytest.approx(300.0)
    net = Network(100.0, (Bus(1, "A", "slack"), Bus(2, "A")), (Branch(1, 1, 2, 0.1), Branch(2, 1, 2, 0.1)))
    par = solve_dcpf(net, [100.0, -100.0])
    assert interface_flow(par, Interface("I", ((1, 1), (2, -1)))) == 0.0


def test_three_member_interface_on_fixture():
    net, ifaces = read_case(DATA / "case12.txt")
    p = random_injections(np.random.default_rng(9), net)
    sol = solve_dcpf(net, p)
    iface = Interface("three", ((1, 1), (6, -1), (9, 1)))
    assert interface_flow(sol, iface) == pytest.approx(sol.flow(1) - sol.flow(6) + sol.flow(9), rel=1e-15)


def test_interface_error_examples():
    assert interface_error(110, 100, 1000) == pytest.approx(0.01, rel=1e-15)
    assert interface_error(5, 5, 10) == 0
    assert interface_error(-50, 30, 800) == pytest.approx(-0.1, rel=1e-15)
    with pytest.raises(ValueError):
        interface_error(1, 0, 0)


def test_error_summary():
    zero = error_summary({"I": pd.Series(np.zeros(10))})["I"]
    assert (zero.median, zero.q1, zero.q3, zero.p2_5, zero.p97_5) == (0, 0, 0, 0, 0) and not zero.outliers
    sym = error_summary({"I": pd.Series(np.linspace(-0.2, 0.2, 41))})["I"]
    assert sym.median == pytest.approx(0, abs=1e-15)

    rng = np.random.default_rng(10)
    v = rng.normal(0, 0.05, 1000)
    s = error_summary(pd.DataFrame({"I": v}))["I"]
    srt = np.sort(v)
    # linear-interpolation percentile: position q*(n-1)
    def oracle(q):
        pos = q * (len(srt) - 1)
        lo = int(np.floor(pos))
        return srt[lo] + (pos - lo) * (srt[min(lo + 1, len(srt) - 1)] - srt[lo])
    for attr, q in (("q1", 0.25), ("median", 0.5), ("q3", 0.75), ("p2_5", 0.025), ("p97_5", 0.975)):
        assert getattr(s, attr) == pytest.approx(oracle(q), abs=1e-15)
    assert all(x < s.whisker_low or x > s.whisker_high for _, x in s.outliers)
    assert s.iqr_within_10pct and s.interval95_within_15pct
