import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctsgrid.contingency import (
    Contingency,
    ScreeningConfig,
    ViolationSet,
    apply_contingency,
    compute_violations,
    default_contingencies,
    is_significant,
    read_contingency_list,
    redispatch,
    screen_all,
)
from ctsgrid.netmodel import Branch, Bus, Generator, Network, islanding_check
from ctsgrid.powerflow import solve

from helpers import fixture, slack_unit
from oracles import proportional_fill, pypower_solve

CFG = ScreeningConfig()


def three_unit_net(headrooms=(300.0, 100.0), lost=100.0) -> Network:
    buses = [Bus(1, "slack", 345.0)] + [Bus(k, "pv", 345.0, p_load=200.0) for k in range(2, 5)]
    branches = [Branch(k, 1, k + 1, 0.01, 0.05, 0.0) for k in range(1, 4)]
    gens = [slack_unit(), Generator(2, 2, lost, 0, 0, lost, -99, 99, 1.0)]
    for k, h in enumerate(headrooms, start=3):
        gens.append(Generator(k, k, 100.0, 0, 0, 100.0 + h, -99, 99, 1.0))
    return Network(100.0, buses, branches, gens)


# -- redispatch ---------------------------------------------------------------

def test_redispatch_zero_loss():
    rd = redispatch(three_unit_net(), 0.0)
    assert all(v == 0 for v in rd.adjustments.values()) and rd.slack_residual == 0


def test_redispatch_proportional_example():
    net = three_unit_net().replace_generator(2, in_service=False)
    rd = redispatch(net, 100.0)
    assert rd.adjustments == {3: pytest.approx(75.0), 4: pytest.approx(25.0)}
    assert rd.slack_residual == 0


def test_generator_outage_applies_redispatch():
    net = three_unit_net()
    out = apply_contingency(net, Contingency.generator(2))
    assert not out.generators[2].in_service
    assert out.generators[3].p_out == pytest.approx(175.0)
    assert out.generators[4].p_out == pytest.approx(125.0)
    assert net.generators[3].p_out == 100.0  # base untouched


def test_insufficient_headroom_goes_to_slack():
    net = three_unit_net((10.0, 30.0)).replace_generator(2, in_service=False)
    rd = redispatch(net, 100.0)
    assert rd.adjustments == {3: pytest.approx(10.0), 4: pytest.approx(30.0)}
    assert rd.slack_residual == pytest.approx(60.0)


def test_zero_headroom_warns(caplog):
    net = three_unit_net((0.0, 0.0)).replace_generator(2, in_service=False)
    rd = redispatch(net, 50.0)
    assert rd.slack_residual == 50.0
    assert "headroom" in caplog.text


@settings(max_examples=80, deadline=None)
@given(h=st.lists(st.floats(0, 500), min_size=3, max_size=3), lost=st.floats(0, 1500))
def test_redispatch_matches_fill_oracle(h, lost):
    net = Network(
        100.0,
        [Bus(1, "slack", 345.0)] + [Bus(k, "pv", 345.0) for k in (2, 3, 4)],
        [Branch(k, 1, k + 1, 0.01, 0.05, 0.0) for k in (1, 2, 3)],
        [slack_unit()] + [Generator(k, k, 10.0, 0, 0, 10.0 + hk, -9, 9, 1.0)
                          for k, hk in zip((2, 3, 4), h)],
    )
    rd = redispatch(net, lost)
    expect = proportional_fill(list(h), lost)
    got = [rd.adjustments[k] for k in (2, 3, 4)]
    assert got == pytest.approx(expect, abs=1e-6 * max(1.0, lost))
    assert all(a <= hk + 1e-9 for a, hk in zip(got, h))
    assert math.fsum(got) + rd.slack_residual == pytest.approx(lost, abs=1e-9)


def test_losing_slack_unit_moves_slack():
    net = three_unit_net()
    out = apply_contingency(net, Contingency.generator(1))
    assert out.slack_bus == 3  # largest remaining p_max
    assert solve(out).converged


# -- contingency application --------------------------------------------------

def test_branch_outage_changes_only_status():
    net = fixture("ieee14")
    out = apply_contingency(net, Contingency.branch(7))
    assert not out.branches[7].in_service
    assert out.replace_branch(7, in_service=True) == net


def test_contingency_errors():
    net = fixture("ieee14")
    with pytest.raises(KeyError):
        apply_contingency(net, Contingency.branch(99))
    with pytest.raises(ValueError):
        apply_contingency(net.replace_branch(3, in_service=False), Contingency.branch(3))
    with pytest.raises(ValueError):
        Contingency("bus_outage", 1)


def test_radial_outage_reported_unsolvable():
    net = fixture("ieee14")
    radial = next(k for k, br in net.branches.items() if set(br.buses) == {7, 8})
    res = screen_all(net, [Contingency.branch(radial)])
    assert res.retained == [] and res.unsolvable[0][0] == Contingency.branch(radial)
    assert "island" in res.unsolvable[0][1]


# -- violations ---------------------------------------------------------------

def _fake(net, vm, mva):
    sol = solve(net)
    sol = dataclasses.replace(sol, v_mag=np.asarray(vm, float),
                              branch_flow_from=np.asarray(mva, complex),
                              branch_flow_to=np.zeros(len(mva), complex))
    return sol


def _floor_net():
    buses = [Bus(1, "slack", 345.0), Bus(2, "pq", 345.0), Bus(3, "pq", 13.8), Bus(4, "pq", 13.8)]
    branches = [Branch(1, 1, 2, 0.01, 0.1, 0, rate_a=90, rate_c=100),
                Branch(2, 3, 4, 0.01, 0.1, 0, rate_a=9, rate_c=10),
                Branch(3, 2, 3, 0.01, 0.1, 0, tap_ratio=1.02, rate_a=90, rate_c=100)]
    return Network(100.0, buses, branches, [slack_unit()])


def test_no_violations():
    net = _floor_net()
    v = compute_violations(net, _fake(net, [1, 1, 1, 1], [50, 5, 20]), CFG)
    assert v.empty and v.agg_flow_mva == 0 and v.agg_voltage_pu == 0


def test_low_voltage_entry():
    net = _floor_net()
    v = compute_violations(net, _fake(net, [1, 0.88, 1, 1], [50, 5, 20]), CFG)
    assert v.voltage_violations == {2: pytest.approx(0.02)}
    assert v.agg_voltage_pu == pytest.approx(0.02)


def test_monitoring_floor_excludes_low_kv():
    net = _floor_net()
    v = compute_violations(net, _fake(net, [1, 1, 0.5, 1.3], [105, 50, 150]), CFG)
    assert v.flow_violations == {1: pytest.approx(5.0)}
    assert v.voltage_violations == {}


def test_flow_uses_larger_terminal():
    net = _floor_net()
    sol = _fake(net, [1] * 4, [90, 0, 0])
    sol = dataclasses.replace(sol, branch_flow_to=np.array([-112 + 0j, 0, 0]))
    assert compute_violations(net, sol, CFG).flow_violations == {1: pytest.approx(12.0)}


def test_compute_violations_is_pure():
    net = fixture("ieee14_stressed").replace_branch(3, in_service=False)
    sol = solve(net)
    assert compute_violations(net, sol, CFG) == compute_violations(net, sol, CFG)


def test_per_bus_band_option():
    net = _floor_net()
    tight = net.replace(buses=[dataclasses.replace(b, v_min=0.97) for b in net.buses.values()])
    sol = _fake(tight, [1, 0.96, 1, 1], [0, 0, 0])
    assert compute_violations(tight, sol, CFG).empty
    own = ScreeningConfig(v_band=None)
    assert compute_violations(tight, sol, own).voltage_violations == {2: pytest.approx(0.01)}


@pytest.mark.parametrize("flow, volt, keep", [
    (4.0, 0.004, False), (4.9, 0.0, False), (5.1, 0.0, True), (0.0, 0.004, False),
    (0.0, 0.006, True), (5.0, 0.005, False), (4.9, 0.006, True),
])
def test_significance(flow, volt, keep):
    v = ViolationSet({1: flow} if flow else {}, {1: volt} if volt else {})
    assert is_significant(v, CFG) is keep


# -- screening ----------------------------------------------------------------

def test_unstressed_retains_nothing():
    res = screen_all(fixture("ieee14"))
    assert res.retained == [] and res.simulated == 25


def test_screening_order_invariant():
    net = fixture("ieee14_stressed")
    ctgs = default_contingencies(net)
    rng = np.random.default_rng(7)
    a = screen_all(net, ctgs)
    b = screen_all(net, [ctgs[i] for i in rng.permutation(len(ctgs))] + ctgs[:3])
    assert a.retained_pairs == b.retained_pairs
    assert a.unsolvable == b.unsolvable and a.simulated == b.simulated


@pytest.mark.parametrize("flow_thr, volt_thr", [(5.0, 0.005), (20.0, 0.005), (5.0, 0.05), (80.0, 1.0)])
def test_threshold_monotonicity(flow_thr, volt_thr):
    net = fixture("ieee14_stressed")
    base = {c for c, _ in screen_all(net).retained_pairs}
    cfg = ScreeningConfig(flow_sig_threshold=flow_thr, voltage_sig_threshold=volt_thr)
    assert {c for c, _ in screen_all(net, cfg=cfg).retained_pairs} <= base


def test_retained_matches_brute_force_oracle():
    net = fixture("stressed6")
    res = screen_all(net)
    expect = {}
    for c in default_contingencies(net):
        if c.kind == "branch_outage" and not islanding_check(net, c.element).connected:
            continue
        post = apply_contingency(net, c)
        ok, vm, va, ppc = pypower_solve(post)
        assert ok
        flows = {}
        for br, row in zip(post.branches.values(), ppc["branch"]):
            if br.in_service and br.rate_c > 0 and min(post.buses[b].base_kv for b in br.buses) >= 70:
                mva = max(math.hypot(row[13], row[14]), math.hypot(row[15], row[16]))
                if mva > br.rate_c:
                    flows[br.id] = mva - br.rate_c
        volts = {b.id: max(0.9 - m, m - 1.1) for b, m in zip(post.buses.values(), vm)
                 if b.base_kv >= 70 and not 0.9 <= m <= 1.1}
        if sum(flows.values()) > 5.0 or sum(volts.values()) > 0.005:
            expect[c] = (flows, volts)
    got = dict(res.retained_pairs)
    assert set(got) == set(expect) and len(got) >= 1
    for c, (flows, volts) in expect.items():
        assert got[c].flow_violations == pytest.approx(flows, abs=1e-3)
        assert got[c].voltage_violations == pytest.approx(volts, abs=1e-5)


def test_read_contingency_list():
    text = "# critical list\nB 3\ng 2  # unit\n\nB 10\n"
    assert read_contingency_list(text) == [Contingency.branch(3), Contingency.generator(2),
                                           Contingency.branch(10)]
    with pytest.raises(ValueError, match="line 1"):
        read_contingency_list("X 3")
    with pytest.raises(ValueError, match="line 2"):
        read_contingency_list("B 1\nB one")
