import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctsgrid.netmodel import Branch, Bus, Generator, Network
from ctsgrid.powerflow import PowerFlowError, branch_flows, make_ybus, solve

from helpers import fixture, perturbed, two_bus
from oracles import dense_ybus, pypower_solve_qlim


def closed_form_two_bus(p_pu: float, x: float):
    """Load bus of a lossless line fed at 1.0 p.u., unity power factor load."""
    vm = math.sqrt((1 + math.sqrt(1 - 4 * (p_pu * x) ** 2)) / 2)
    va = -math.acos(vm)
    return vm, va


def total_losses(net, sol):
    s_from, s_to = branch_flows(net, sol)
    shunt = sum(b.shunt_g * sol.v_mag[k] ** 2 for k, b in enumerate(net.buses.values()))
    return float(np.sum((s_from + s_to).real)) + shunt * net.base_mva


def test_two_bus_closed_form():
    sol = solve(two_bus(100.0, x=0.1), tol=1e-10)
    vm, va = closed_form_two_bus(1.0, 0.1)
    assert sol.converged
    assert sol.v_mag[1] == pytest.approx(vm, abs=1e-9)
    assert sol.v_ang[1] == pytest.approx(va, abs=1e-9)
    v2 = vm * complex(math.cos(va), math.sin(va))
    s_send = (1.0 * ((1.0 - v2) / 0.1j).conjugate()) * 100.0
    assert sol.branch_flow_from[0] == pytest.approx(s_send, abs=1e-6)


def test_no_load_identity():
    net = Network(
        100.0,
        [Bus(1, "slack", 138.0), Bus(2, "pv", 138.0), Bus(3, "pq", 138.0)],
        [Branch(1, 1, 2, 0.01, 0.1, 0.0), Branch(2, 2, 3, 0.01, 0.1, 0.0), Branch(3, 1, 3, 0.02, 0.2, 0.0)],
        [Generator(1, 1, 0, 0, 0, 100, -50, 50, 1.0), Generator(2, 2, 0, 0, 0, 100, -50, 50, 1.0)],
    )
    sol = solve(net)
    assert sol.converged and sol.iterations == 0
    assert np.allclose(sol.v_mag, 1.0) and np.allclose(sol.v_ang, 0.0)


@pytest.mark.parametrize("name", ["ieee14", "ieee118"])
def test_ieee_against_reference_solver(name):
    net = fixture(name)
    t0 = time.perf_counter()
    sol = solve(net)
    elapsed = time.perf_counter() - t0
    assert sol.converged and sol.max_mismatch <= 1e-6 and sol.iterations <= 10
    assert elapsed < 1.0
    ok, vm, va, fixed = pypower_solve_qlim(net)
    assert ok
    assert fixed == sol.q_limited
    assert np.max(np.abs(sol.v_mag - vm)) < 1e-4
    assert np.max(np.abs(sol.v_ang - va)) < 1e-4


def test_ybus_matches_elementwise_assembly():
    for name in ("ieee14", "ieee118", "stressed6"):
        net = fixture(name)
        assert np.allclose(make_ybus(net).toarray(), dense_ybus(net), atol=1e-12)


def test_self_consistency_against_independent_ybus():
    net = fixture("ieee118")
    sol = solve(net)
    s = sol.voltage * np.conj(dense_ybus(net) @ sol.voltage)
    idx = net.bus_index
    gen = np.zeros(len(net.buses), dtype=complex)
    for g, p, q in zip(net.generators.values(), sol.p_gen, sol.q_gen):
        if g.in_service:
            gen[idx[g.bus]] += complex(p, q)
    load = np.array([complex(b.p_load, b.q_load) for b in net.buses.values()])
    assert np.max(np.abs(s - (gen - load) / net.base_mva)) <= 1e-6


def test_conservation_on_fixtures():
    for name in ("ieee14", "ieee118", "stressed6"):
        net = fixture(name)
        sol = solve(net)
        gen = float(np.sum(sol.p_gen))
        load = sum(b.p_load for b in net.buses.values())
        assert abs(gen - load - total_losses(net, sol)) / net.base_mva <= 1e-6 * len(net.buses)


def _complementarity(net, sol, tol=1e-6):
    base = net.base_mva
    q_bus: dict[int, float] = {}
    for g, q in zip(net.generators.values(), sol.q_gen):
        if g.in_service:
            q_bus[g.bus] = q_bus.get(g.bus, 0.0) + q
    for bus, q in q_bus.items():
        if net.buses[bus].kind != "pv":
            continue
        units = net.generators_at(bus)
        qmax, qmin = sum(u.q_max for u in units), sum(u.q_min for u in units)
        side = sol.q_limited.get(bus)
        if side == "max":
            assert q == pytest.approx(qmax, abs=tol * base)
        elif side == "min":
            assert q == pytest.approx(qmin, abs=tol * base)
        else:
            assert qmin - tol * base <= q <= qmax + tol * base
            vm, _ = sol.bus_voltage(bus)
            assert vm == pytest.approx(units[0].v_set, abs=1e-9)


def test_q_limit_complementarity_ieee118():
    net = fixture("ieee118")
    sol = solve(net)
    assert sol.q_limited  # this case does bind limits
    _complementarity(net, sol)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_q_limit_complementarity_random_loading(seed):
    net = perturbed(fixture("ieee14"), np.random.default_rng(seed), spread=0.4)
    sol = solve(net)
    if sol.converged:
        _complementarity(net, sol)


def test_without_q_limits_no_bus_is_converted():
    sol = solve(fixture("ieee118"), enforce_q_limits=False)
    assert sol.converged and sol.q_limited == {}


def test_limited_bus_can_revert():
    # Start bus 2 clamped at its minimum although it actually needs to produce Q.
    net = Network(
        100.0,
        [Bus(1, "slack", 138.0), Bus(2, "pv", 138.0, p_load=50.0, q_load=30.0)],
        [Branch(1, 1, 2, 0.01, 0.1, 0.0)],
        [Generator(1, 1, 0, 0, 0, 200, -100, 100, 1.0), Generator(2, 2, 0, 0, 0, 0, -20, 80, 1.0)],
    )
    ref = solve(net)
    assert ref.q_limited == {}
    forced = solve(net, enforce_q_limits=False)
    forced.q_limited = {2: "min"}
    warm = solve(net, start=forced)
    assert warm.converged and warm.q_limited == {}
    assert np.allclose(warm.v_mag, ref.v_mag, atol=1e-8)


@pytest.mark.parametrize("name", ["ieee14", "ieee118", "stressed6"])
def test_warm_start_converges_quickly(name):
    net = fixture(name)
    sol = solve(net)
    again = solve(net, start=sol)
    assert again.converged and again.iterations <= 2


def test_warm_start_after_outage():
    net = fixture("ieee14")
    base = solve(net)
    post = solve(net.replace_branch(4, in_service=False), start=base)
    flat = solve(net.replace_branch(4, in_service=False))
    assert post.converged and np.allclose(post.v_mag, flat.v_mag, atol=1e-6)


def test_disconnected_network_raises():
    net = two_bus().replace_branch(1, in_service=False)
    with pytest.raises(PowerFlowError):
        solve(net)


def test_nonconvergence_is_flagged_not_raised():
    sol = solve(two_bus(load_mw=900.0, x=0.1))
    assert not sol.converged


def test_bad_arguments():
    with pytest.raises(ValueError):
        solve(two_bus(), tol=0)
    with pytest.raises(ValueError):
        solve(two_bus(), start="hot")


def test_open_branch_has_zero_flow():
    net = fixture("ieee14").replace_branch(5, in_service=False)
    sol = solve(net)
    k = list(net.branches).index(5)
    assert sol.branch_flow_from[k] == 0 and sol.branch_flow_to[k] == 0


def test_lossless_branch_real_power_balance():
    net = two_bus(80.0, x=0.2, r=0.0, b=0.05)
    sol = solve(net)
    s_from, s_to = branch_flows(net, sol)
    assert s_from[0].real == pytest.approx(-s_to[0].real, abs=1e-9)


def test_branch_flows_recomputable():
    net = fixture("ieee118")
    sol = solve(net)
    s_from, s_to = branch_flows(net, sol)
    assert np.allclose(s_from, sol.branch_flow_from) and np.allclose(s_to, sol.branch_flow_to)
    with pytest.raises(ValueError):
        branch_flows(fixture("ieee14"), sol)
