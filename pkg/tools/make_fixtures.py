"""Regenerate the IEEE test fixtures in tests/fixtures from PYPOWER's case data.

    python tools/make_fixtures.py

ieee14.case / ieee118.case are faithful conversions (unrated branches).
The 14-bus case carries no kV data, so every bus is given 138 kV.
ieee14_stressed.case adds RATE A / RATE C values set just above the
base-case loading so that several N-1 outages overload neighbouring branches.

Two small hand-built cases complete the set:

* subsystem4.case - a generation pocket (bus 2) that exports over branch 2
  and feeds bus 3 through the parallel pair 3/4. Losing branch 2 overloads
  both parallels; opening the import line 1 clears them.
* stressed6.case - the same pocket plus a second plant and a 69 kV load,
  with three significant N-1 outages.
"""

from __future__ import annotations

import math
from pathlib import Path

from pypower.api import case14, case118

from ctsgrid.netmodel import Branch, Bus, Generator, Network, serialize_case
from ctsgrid.powerflow import solve

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures"
KINDS = {1: "pq", 2: "pv", 3: "slack"}


def from_ppc(ppc, default_kv=138.0) -> Network:
    base = float(ppc["baseMVA"])
    buses = [
        Bus(
            id=int(r[0]), kind=KINDS[int(r[1])], base_kv=float(r[9]) or default_kv,
            v_mag=float(r[7]), v_ang=math.radians(float(r[8])),
            v_min=float(r[12]), v_max=float(r[11]),
            p_load=float(r[2]), q_load=float(r[3]),
            shunt_g=float(r[4]) / base, shunt_b=float(r[5]) / base,
        )
        for r in ppc["bus"]
    ]
    branches = [
        Branch(
            id=k, from_bus=int(r[0]), to_bus=int(r[1]), r=float(r[2]), x=float(r[3]),
            b_charging=float(r[4]), tap_ratio=float(r[8]) or 1.0,
            phase_shift=math.radians(float(r[9])), in_service=bool(r[10]),
        )
        for k, r in enumerate(ppc["branch"], start=1)
    ]
    gens = [
        Generator(
            id=k, bus=int(r[0]), p_out=float(r[1]), q_out=float(r[2]),
            q_max=float(r[3]), q_min=float(r[4]), v_set=float(r[5]),
            in_service=bool(r[7] > 0), p_max=float(r[8]), p_min=float(r[9]),
        )
        for k, r in enumerate(ppc["gen"], start=1)
    ]
    return Network(base, buses, branches, gens)


def stressed(net: Network, margin: float = 1.12, floor: float = 10.0) -> Network:
    sol = solve(net)
    loading = sol.branch_mva
    branches = []
    for br, mva in zip(net.branches.values(), loading):
        rate_c = max(round(float(mva) * margin, 1), floor)
        branches.append(Branch(**{**br.__dict__, "rate_a": round(rate_c / 1.1, 1), "rate_c": rate_c}))
    return net.replace(branches=branches)


def _line(bid, f, t, x, rate_c, r=0.002, b=0.02, **kw) -> Branch:
    return Branch(bid, f, t, r, x, b, rate_a=round(rate_c / 1.1, 1), rate_c=rate_c, **kw)


def subsystem4() -> Network:
    buses = [
        Bus(1, "slack", 345.0, v_mag=1.02),
        Bus(2, "pq", 345.0),
        Bus(3, "pv", 345.0, p_load=200.0, q_load=40.0),
        Bus(4, "pv", 345.0, p_load=230.0, q_load=40.0),
    ]
    branches = [
        _line(1, 1, 2, 0.015, 550.0),  # import into the pocket
        _line(2, 2, 4, 0.016, 550.0),  # export out of the pocket
        _line(3, 2, 3, 0.030, 95.0),
        _line(4, 2, 3, 0.030, 95.0),
        _line(5, 3, 4, 0.020, 550.0),
        _line(6, 1, 4, 0.040, 660.0),
    ]
    gens = [
        Generator(1, 1, 0.0, 0.0, 0.0, 900.0, -500.0, 500.0, 1.02),
        Generator(2, 3, 0.0, 0.0, 0.0, 0.0, -300.0, 300.0, 1.0),  # condensers
        Generator(3, 4, 0.0, 0.0, 0.0, 0.0, -300.0, 300.0, 1.0),
    ]
    return Network(100.0, buses, branches, gens)


def stressed6() -> Network:
    base = subsystem4()
    buses = list(base.buses.values()) + [
        Bus(5, "pv", 345.0, p_load=50.0, q_load=10.0),
        Bus(6, "pq", 69.0, p_load=60.0, q_load=15.0),
    ]
    branches = list(base.branches.values())[:5] + [
        _line(6, 1, 4, 0.040, 200.0),
        _line(7, 5, 3, 0.025, 150.0),
        _line(8, 5, 1, 0.030, 150.0),
        _line(9, 4, 6, 0.050, 110.0, r=0.001, b=0.0),
    ]
    gens = list(base.generators.values()) + [
        Generator(4, 5, 150.0, 0.0, 0.0, 250.0, -150.0, 150.0, 1.01),
    ]
    return Network(100.0, buses, branches, gens)


def write(name: str, net: Network, note: str) -> None:
    path = OUT / name
    path.write_text(f"# {note}\n" + serialize_case(net), encoding="utf-8")
    print(f"wrote {path} ({len(net.buses)} buses, {len(net.branches)} branches)")


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    n14 = from_ppc(case14())
    write("ieee14.case", n14, "IEEE 14-bus test case")
    write("ieee118.case", from_ppc(case118()), "IEEE 118-bus test case")
    write("ieee14_stressed.case", stressed(n14), "IEEE 14-bus with tight emergency ratings")
    write("subsystem4.case", subsystem4(), "export pocket with parallel feeders")
    write("stressed6.case", stressed6(), "6-bus case with three significant N-1 outages")


if __name__ == "__main__":
    main()
