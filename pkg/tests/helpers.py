"""Small hand-built networks and fixture loaders shared by the tests."""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import numpy as np

from ctsgrid.netmodel import Branch, Bus, Generator, Network, read_case

FIXTURES = Path(__file__).parent / "fixtures"


@lru_cache(maxsize=None)
def fixture(name: str) -> Network:
    return read_case(FIXTURES / f"{name}.case")


def slack_unit(bus: int = 1, p_max: float = 1000.0, gid: int = 1, v_set: float = 1.0) -> Generator:
    return Generator(gid, bus, 0.0, 0.0, 0.0, p_max, -999.0, 999.0, v_set)


def two_bus(load_mw: float = 100.0, x: float = 0.1, r: float = 0.0, b: float = 0.0,
            kv: float = 138.0, rate_c: float = 0.0) -> Network:
    return Network(
        100.0,
        [Bus(1, "slack", kv), Bus(2, "pq", kv, p_load=load_mw)],
        [Branch(1, 1, 2, r, x, b, rate_a=rate_c, rate_c=rate_c)],
        [slack_unit()],
    )


def chain(n: int, x: float = 0.05, load_mw: float = 10.0) -> Network:
    """Buses 1..n in a line; branch k joins bus k and k+1."""
    buses = [Bus(1, "slack", 138.0)] + [Bus(k, "pq", 138.0, p_load=load_mw) for k in range(2, n + 1)]
    branches = [Branch(k, k, k + 1, 0.005, x, 0.0) for k in range(1, n)]
    return Network(100.0, buses, branches, [slack_unit()])


def star(spokes: int) -> Network:
    """Hub bus 1 (slack) with ``spokes`` radial branches; branch k reaches bus k+1."""
    buses = [Bus(1, "slack", 138.0)] + [Bus(k + 1, "pq", 138.0, p_load=5.0) for k in range(1, spokes + 1)]
    branches = [Branch(k, 1, k + 1, 0.01, 0.05, 0.0) for k in range(1, spokes + 1)]
    return Network(100.0, buses, branches, [slack_unit()])


def random_graph(rng: np.random.Generator, n: int, extra: int, connected: bool = True) -> Network:
    """Random bus graph. A spanning tree when ``connected`` (else a random forest
    part), plus ``extra`` random chords; parallel branches are allowed."""
    buses = [Bus(1, "slack", 138.0)] + [Bus(k, "pq", 138.0) for k in range(2, n + 1)]
    edges = []
    for k in range(2, n + 1):
        if connected or rng.random() < 0.8:
            edges.append((int(rng.integers(1, k)), k))
    for _ in range(extra):
        a, b = rng.choice(np.arange(1, n + 1), size=2, replace=False)
        edges.append((int(a), int(b)))
    branches = [Branch(i, a, b, 0.01, 0.05, 0.0) for i, (a, b) in enumerate(edges, start=1)]
    return Network(100.0, buses, branches, [slack_unit()])


def perturbed(net: Network, rng: np.random.Generator, spread: float = 0.3) -> Network:
    """Random per-bus load factors and random dispatch within unit limits."""
    import dataclasses

    buses = []
    for b in net.buses.values():
        f = 1.0 + spread * (2 * rng.random() - 1)
        buses.append(dataclasses.replace(b, p_load=b.p_load * f, q_load=b.q_load * f))
    gens = []
    for g in net.generators.values():
        if g.bus == net.slack_bus or g.p_max <= g.p_min:
            gens.append(g)
            continue
        p = g.p_min + (g.p_max - g.p_min) * rng.uniform(0.2, 0.8)
        gens.append(dataclasses.replace(g, p_out=p))
    return net.replace(buses=buses, generators=gens)
