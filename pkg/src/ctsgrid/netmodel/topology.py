from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .model import Element, Network


def bus_hops(
    net: Network, sources: Iterable[int], skip_branch: int | None = None
) -> dict[int, int]:
    """Multi-source BFS over in-service branches; bus -> hop count from nearest source.

    Unreachable buses are absent from the result.
    """
    dist: dict[int, int] = {}
    queue: deque[int] = deque()
    for s in sources:
        if s not in dist:
            dist[s] = 0
            queue.append(s)
    branches = net.branches
    while queue:
        u = queue.popleft()
        for bid in net.adjacency[u]:
            br = branches[bid]
            if not br.in_service or bid == skip_branch:
                continue
            v = br.to_bus if br.from_bus == u else br.from_bus
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def element_distance(hops: dict[int, int], net: Network, ref: Element) -> int | None:
    """Distance of an element given precomputed ``bus_hops``; None if unreachable."""
    reach = [hops[b] for b in net.element_buses(ref) if b in hops]
    return min(reach) if reach else None


def graph_distance(net: Network, a: Element, b: Element) -> int:
    """Bus-hop distance between two elements.

    A branch is represented by its two endpoint buses and a generator by its
    bus; the result is the minimum BFS hop count over those representatives,
    so elements sharing a bus are at distance 0.
    """
    hops = bus_hops(net, net.element_buses(a))
    d = element_distance(hops, net, b)
    if d is None:
        raise ValueError(f"{a} and {b} are not connected")
    return d


@dataclass(frozen=True)
class IslandingResult:
    connected: bool
    islands: tuple[tuple[int, ...], ...]


def connected_components(net: Network, skip_branch: int | None = None) -> list[tuple[int, ...]]:
    seen: set[int] = set()
    comps = []
    for bus in net.buses:
        if bus in seen:
            continue
        comp = bus_hops(net, [bus], skip_branch)
        seen.update(comp)
        comps.append(tuple(sorted(comp)))
    return sorted(comps)


def islanding_check(net: Network, removed_branch: int) -> IslandingResult:
    """Would opening ``removed_branch`` split the in-service graph?

    ``islands`` holds the bus partition (sorted) when it does, and the single
    connected bus set otherwise.
    """
    if removed_branch not in net.branches:
        raise KeyError(f"unknown branch {removed_branch}")
    comps = connected_components(net, skip_branch=removed_branch)
    return IslandingResult(connected=len(comps) == 1, islands=tuple(comps))


def is_connected(net: Network) -> bool:
    start = next(iter(net.buses))
    return len(bus_hops(net, [start])) == len(net.buses)
