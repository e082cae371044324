"""Immutable grid model: buses, branches, generators and the network container."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple

import numpy as np

BUS_KINDS = ("slack", "pv", "pq")


class NetworkError(ValueError):
    """Semantic problem with a network (dangling reference, duplicate id, ...)."""


class Element(NamedTuple):
    """Reference to a network element, used for graph distances.

    ``kind`` is one of ``"bus"``, ``"branch"`` or ``"gen"``.
    """

    kind: str
    id: int

    @classmethod
    def bus(cls, id: int) -> "Element":
        return cls("bus", id)

    @classmethod
    def branch(cls, id: int) -> "Element":
        return cls("branch", id)

    @classmethod
    def gen(cls, id: int) -> "Element":
        return cls("gen", id)


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    base_kv: float
    v_mag: float = 1.0
    v_ang: float = 0.0  # radians
    v_min: float = 0.9
    v_max: float = 1.1
    p_load: float = 0.0  # MW
    q_load: float = 0.0  # MVAr
    shunt_g: float = 0.0  # p.u. on base_mva
    shunt_b: float = 0.0

    def validate(self) -> None:
        if self.kind not in BUS_KINDS:
            raise NetworkError(f"bus {self.id}: unknown kind {self.kind!r}")
        if not self.base_kv > 0:
            raise NetworkError(f"bus {self.id}: base_kv must be positive")
        if not self.v_min < self.v_max:
            raise NetworkError(f"bus {self.id}: v_min must be below v_max")


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap_ratio: float = 1.0
    phase_shift: float = 0.0  # radians
    rate_a: float = 0.0  # MVA, 0 means unrated
    rate_c: float = 0.0
    in_service: bool = True
    switchable: bool = True

    @property
    def is_transformer(self) -> bool:
        return self.tap_ratio != 1.0 or self.phase_shift != 0.0

    @property
    def buses(self) -> tuple[int, int]:
        return (self.from_bus, self.to_bus)

    def validate(self) -> None:
        if self.x == 0:
            raise NetworkError(f"branch {self.id}: zero reactance")
        if self.from_bus == self.to_bus:
            raise NetworkError(f"branch {self.id}: from_bus equals to_bus")
        if not (self.rate_c >= self.rate_a >= 0):
            raise NetworkError(f"branch {self.id}: ratings must satisfy rate_c >= rate_a >= 0")
        if not self.tap_ratio > 0:
            raise NetworkError(f"branch {self.id}: tap_ratio must be positive")


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_out: float  # MW
    q_out: float = 0.0
    p_min: float = 0.0
    p_max: float = 0.0
    q_min: float = 0.0
    q_max: float = 0.0
    v_set: float = 1.0
    in_service: bool = True

    @property
    def headroom(self) -> float:
        return max(self.p_max - self.p_out, 0.0)

    def validate(self) -> None:
        if self.in_service and not (self.p_min <= self.p_out <= self.p_max):
            raise NetworkError(f"generator {self.id}: p_out outside [p_min, p_max]")
        if not self.q_min <= self.q_max:
            raise NetworkError(f"generator {self.id}: q_min exceeds q_max")


def _keyed(items: Iterable, what: str) -> Mapping[int, object]:
    out: dict[int, object] = {}
    for item in items:
        if item.id in out:
            raise NetworkError(f"duplicate {what} id {item.id}")
        out[item.id] = item
    return MappingProxyType(dict(sorted(out.items())))


class Network:
    """Validated, immutable grid model.

    Collections are read-only mappings keyed by id and iterate in ascending id
    order. Derived arrays used by the solver are cached on first access, which
    is safe because nothing mutates a Network after construction. Use
    :meth:`replace_branch`, :meth:`replace_generator` and friends to obtain
    modified copies.
    """

    base_mva: float
    buses: Mapping[int, Bus]
    branches: Mapping[int, Branch]
    generators: Mapping[int, Generator]
    adjacency: Mapping[int, tuple[int, ...]]

    def __init__(
        self,
        base_mva: float,
        buses: Iterable[Bus],
        branches: Iterable[Branch],
        generators: Iterable[Generator] = (),
    ):
        if not base_mva > 0:
            raise NetworkError("base_mva must be positive")
        object.__setattr__(self, "base_mva", float(base_mva))
        object.__setattr__(self, "buses", _keyed(buses, "bus"))
        object.__setattr__(self, "branches", _keyed(branches, "branch"))
        object.__setattr__(self, "generators", _keyed(generators, "generator"))
        self._validate()
        adj: dict[int, list[int]] = {b: [] for b in self.buses}
        for br in self.branches.values():
            adj[br.from_bus].append(br.id)
            adj[br.to_bus].append(br.id)
        object.__setattr__(
            self, "adjacency", MappingProxyType({b: tuple(v) for b, v in adj.items()})
        )

    def __setattr__(self, name, value):
        raise AttributeError("Network is immutable")

    def __repr__(self) -> str:
        return (
            f"Network(base_mva={self.base_mva}, buses={len(self.buses)}, "
            f"branches={len(self.branches)}, generators={len(self.generators)})"
        )

    def _validate(self) -> None:
        for bus in self.buses.values():
            bus.validate()
        for br in self.branches.values():
            br.validate()
            for end in br.buses:
                if end not in self.buses:
                    raise NetworkError(f"branch {br.id} references unknown bus {end}")
        for gen in self.generators.values():
            gen.validate()
            if gen.bus not in self.buses:
                raise NetworkError(f"generator {gen.id} references unknown bus {gen.bus}")
        slacks = [b.id for b in self.buses.values() if b.kind == "slack"]
        if not slacks:
            raise NetworkError("network has no slack bus")
        if len(slacks) > 1:
            raise NetworkError(f"network has more than one slack bus: {slacks}")

    # -- equality / copies -------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.base_mva == other.base_mva
            and dict(self.buses) == dict(other.buses)
            and dict(self.branches) == dict(other.branches)
            and dict(self.generators) == dict(other.generators)
        )

    __hash__ = None  # type: ignore[assignment]

    def __reduce__(self):
        return (
            _rebuild,
            (self.base_mva, tuple(self.buses.values()), tuple(self.branches.values()),
             tuple(self.generators.values())),
        )

    def replace(
        self,
        buses: Iterable[Bus] | None = None,
        branches: Iterable[Branch] | None = None,
        generators: Iterable[Generator] | None = None,
    ) -> "Network":
        return Network(
            self.base_mva,
            self.buses.values() if buses is None else buses,
            self.branches.values() if branches is None else branches,
            self.generators.values() if generators is None else generators,
        )

    def replace_branch(self, branch_id: int, **changes) -> "Network":
        if branch_id not in self.branches:
            raise KeyError(f"unknown branch {branch_id}")
        return self.replace(
            branches=[
                dataclasses.replace(b, **changes) if b.id == branch_id else b
                for b in self.branches.values()
            ]
        )

    def replace_generator(self, gen_id: int, **changes) -> "Network":
        if gen_id not in self.generators:
            raise KeyError(f"unknown generator {gen_id}")
        return self.replace(
            generators=[
                dataclasses.replace(g, **changes) if g.id == gen_id else g
                for g in self.generators.values()
            ]
        )

    def scale_load(self, factor: float) -> "Network":
        """Copy with every bus demand multiplied by ``factor``."""
        return self.replace(
            buses=[
                dataclasses.replace(b, p_load=b.p_load * factor, q_load=b.q_load * factor)
                for b in self.buses.values()
            ]
        )

    # -- lookups -----------------------------------------------------------

    @property
    def slack_bus(self) -> int:
        return next(b.id for b in self.buses.values() if b.kind == "slack")

    def element_buses(self, ref: Element) -> tuple[int, ...]:
        """Representative buses of an element: endpoints for a branch."""
        kind, eid = ref
        if kind == "bus":
            if eid not in self.buses:
                raise KeyError(f"unknown bus {eid}")
            return (eid,)
        if kind == "branch":
            if eid not in self.branches:
                raise KeyError(f"unknown branch {eid}")
            return self.branches[eid].buses
        if kind == "gen":
            if eid not in self.generators:
                raise KeyError(f"unknown generator {eid}")
            return (self.generators[eid].bus,)
        raise ValueError(f"unknown element kind {kind!r}")

    def generators_at(self, bus_id: int, in_service_only: bool = True) -> list[Generator]:
        return [
            g for g in self.generators.values()
            if g.bus == bus_id and (g.in_service or not in_service_only)
        ]

    # -- cached solver arrays ----------------------------------------------

    @cached_property
    def bus_ids(self) -> np.ndarray:
        return np.fromiter(self.buses, dtype=np.int64, count=len(self.buses))

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b: i for i, b in enumerate(self.buses)}

    @cached_property
    def branch_ids(self) -> np.ndarray:
        return np.fromiter(self.branches, dtype=np.int64, count=len(self.branches))

    @cached_property
    def gen_ids(self) -> np.ndarray:
        return np.fromiter(self.generators, dtype=np.int64, count=len(self.generators))


def _rebuild(base_mva, buses, branches, generators) -> Network:
    return Network(base_mva, buses, branches, generators)
