"""N-1 contingency application, violation accounting and screening."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .netmodel import Element, Network, islanding_check
from .parallel import TaskFailure, run_parallel
from .powerflow import PowerFlowError, PowerFlowSolution, solve

log = logging.getLogger(__name__)

BRANCH_OUTAGE = "branch_outage"
GENERATOR_OUTAGE = "generator_outage"


@dataclass(frozen=True, order=True)
class Contingency:
    kind: str
    element: int

    def __post_init__(self):
        if self.kind not in (BRANCH_OUTAGE, GENERATOR_OUTAGE):
            raise ValueError(f"unknown contingency kind {self.kind!r}")

    @classmethod
    def branch(cls, branch_id: int) -> "Contingency":
        return cls(BRANCH_OUTAGE, branch_id)

    @classmethod
    def generator(cls, gen_id: int) -> "Contingency":
        return cls(GENERATOR_OUTAGE, gen_id)

    @property
    def element_ref(self) -> Element:
        return Element.branch(self.element) if self.kind == BRANCH_OUTAGE else Element.gen(self.element)

    @property
    def label(self) -> str:
        return ("B" if self.kind == BRANCH_OUTAGE else "G") + f" {self.element}"

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class ScreeningConfig:
    """Violation rules.

    ``v_band`` applies one voltage band to every monitored bus; set it to
    ``None`` to use each bus's own ``v_min``/``v_max``.
    """

    v_band: tuple[float, float] | None = (0.9, 1.1)
    voltage_sig_threshold: float = 0.005  # p.u., aggregate per case
    flow_sig_threshold: float = 5.0  # MVA, aggregate per case
    monitoring_floor_kv: float = 70.0
    tol: float = 1e-6
    max_iter: int = 30

    def __post_init__(self):
        if min(self.voltage_sig_threshold, self.flow_sig_threshold, self.monitoring_floor_kv) < 0:
            raise ValueError("thresholds must be non-negative")
        if self.v_band is not None and not self.v_band[0] < self.v_band[1]:
            raise ValueError("v_band must be (low, high) with low < high")


@dataclass(frozen=True)
class ViolationSet:
    flow_violations: Mapping[int, float] = field(default_factory=dict)  # branch -> MVA over rate_c
    voltage_violations: Mapping[int, float] = field(default_factory=dict)  # bus -> p.u. outside band

    @property
    def agg_flow_mva(self) -> float:
        return math.fsum(self.flow_violations[k] for k in sorted(self.flow_violations))

    @property
    def agg_voltage_pu(self) -> float:
        return math.fsum(self.voltage_violations[k] for k in sorted(self.voltage_violations))

    @property
    def empty(self) -> bool:
        return not self.flow_violations and not self.voltage_violations

    def elements(self) -> list[Element]:
        return ([Element.branch(b) for b in sorted(self.flow_violations)]
                + [Element.bus(b) for b in sorted(self.voltage_violations)])


def is_monitored_branch(net: Network, branch_id: int, cfg: ScreeningConfig) -> bool:
    # both terminals must be at or above the floor
    br = net.branches[branch_id]
    return min(net.buses[br.from_bus].base_kv, net.buses[br.to_bus].base_kv) >= cfg.monitoring_floor_kv


def compute_violations(net: Network, sol: PowerFlowSolution, cfg: ScreeningConfig) -> ViolationSet:
    if not sol.converged:
        raise ValueError("violations need a converged solution")
    flows: dict[int, float] = {}
    mva = sol.branch_mva
    for k, br in enumerate(net.branches.values()):
        if not br.in_service or br.rate_c <= 0 or not is_monitored_branch(net, br.id, cfg):
            continue
        over = float(mva[k]) - br.rate_c
        if over > 0:
            flows[br.id] = over
    volts: dict[int, float] = {}
    for k, bus in enumerate(net.buses.values()):
        if bus.base_kv < cfg.monitoring_floor_kv:
            continue
        lo, hi = cfg.v_band if cfg.v_band is not None else (bus.v_min, bus.v_max)
        vm = float(sol.v_mag[k])
        excursion = lo - vm if vm < lo else vm - hi
        if excursion > 0:
            volts[bus.id] = excursion
    return ViolationSet(flows, volts)


def is_significant(viol: ViolationSet, cfg: ScreeningConfig) -> bool:
    return viol.agg_flow_mva > cfg.flow_sig_threshold or viol.agg_voltage_pu > cfg.voltage_sig_threshold


# -- redispatch ---------------------------------------------------------------

@dataclass(frozen=True)
class Redispatch:
    adjustments: Mapping[int, float]  # generator id -> MW increase
    slack_residual: float  # MW left for the slack bus


def redispatch(net: Network, lost_mw: float, exclude: Iterable[int] = ()) -> Redispatch:
    """Share ``lost_mw`` across in-service units in proportion to their headroom.

    Units on the slack bus and ids in ``exclude`` do not participate. Whatever
    the participants cannot absorb is left to the slack.
    """
    if lost_mw < 0:
        raise ValueError("lost_mw must be non-negative")
    skip = set(exclude)
    slack = net.slack_bus
    units = [g for g in net.generators.values()
             if g.in_service and g.bus != slack and g.id not in skip]
    total = math.fsum(g.headroom for g in units)
    if lost_mw == 0 or total <= 0:
        if lost_mw > 0:
            log.warning("no headroom for %.3f MW redispatch; sending it to the slack", lost_mw)
        return Redispatch({g.id: 0.0 for g in units}, float(lost_mw))
    share = min(lost_mw, total)
    adj = {g.id: share * g.headroom / total for g in units}
    return Redispatch(adj, float(lost_mw - share))


def apply_contingency(net: Network, c: Contingency) -> Network:
    """Post-contingency copy of ``net``.

    A generator outage spreads the unit's MW over the remaining units by
    :func:`redispatch`. If the outaged unit was the last one on the slack bus,
    the largest remaining unit's bus (by ``p_max``, then id) becomes the slack.
    """
    if c.kind == BRANCH_OUTAGE:
        br = net.branches.get(c.element)
        if br is None:
            raise KeyError(f"unknown branch {c.element}")
        if not br.in_service:
            raise ValueError(f"branch {c.element} is already out of service")
        return net.replace_branch(c.element, in_service=False)

    gen = net.generators.get(c.element)
    if gen is None:
        raise KeyError(f"unknown generator {c.element}")
    if not gen.in_service:
        raise ValueError(f"generator {c.element} is already out of service")
    out = net.replace_generator(c.element, in_service=False)
    slack = out.slack_bus
    if not out.generators_at(slack):
        rest = [g for g in out.generators.values() if g.in_service]
        if rest:
            new = max(rest, key=lambda g: (g.p_max, -g.id))
            buses = [
                dataclasses.replace(b, kind="slack") if b.id == new.bus
                else dataclasses.replace(b, kind="pq") if b.id == slack
                else b
                for b in out.buses.values()
            ]
            out = out.replace(buses=buses)
    rd = redispatch(out, gen.p_out)
    if any(rd.adjustments.values()):
        gens = [
            dataclasses.replace(g, p_out=g.p_out + rd.adjustments[g.id]) if g.id in rd.adjustments else g
            for g in out.generators.values()
        ]
        out = out.replace(generators=gens)
    return out


# -- screening ----------------------------------------------------------------

@dataclass(frozen=True)
class ContingencyCase:
    """A solved post-contingency state."""

    contingency: Contingency
    violations: ViolationSet
    solution: PowerFlowSolution


@dataclass
class ScreeningResult:
    base_solution: PowerFlowSolution
    base_violations: ViolationSet
    simulated: int
    with_violations: int
    retained: list[ContingencyCase]
    unsolvable: list[tuple[Contingency, str]]

    @property
    def retained_pairs(self) -> list[tuple[Contingency, ViolationSet]]:
        return [(c.contingency, c.violations) for c in self.retained]


def default_contingencies(net: Network, cfg: ScreeningConfig = ScreeningConfig()) -> list[Contingency]:
    out = [Contingency.branch(b.id) for b in net.branches.values()
           if b.in_service and is_monitored_branch(net, b.id, cfg)]
    out += [Contingency.generator(g.id) for g in net.generators.values() if g.in_service]
    return sorted(out)


def solve_contingency(
    net: Network, c: Contingency, base: PowerFlowSolution, cfg: ScreeningConfig
) -> tuple[str, Network | None, PowerFlowSolution | None, str]:
    """Apply and solve one contingency.

    Returns ``(status, post_net, solution, reason)`` with status ``"ok"`` or
    ``"unsolvable"`` (islanding, divergence or a singular system).
    """
    if c.kind == BRANCH_OUTAGE:
        isl = islanding_check(net, c.element)
        if not isl.connected:
            return "unsolvable", None, None, f"islanding into {len(isl.islands)} parts"
    post = apply_contingency(net, c)
    try:
        sol = solve(post, start=base, tol=cfg.tol, max_iter=cfg.max_iter)
    except PowerFlowError as exc:
        return "unsolvable", post, None, str(exc)
    if not sol.converged:
        return "unsolvable", post, sol, "power flow did not converge"
    return "ok", post, sol, ""


def _screen_task(c: Contingency, shared):
    net, base, cfg = shared
    status, post, sol, reason = solve_contingency(net, c, base, cfg)
    if status != "ok":
        return c, None, None, reason
    return c, compute_violations(post, sol, cfg), sol, ""


def screen_all(
    net: Network,
    contingencies: Iterable[Contingency] | None = None,
    cfg: ScreeningConfig = ScreeningConfig(),
    workers: int = 1,
    base: PowerFlowSolution | None = None,
) -> ScreeningResult:
    """Vanilla N-1 screening.

    A contingency is retained when either aggregate (flow MVA or voltage p.u.)
    exceeds its significance threshold. Output is sorted by contingency and
    independent of the input order and of ``workers``.
    """
    if base is None:
        base = solve(net, tol=cfg.tol, max_iter=cfg.max_iter)
    if not base.converged:
        raise PowerFlowError("base case does not converge")
    ctgs: Sequence[Contingency] = sorted(set(
        default_contingencies(net, cfg) if contingencies is None else contingencies
    ))
    outcomes = run_parallel(_screen_task, ctgs, workers=workers, shared=(net, base, cfg))

    retained: list[ContingencyCase] = []
    unsolvable: list[tuple[Contingency, str]] = []
    with_viol = 0
    for c, out in zip(ctgs, outcomes):
        if isinstance(out, TaskFailure):
            unsolvable.append((c, out.error.splitlines()[0]))
            continue
        _, viol, sol, reason = out
        if viol is None:
            unsolvable.append((c, reason))
            continue
        if not viol.empty:
            with_viol += 1
        if is_significant(viol, cfg):
            retained.append(ContingencyCase(c, viol, sol))
    return ScreeningResult(
        base_solution=base,
        base_violations=compute_violations(net, base, cfg),
        simulated=len(ctgs),
        with_violations=with_viol,
        retained=retained,
        unsolvable=unsolvable,
    )


def read_contingency_list(text: str) -> list[Contingency]:
    """Parse a critical-contingency list: ``B <branch-id>`` or ``G <gen-id>`` per line."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0].upper() not in ("B", "G"):
            raise ValueError(f"line {lineno}: expected 'B <id>' or 'G <id>', got {raw!r}")
        try:
            eid = int(parts[1])
        except ValueError:
            raise ValueError(f"line {lineno}: bad element id {parts[1]!r}") from None
        out.append(Contingency.branch(eid) if parts[0].upper() == "B" else Contingency.generator(eid))
    return out
