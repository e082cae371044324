"""Corrective switching search: candidate lists, evaluation, Pareto check and ranking.

Candidate lists (all ordered, 1-based depth = list position):

* CBCE - branches closest to the contingency element;
* CBVE - branches closest to any violated element;
* DM1/DM2/DM3 - branches that were historically beneficial, by count;
* CE - every eligible branch (complete enumeration), in CBVE order.

Each candidate opens one in-service branch of the post-contingency network.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .contingency import (
    BRANCH_OUTAGE,
    Contingency,
    ScreeningConfig,
    ViolationSet,
    compute_violations,
)
from .netmodel import Element, Network, bus_hops, element_distance, islanding_check
from .powerflow import PowerFlowError, PowerFlowSolution, solve

DEFAULT_LIST_SIZE = 100
DEFAULT_TOP_K = 5
PARETO_TOL = 1e-6  # MVA or p.u.; element-wise slack for "did not increase"

DM_VARIANTS = ("dm1", "dm2", "dm3")


@dataclass(frozen=True)
class SwitchingCandidate:
    branch: int
    depth: int
    distance: int | None  # hops to the contingency element; None when unknown


@dataclass(frozen=True)
class CtsResult:
    candidate: SwitchingCandidate
    feasible: bool
    post_viol: ViolationSet = field(default_factory=ViolationSet)
    flow_reduction_pct: float | None = None
    voltage_reduction_pct: float | None = None
    score: float = -math.inf
    pareto: bool = False

    @property
    def branch(self) -> int:
        return self.candidate.branch

    @property
    def depth(self) -> int:
        return self.candidate.depth


def eligible_branches(net: Network, contingency: Contingency | None = None) -> list[int]:
    skip = contingency.element if contingency is not None and contingency.kind == BRANCH_OUTAGE else None
    return [b.id for b in net.branches.values()
            if b.in_service and b.switchable and b.id != skip]


def _closest(net: Network, sources: Iterable[int], eligible: list[int], k: int | None):
    hops = bus_hops(net, sources)
    keyed = []
    for bid in eligible:
        d = element_distance(hops, net, Element.branch(bid))
        keyed.append((math.inf if d is None else d, bid))
    keyed.sort()
    return [bid for _, bid in (keyed if k is None else keyed[:k])]


def _with_depth(net: Network, branches: Sequence[int], contingency: Contingency | None):
    hops = bus_hops(net, net.element_buses(contingency.element_ref)) if contingency else None
    return [
        SwitchingCandidate(
            branch=bid,
            depth=pos,
            distance=None if hops is None else element_distance(hops, net, Element.branch(bid)),
        )
        for pos, bid in enumerate(branches, start=1)
    ]


def build_cbce(net: Network, c: Contingency, k: int = DEFAULT_LIST_SIZE) -> list[SwitchingCandidate]:
    """Up to ``k`` eligible branches nearest the contingency element.

    ``net`` is the post-contingency network. Ties in distance go to the lower
    branch id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    order = _closest(net, net.element_buses(c.element_ref), eligible_branches(net, c), k)
    return _with_depth(net, order, c)


def build_cbve(
    net: Network,
    viol: ViolationSet,
    k: int | None = DEFAULT_LIST_SIZE,
    contingency: Contingency | None = None,
) -> list[SwitchingCandidate]:
    """Up to ``k`` eligible branches nearest any violated element (min over elements).

    Overloaded branches are themselves eligible. ``contingency`` only fills in
    the reported distance and excludes the outaged element.
    """
    if viol.empty:
        raise ValueError("CBVE needs at least one violated element")
    if k is not None and k < 1:
        raise ValueError("k must be >= 1")
    sources: set[int] = set()
    for ref in viol.elements():
        sources.update(net.element_buses(ref))
    order = _closest(net, sorted(sources), eligible_branches(net, contingency), k)
    return _with_depth(net, order, contingency)


def build_ce(net: Network, viol: ViolationSet, contingency: Contingency | None = None):
    """Every eligible branch, in CBVE order so that depth stays meaningful."""
    if viol.empty:
        return _with_depth(net, eligible_branches(net, contingency), contingency)
    return build_cbve(net, viol, None, contingency)


# -- evaluation ---------------------------------------------------------------

def reduction_metric(base: ViolationSet, post: ViolationSet) -> tuple[float | None, float | None]:
    """Percent reduction of each aggregate; None where the base aggregate is zero."""
    def pct(b: float, p: float) -> float | None:
        if b <= 0:
            return None
        return 100.0 if p == 0 else 100.0 * (b - p) / b

    return (pct(base.agg_flow_mva, post.agg_flow_mva),
            pct(base.agg_voltage_pu, post.agg_voltage_pu))


def combined_score(base: ViolationSet, post: ViolationSet, cfg: ScreeningConfig) -> float:
    """Ranking key: sum over both classes of the aggregate reduction normalised by its base.

    A class without base violations contributes minus its new aggregate over
    the class's significance threshold, so creating violations is penalised.
    """
    score = 0.0
    for b, p, thr in ((base.agg_flow_mva, post.agg_flow_mva, cfg.flow_sig_threshold),
                      (base.agg_voltage_pu, post.agg_voltage_pu, cfg.voltage_sig_threshold)):
        if b > 0:
            score += (b - p) / b
        elif p > 0:
            score -= p / thr if thr > 0 else math.inf
    return score


def is_pareto(base: ViolationSet, post: ViolationSet, tol: float = PARETO_TOL) -> bool:
    """No violated element got worse and no new element is violated."""
    for new, old in ((post.flow_violations, base.flow_violations),
                     (post.voltage_violations, base.voltage_violations)):
        for eid, amount in new.items():
            if amount > old.get(eid, 0.0) + tol:
                return False
    return True


def evaluate_candidate(
    post_ctg_net: Network,
    base_viol: ViolationSet,
    cand: SwitchingCandidate,
    cfg: ScreeningConfig = ScreeningConfig(),
    start: PowerFlowSolution | str = "flat",
) -> CtsResult:
    """Open ``cand.branch`` and re-solve; infeasibility (islanding, divergence) is data."""
    br = post_ctg_net.branches.get(cand.branch)
    if br is None or not br.in_service or not islanding_check(post_ctg_net, cand.branch).connected:
        return CtsResult(cand, feasible=False)
    switched = post_ctg_net.replace_branch(cand.branch, in_service=False)
    try:
        sol = solve(switched, start=start, tol=cfg.tol, max_iter=cfg.max_iter)
    except PowerFlowError:
        return CtsResult(cand, feasible=False)
    if not sol.converged:
        return CtsResult(cand, feasible=False)
    post = compute_violations(switched, sol, cfg)
    flow_pct, volt_pct = reduction_metric(base_viol, post)
    return CtsResult(
        candidate=cand,
        feasible=True,
        post_viol=post,
        flow_reduction_pct=flow_pct,
        voltage_reduction_pct=volt_pct,
        score=combined_score(base_viol, post, cfg),
        pareto=is_pareto(base_viol, post),
    )


def rank(
    results: Iterable[CtsResult],
    top_k: int | None = DEFAULT_TOP_K,
    require_pareto: bool = False,
) -> list[CtsResult]:
    """Feasible results by descending score, then lower depth, then lower branch id."""
    keep = [r for r in results if r.feasible and (r.pareto or not require_pareto)]
    keep.sort(key=lambda r: (-r.score, r.depth, r.branch))
    return keep if top_k is None else keep[:top_k]


def evaluate_all(
    post_ctg_net: Network,
    base_viol: ViolationSet,
    candidates: Sequence[SwitchingCandidate],
    cfg: ScreeningConfig = ScreeningConfig(),
    start: PowerFlowSolution | str = "flat",
) -> list[CtsResult]:
    return [evaluate_candidate(post_ctg_net, base_viol, c, cfg, start) for c in candidates]


def complete_enumeration(
    post_ctg_net: Network,
    base_viol: ViolationSet,
    cfg: ScreeningConfig = ScreeningConfig(),
    start: PowerFlowSolution | str = "flat",
    contingency: Contingency | None = None,
    top_k: int | None = DEFAULT_TOP_K,
    require_pareto: bool = False,
) -> list[CtsResult]:
    cands = build_ce(post_ctg_net, base_viol, contingency)
    return rank(evaluate_all(post_ctg_net, base_viol, cands, cfg, start), top_k, require_pareto)


# -- data mining --------------------------------------------------------------

@dataclass(frozen=True)
class DmModel:
    variant: str
    scores: Mapping[int, int]  # branch -> beneficial occurrences

    def __post_init__(self):
        if self.variant not in DM_VARIANTS:
            raise ValueError(f"unknown DM variant {self.variant!r}")
        if any(s < 1 for s in self.scores.values()):
            raise ValueError("DM scores must be >= 1")

    def ordered(self) -> list[tuple[int, int]]:
        return sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_text(self) -> str:
        lines = [f"# variant {self.variant}", "# branch_id score"]
        lines += [f"{b} {s}" for b, s in self.ordered()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DmModel":
        variant = None
        scores: dict[int, int] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "variant":
                    variant = parts[1].lower()
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'branch_id score'")
            scores[int(parts[0])] = int(parts[1])
        if variant is None:
            raise ValueError("DM model file lacks a '# variant <dm1|dm2|dm3>' header")
        return cls(variant, scores)


def train_dm(
    history: Iterable[tuple[Contingency, Sequence[CtsResult]]],
    variant: str,
) -> DmModel:
    """Count beneficial switching actions over training runs.

    Each history entry holds one contingency's feasible results ranked best
    first (untruncated). A result is beneficial when its score is positive.
    DM1 counts every beneficial result, DM2 those ranked in the top five and
    DM3 only the rank-1 result, so the branch sets nest DM3 <= DM2 <= DM1.
    """
    variant = variant.lower()
    limit = {"dm1": None, "dm2": DEFAULT_TOP_K, "dm3": 1}.get(variant, 0)
    if limit == 0:
        raise ValueError(f"unknown DM variant {variant!r}")
    counts: Counter[int] = Counter()
    for _, ranked in history:
        top = ranked if limit is None else ranked[:limit]
        for r in {r.branch: r for r in top if r.feasible and r.score > 0}.values():
            counts[r.branch] += 1
    return DmModel(variant, dict(counts))


def build_dm(model: DmModel, net: Network, c: Contingency, k: int = DEFAULT_LIST_SIZE):
    """Top-``k`` scored branches that are eligible in ``net`` (post-contingency)."""
    eligible = set(eligible_branches(net, c))
    order = [b for b, _ in model.ordered() if b in eligible][:k]
    return _with_depth(net, order, c)
