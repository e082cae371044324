"""AC real-time contingency analysis with corrective transmission switching."""

from .contingency import Contingency, ScreeningConfig, ViolationSet, apply_contingency, screen_all
from .ctsearch import (
    CtsResult,
    DmModel,
    SwitchingCandidate,
    build_cbce,
    build_cbve,
    build_dm,
    complete_enumeration,
    evaluate_candidate,
    rank,
    reduction_metric,
    train_dm,
)
from .netmodel import Element, Network, graph_distance, import_raw_subset, islanding_check, parse_case, read_case
from .powerflow import PowerFlowSolution, branch_flows, solve
from .report import RunConfig, analyze, run

__version__ = "0.1.0"

__all__ = [
    "Contingency", "CtsResult", "RunConfig", "analyze", "read_case", "run", "DmModel", "Element", "Network", "PowerFlowSolution",
    "ScreeningConfig", "SwitchingCandidate", "ViolationSet", "apply_contingency",
    "branch_flows", "build_cbce", "build_cbve", "build_dm", "complete_enumeration",
    "evaluate_candidate", "graph_distance", "import_raw_subset", "islanding_check",
    "parse_case", "rank", "reduction_metric", "screen_all", "solve", "train_dm",
]
