"""Run orchestration and report files.

A run screens every contingency, searches one corrective switching action
for each retained contingency and writes:

* ``summary.{csv,json}`` - screening and CTS statistics;
* ``details.{csv,json}`` - one row per (contingency, rank) of the proposed actions;
* ``history.csv`` - every feasible evaluated candidate, ranked, for DM training;
* ``timing.csv`` - wall-clock timings (the only non-deterministic output).

Apart from ``timing.csv`` the output is byte-identical for any thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .contingency import (
    Contingency,
    ScreeningConfig,
    ScreeningResult,
    ViolationSet,
    apply_contingency,
    is_significant,
    read_contingency_list,
    screen_all,
)
from .ctsearch import (
    DEFAULT_LIST_SIZE,
    DEFAULT_TOP_K,
    CtsResult,
    DmModel,
    SwitchingCandidate,
    build_cbce,
    build_cbve,
    build_ce,
    build_dm,
    evaluate_candidate,
    rank,
)
from .netmodel import Network, import_raw_subset, parse_case
from .parallel import TaskFailure, run_parallel

HEURISTICS = ("cbce", "cbve", "dm1", "dm2", "dm3", "ce")

DETAIL_FIELDS = (
    ("contingency", str), ("rank", int), ("branch", int), ("depth", int), ("distance", int),
    ("flow_reduction_pct", float), ("voltage_reduction_pct", float), ("score", float),
    ("base_flow_mva", float), ("base_voltage_pu", float),
    ("post_flow_mva", float), ("post_voltage_pu", float),
    ("pareto", bool), ("feasible", bool),
)
HISTORY_FIELDS = (
    ("contingency", str), ("rank", int), ("branch", int), ("depth", int), ("score", float),
    ("flow_reduction_pct", float), ("voltage_reduction_pct", float), ("pareto", bool),
)
SUMMARY_FIELDS = (
    ("heuristic", str), ("list_size", int), ("top_k", int), ("require_pareto", bool),
    ("contingencies_simulated", int), ("contingencies_with_violations", int),
    ("contingencies_beyond_threshold", int), ("contingencies_unsolvable", int),
    ("fully_eliminated", int), ("partially_reduced", int), ("not_reduced", int),
    ("avg_flow_reduction_pct", float), ("avg_flow_reduction_pct_pi", float),
    ("avg_voltage_reduction_pct", float), ("avg_voltage_reduction_pct_pi", float),
    ("avg_candidates_evaluated", float), ("avg_top_depth", float), ("avg_top_distance", float),
    ("snapshots", int),
)


@dataclass(frozen=True)
class RunConfig:
    case: Path
    out_dir: Path
    heuristic: str = "cbve"
    list_size: int = DEFAULT_LIST_SIZE
    top_k: int = DEFAULT_TOP_K
    require_pareto: bool = False
    screening: ScreeningConfig = field(default_factory=ScreeningConfig)
    threads: int = 1
    contingencies: Path | None = None
    dm_model: Path | None = None
    fmt: str = "csv"

    def __post_init__(self):
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"heuristic must be one of {HEURISTICS}")
        if not (self.list_size >= self.top_k >= 1):
            raise ValueError("need list_size >= top_k >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.fmt not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if self.heuristic.startswith("dm") and self.dm_model is None:
            raise ValueError(f"heuristic {self.heuristic} needs a DM model file")


@dataclass(frozen=True)
class RunSummary:
    heuristic: str
    list_size: int
    top_k: int
    require_pareto: bool
    contingencies_simulated: int
    contingencies_with_violations: int
    contingencies_beyond_threshold: int
    contingencies_unsolvable: int
    fully_eliminated: int
    partially_reduced: int
    not_reduced: int
    avg_flow_reduction_pct: float | None
    avg_flow_reduction_pct_pi: float | None
    avg_voltage_reduction_pct: float | None
    avg_voltage_reduction_pct_pi: float | None
    avg_candidates_evaluated: float | None
    avg_top_depth: float | None
    avg_top_distance: float | None
    snapshots: int = 1


@dataclass
class ContingencyOutcome:
    contingency: Contingency
    base_viol: ViolationSet
    candidates: list[SwitchingCandidate]
    results: list[CtsResult]
    seconds: float

    def ranked(self, require_pareto: bool, top_k: int | None = None) -> list[CtsResult]:
        return rank(self.results, top_k, require_pareto)


@dataclass
class RunResult:
    summary: RunSummary
    details: list[dict]
    history: list[dict]
    outcomes: list[ContingencyOutcome]
    screening: ScreeningResult
    timing: dict[str, float]


# -- candidate evaluation tasks ----------------------------------------------

_POST_NETS: dict = {"owner": None, "nets": {}}


def _post_net(net: Network, c: Contingency, shared) -> Network:
    if _POST_NETS["owner"] is not shared:
        _POST_NETS["owner"] = shared
        _POST_NETS["nets"] = {}
    cache = _POST_NETS["nets"]
    if c not in cache:
        cache[c] = apply_contingency(net, c)
    return cache[c]


def _cts_task(task, shared):
    c, cand = task
    net, cfg, states = shared
    viol, sol = states[c]
    t0 = time.perf_counter()
    res = evaluate_candidate(_post_net(net, c, shared), viol, cand, cfg, start=sol)
    return res, time.perf_counter() - t0


def candidate_list(
    heuristic: str,
    post_net: Network,
    c: Contingency,
    viol: ViolationSet,
    list_size: int,
    dm_model: DmModel | None = None,
) -> list[SwitchingCandidate]:
    if heuristic == "cbce":
        return build_cbce(post_net, c, list_size)
    if heuristic == "cbve":
        return build_cbve(post_net, viol, list_size, c)
    if heuristic == "ce":
        return build_ce(post_net, viol, c)
    cands = build_dm(dm_model, post_net, c, list_size) if dm_model is not None else []
    return cands or build_cbve(post_net, viol, list_size, c)


def analyze(
    net: Network,
    contingencies: Iterable[Contingency] | None = None,
    heuristic: str = "cbve",
    list_size: int = DEFAULT_LIST_SIZE,
    top_k: int = DEFAULT_TOP_K,
    require_pareto: bool = False,
    cfg: ScreeningConfig = ScreeningConfig(),
    threads: int = 1,
    dm_model: DmModel | None = None,
) -> RunResult:
    """Screening followed by the CTS search; no file I/O."""
    t0 = time.perf_counter()
    screening = screen_all(net, contingencies, cfg, workers=threads)
    t_rtca = time.perf_counter() - t0

    t1 = time.perf_counter()
    states = {case.contingency: (case.violations, case.solution) for case in screening.retained}
    shared = (net, cfg, states)
    lists: list[list[SwitchingCandidate]] = []
    tasks = []
    for case in screening.retained:
        c = case.contingency
        cands = candidate_list(heuristic, _post_net(net, c, shared), c, case.violations,
                               list_size, dm_model)
        lists.append(cands)
        tasks.extend((c, cand) for cand in cands)
    evaluated = iter(run_parallel(_cts_task, tasks, workers=threads, shared=shared))
    outcomes = []
    for case, cands in zip(screening.retained, lists):
        results, seconds = [], 0.0
        for cand in cands:
            out = next(evaluated)
            if isinstance(out, TaskFailure):
                results.append(CtsResult(cand, feasible=False))
            else:
                results.append(out[0])
                seconds += out[1]
        outcomes.append(ContingencyOutcome(case.contingency, case.violations, cands, results, seconds))
    t_cts = time.perf_counter() - t1

    details = detail_rows(outcomes, top_k, require_pareto)
    history = history_rows(outcomes)
    summary = summarize(screening, outcomes, heuristic, list_size, top_k, require_pareto, cfg)
    per = [o.seconds for o in outcomes]
    timing = {
        "rtca_s": t_rtca,
        "cts_s": t_cts,
        "cts_avg_s": sum(per) / len(per) if per else 0.0,
        "cts_min_s": min(per, default=0.0),
        "cts_max_s": max(per, default=0.0),
    }
    return RunResult(summary, details, history, outcomes, screening, timing)


# -- rows and summary ---------------------------------------------------------

def _detail(c: Contingency, pos: int, r: CtsResult, base: ViolationSet) -> dict:
    return {
        "contingency": c.label,
        "rank": pos,
        "branch": r.branch,
        "depth": r.depth,
        "distance": r.candidate.distance,
        "flow_reduction_pct": r.flow_reduction_pct,
        "voltage_reduction_pct": r.voltage_reduction_pct,
        "score": r.score,
        "base_flow_mva": base.agg_flow_mva,
        "base_voltage_pu": base.agg_voltage_pu,
        "post_flow_mva": r.post_viol.agg_flow_mva,
        "post_voltage_pu": r.post_viol.agg_voltage_pu,
        "pareto": r.pareto,
        "feasible": r.feasible,
    }


def detail_rows(outcomes: Sequence[ContingencyOutcome], top_k: int, require_pareto: bool) -> list[dict]:
    rows = []
    for o in outcomes:
        for pos, r in enumerate(o.ranked(require_pareto, top_k), start=1):
            rows.append(_detail(o.contingency, pos, r, o.base_viol))
    return rows


def history_rows(outcomes: Sequence[ContingencyOutcome]) -> list[dict]:
    rows = []
    for o in outcomes:
        for pos, r in enumerate(o.ranked(False), start=1):
            rows.append({
                "contingency": o.contingency.label, "rank": pos, "branch": r.branch,
                "depth": r.depth, "score": r.score,
                "flow_reduction_pct": r.flow_reduction_pct,
                "voltage_reduction_pct": r.voltage_reduction_pct, "pareto": r.pareto,
            })
    return rows


def _mean(values: list[float]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def top_reductions(o: ContingencyOutcome, require_pareto: bool) -> tuple[float | None, float | None]:
    """Reductions credited to a contingency: those of its best action, or 0 when
    no action improves the case. None marks a class without base violations."""
    top = o.ranked(require_pareto, 1)
    useful = bool(top) and top[0].score > 0
    flow = volt = None
    if o.base_viol.agg_flow_mva > 0:
        flow = top[0].flow_reduction_pct if useful else 0.0
    if o.base_viol.agg_voltage_pu > 0:
        volt = top[0].voltage_reduction_pct if useful else 0.0
    return flow, volt


def classify(o: ContingencyOutcome, require_pareto: bool, cfg: ScreeningConfig) -> str:
    top = o.ranked(require_pareto, 1)
    if not top or top[0].score <= 0:
        return "none"
    return "partial" if is_significant(top[0].post_viol, cfg) else "full"


def summarize(
    screening: ScreeningResult,
    outcomes: Sequence[ContingencyOutcome],
    heuristic: str,
    list_size: int,
    top_k: int,
    require_pareto: bool,
    cfg: ScreeningConfig,
) -> RunSummary:
    kinds = [classify(o, require_pareto, cfg) for o in outcomes]
    red = {pi: [top_reductions(o, pi) for o in outcomes] for pi in (False, True)}
    shown = [r for o in outcomes for r in o.ranked(require_pareto, top_k)]
    return RunSummary(
        heuristic=heuristic,
        list_size=list_size,
        top_k=top_k,
        require_pareto=require_pareto,
        contingencies_simulated=screening.simulated,
        contingencies_with_violations=screening.with_violations,
        contingencies_beyond_threshold=len(screening.retained),
        contingencies_unsolvable=len(screening.unsolvable),
        fully_eliminated=kinds.count("full"),
        partially_reduced=kinds.count("partial"),
        not_reduced=kinds.count("none"),
        avg_flow_reduction_pct=_mean([f for f, _ in red[False] if f is not None]),
        avg_flow_reduction_pct_pi=_mean([f for f, _ in red[True] if f is not None]),
        avg_voltage_reduction_pct=_mean([v for _, v in red[False] if v is not None]),
        avg_voltage_reduction_pct_pi=_mean([v for _, v in red[True] if v is not None]),
        avg_candidates_evaluated=_mean([float(len(o.candidates)) for o in outcomes]),
        avg_top_depth=_mean([float(r.depth) for r in shown]),
        avg_top_distance=_mean([float(r.candidate.distance) for r in shown
                                if r.candidate.distance is not None]),
    )


# -- serialisation ------------------------------------------------------------

def _cell(value: Any, kind: type, float_fmt: str = ".4f") -> str:
    if value is None:
        return ""
    if kind is bool:
        return "true" if value else "false"
    if kind is float:
        return format(value, float_fmt)
    return str(value)


def _json_value(value: Any, kind: type) -> Any:
    if value is None:
        return None
    if kind is float:
        return round(float(value), 4)
    return kind(value)


def _parse_cell(text: str, kind: type) -> Any:
    if text == "":
        return None
    if kind is bool:
        return text == "true"
    return kind(text)


def to_csv(rows: Sequence[dict], schema, float_fmt: str = ".4f") -> str:
    """Reports use 4 decimals; pass ``float_fmt=".17g"`` for a lossless log."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([name for name, _ in schema])
    for row in rows:
        w.writerow([_cell(row[name], kind, float_fmt) for name, kind in schema])
    return buf.getvalue()


def to_json(rows: Sequence[dict], schema) -> str:
    data = [{name: _json_value(row[name], kind) for name, kind in schema} for row in rows]
    return json.dumps(data, indent=1) + "\n"


def read_rows(path: Path, schema) -> list[dict]:
    """Load a report file written by :func:`emit_report` back into typed rows."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json"):
        data = json.loads(text)
        rows = data if isinstance(data, list) else [data]
        return [{name: _json_value(r[name], kind) for name, kind in schema} for r in rows]
    reader = csv.DictReader(io.StringIO(text))
    return [{name: _parse_cell(r[name], kind) for name, kind in schema} for r in reader]


def emit_report(
    summary: RunSummary, details: Sequence[dict], out_dir: Path, fmt: str = "csv"
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    srow = [asdict(summary)]
    if fmt == "csv":
        files = {"summary.csv": to_csv(srow, SUMMARY_FIELDS),
                 "details.csv": to_csv(details, DETAIL_FIELDS)}
    elif fmt == "json":
        files = {"summary.json": json.dumps(
                     {n: _json_value(srow[0][n], k) for n, k in SUMMARY_FIELDS}, indent=1) + "\n",
                 "details.json": to_json(details, DETAIL_FIELDS)}
    else:
        raise ValueError("format must be csv or json")
    written = []
    for name, text in files.items():
        path = out_dir / name
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written


def write_timing(timing: dict[str, float], path: Path) -> None:
    lines = ["metric,seconds"] + [f"{k},{v:.6f}" for k, v in timing.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- file-level entry points ---------------------------------------------------

def load_network(path: Path) -> Network:
    text = Path(path).read_text(encoding="utf-8")
    if Path(path).suffix.lower() == ".raw":
        return import_raw_subset(text)
    return parse_case(text)


def run(config: RunConfig) -> RunResult:
    net = load_network(config.case)
    ctgs = None
    if config.contingencies is not None:
        ctgs = read_contingency_list(Path(config.contingencies).read_text(encoding="utf-8"))
    model = None
    if config.dm_model is not None:
        model = DmModel.from_text(Path(config.dm_model).read_text(encoding="utf-8"))
        if config.heuristic.startswith("dm") and model.variant != config.heuristic:
            raise ValueError(f"DM model is {model.variant}, run asks for {config.heuristic}")
    result = analyze(
        net, ctgs, config.heuristic, config.list_size, config.top_k, config.require_pareto,
        config.screening, config.threads, model,
    )
    out = Path(config.out_dir)
    emit_report(result.summary, result.details, out, config.fmt)
    (out / "history.csv").write_text(to_csv(result.history, HISTORY_FIELDS, ".17g"), encoding="utf-8")
    write_timing(result.timing, out / "timing.csv")
    return result


def load_history(directory: Path) -> list[tuple[Contingency, list[CtsResult]]]:
    """Read every ``history.csv`` below ``directory`` as DM training input."""
    entries = []
    for path in sorted(Path(directory).rglob("history.csv")):
        grouped: dict[str, list[tuple[int, CtsResult]]] = {}
        for row in read_rows(path, HISTORY_FIELDS):
            grouped.setdefault(row["contingency"], []).append((row["rank"], CtsResult(
                candidate=SwitchingCandidate(row["branch"], row["depth"], None),
                feasible=True,
                score=row["score"],
                flow_reduction_pct=row["flow_reduction_pct"],
                voltage_reduction_pct=row["voltage_reduction_pct"],
                pareto=row["pareto"],
            )))
        for label, ranked in grouped.items():
            kind, eid = label.split()
            c = Contingency.branch(int(eid)) if kind == "B" else Contingency.generator(int(eid))
            entries.append((c, [r for _, r in sorted(ranked, key=lambda t: t[0])]))
    return entries
