"""``ctsgrid`` command line.

Exit codes: 0 success, 2 parse error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .contingency import ScreeningConfig, read_contingency_list
from .ctsearch import DEFAULT_LIST_SIZE, DEFAULT_TOP_K, DM_VARIANTS, train_dm
from .netmodel import CaseFormatError
from .parallel import ScalingReport, available_cpus
from .report import HEURISTICS, RunConfig, analyze, load_history, load_network, run

EXIT_OK, EXIT_PARSE, EXIT_IO = 0, 2, 3

log = logging.getLogger("ctsgrid")


def _screening_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--flow-threshold", type=float, default=5.0,
                   help="aggregate MVA overload that makes a contingency significant (default 5)")
    p.add_argument("--voltage-threshold", type=float, default=0.005,
                   help="aggregate p.u. voltage excursion that makes a contingency significant")
    p.add_argument("--monitor-kv", type=float, default=70.0,
                   help="elements below this voltage are not monitored (default 70)")


def _screening(ns) -> ScreeningConfig:
    return ScreeningConfig(
        flow_sig_threshold=ns.flow_threshold,
        voltage_sig_threshold=ns.voltage_threshold,
        monitoring_floor_kv=ns.monitor_kv,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctsgrid",
        description="AC contingency analysis with corrective transmission switching",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="screen contingencies and search switching actions")
    p.add_argument("--case", type=Path, required=True, help="native .case or RAW-subset .raw file")
    p.add_argument("--heuristic", choices=HEURISTICS, default="cbve")
    p.add_argument("--list-size", type=int, default=DEFAULT_LIST_SIZE)
    p.add_argument("--top-k", type=int, default=DEFAULT_TOP_K)
    p.add_argument("--pareto", action="store_true", help="only propose Pareto-improving actions")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--contingencies", type=Path, help="critical contingency list file")
    p.add_argument("--dm-model", type=Path, help="model written by train-dm")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", type=Path, required=True)
    _screening_args(p)

    p = sub.add_parser("train-dm", help="build a data-mining candidate model from run histories")
    p.add_argument("--history", type=Path, required=True,
                   help="directory searched recursively for history.csv files")
    p.add_argument("--variant", choices=DM_VARIANTS, default="dm3")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("scale", help="measure wall time and parallel efficiency")
    p.add_argument("--case", type=Path, required=True)
    p.add_argument("--threads", default="1,2,4,8", help="comma-separated worker counts")
    p.add_argument("--heuristic", choices=("cbce", "cbve", "ce"), default="cbve")
    p.add_argument("--list-size", type=int, default=DEFAULT_LIST_SIZE)
    p.add_argument("--contingencies", type=Path)
    p.add_argument("--out", type=Path, required=True)
    _screening_args(p)
    return parser


def _cmd_run(ns) -> int:
    config = RunConfig(
        case=ns.case, out_dir=ns.out, heuristic=ns.heuristic, list_size=ns.list_size,
        top_k=ns.top_k, require_pareto=ns.pareto, screening=_screening(ns),
        threads=ns.threads, contingencies=ns.contingencies, dm_model=ns.dm_model, fmt=ns.format,
    )
    result = run(config)
    s = result.summary
    print(f"simulated {s.contingencies_simulated}, with violations "
          f"{s.contingencies_with_violations}, beyond threshold "
          f"{s.contingencies_beyond_threshold}, unsolvable {s.contingencies_unsolvable}")
    print(f"fully eliminated {s.fully_eliminated}, partially reduced {s.partially_reduced}, "
          f"not reduced {s.not_reduced}")
    print(f"reports written to {ns.out}")
    return EXIT_OK


def _cmd_train(ns) -> int:
    history = load_history(ns.history)
    model = train_dm(history, ns.variant)
    ns.out.parent.mkdir(parents=True, exist_ok=True)
    ns.out.write_text(model.to_text(), encoding="utf-8")
    print(f"{ns.variant}: {len(model.scores)} branches from {len(history)} contingencies")
    return EXIT_OK


def _cmd_scale(ns) -> int:
    try:
        counts = sorted({int(t) for t in ns.threads.split(",") if t.strip()})
    except ValueError:
        raise ValueError(f"bad --threads list {ns.threads!r}") from None
    if not counts or counts[0] < 1:
        raise ValueError("--threads needs positive integers")
    net = load_network(ns.case)
    ctgs = None
    if ns.contingencies is not None:
        ctgs = read_contingency_list(ns.contingencies.read_text(encoding="utf-8"))
    cfg = _screening(ns)
    if available_cpus() < max(counts):
        log.warning("only %d CPU(s) available; speedups above that are not achievable",
                    available_cpus())
    times: dict[str, dict[int, float]] = {"rtca": {}, "cts": {}}
    for p in sorted(set(counts) | {1}):
        res = analyze(net, ctgs, ns.heuristic, ns.list_size, min(DEFAULT_TOP_K, ns.list_size),
                      cfg=cfg, threads=p)
        times["rtca"][p] = res.timing["rtca_s"]
        times["cts"][p] = res.timing["cts_s"]
    ns.out.mkdir(parents=True, exist_ok=True)
    text = ""
    for phase in ("rtca", "cts"):
        report = ScalingReport.from_times(phase, times[phase])
        report = ScalingReport(phase, tuple(r for r in report.rows if r.workers in counts))
        text += report.to_csv(header=not text)
    (ns.out / "scaling.csv").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "train-dm": _cmd_train, "scale": _cmd_scale}[ns.command]
    try:
        return handler(ns)
    except CaseFormatError as exc:
        print(f"ctsgrid: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"ctsgrid: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"ctsgrid: invalid input: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
