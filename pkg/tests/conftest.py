"""Per-criterion pass/fail lines for the acceptance suite.

Acceptance tests carry ``@pytest.mark.criterion(n, "title")`` and may attach a
short measurement string with ``record_property("detail", ...)``. A criterion
passes only when every test carrying its number passed.
"""

from __future__ import annotations

import pytest

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "details": []})
    entry["ok"] = entry["ok"] and rep.passed
    detail = dict(item.user_properties).get("detail")
    if detail:
        entry["details"].append(detail)
    elif rep.failed:
        entry["details"].append(f"{item.name} failed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "PASS" if entry["ok"] else "FAIL"
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"criterion {number} {status}: {entry['title']} ({detail})")
