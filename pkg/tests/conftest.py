import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "ran": False, "details": []})
    if report.failed:
        entry["ok"] = False
    if report.when == "call":
        entry["ran"] = entry["ran"] or not report.skipped
        entry["details"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] and entry["ran"] else "FAIL"
        line = f"C{number:<2} {status}  {entry['title']}"
        if entry["details"]:
            line += "  [" + "; ".join(entry["details"]) + "]"
        terminalreporter.write_line(line)
