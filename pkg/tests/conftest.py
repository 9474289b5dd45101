"""Acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary."""

import pytest

_results: dict[int, dict] = {}


def _entry(n, title):
    return _results.setdefault(n, {"title": title, "outcomes": [], "details": []})


@pytest.fixture
def acceptance(request):
    """Attach measured values to the criterion of the running test: ``acceptance("margin 0.03")``."""
    marker = request.node.get_closest_marker("criterion")
    entry = _entry(*marker.args)
    return entry["details"].append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _entry(*marker.args)["outcomes"].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        entry = _results[n]
        ok = entry["outcomes"] and all(o == "passed" for o in entry["outcomes"])
        status = "PASS" if ok else "FAIL"
        line = f"criterion {n}: {status}  {entry['title']}"
        if entry["details"]:
            line += "  [" + "; ".join(entry["details"]) + "]"
        terminalreporter.write_line(line)
