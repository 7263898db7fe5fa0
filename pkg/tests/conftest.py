from collections import defaultdict

import pytest

_outcomes = defaultdict(list)
_notes = defaultdict(list)


@pytest.fixture
def measured(request):
    """Attach a measured value to the criterion of the running test."""
    marker = request.node.get_closest_marker("criterion")

    def note(text):
        if marker is not None:
            _notes[marker.args[0]].append(text)

    return note


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for name, args in getattr(report, "criteria", ()):
        _outcomes[args].append((report.nodeid.split("::")[-1], report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    report.criteria = [("criterion", marker.args[0])] if marker is not None else []


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        results = _outcomes[number]
        ok = all(outcome == "passed" for _, outcome in results)
        failed = [name for name, outcome in results if outcome != "passed"]
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'} ({len(results) - len(failed)}/{len(results)} checks)"
        if failed:
            line += " failing: " + ", ".join(failed)
        terminalreporter.write_line(line)
        for note in _notes.get(number, ()):
            terminalreporter.write_line(f"    {note}")
