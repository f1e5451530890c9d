"""Per-criterion reporting for the acceptance suite.

Tests tagged ``@pytest.mark.criterion(n, "title")`` are grouped by ``n``; the
terminal summary prints one PASS/FAIL line per criterion, where a criterion
passes only if every test tagged with it passed.
"""

import pytest

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _results.setdefault(number, {"title": title, "outcomes": [], "notes": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    entry = _results[mark.args[0]]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        entry["outcomes"].append(report.passed)
        entry["notes"].extend(v for k, v in item.user_properties if k == "detail")


@pytest.fixture
def detail(record_property):
    """Attach a one-line measurement to the criterion summary."""

    def add(text):
        record_property("detail", text)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        ran = entry["outcomes"]
        status = "PASS" if ran and all(ran) else ("NOT RUN" if not ran else "FAIL")
        tr.write_line(f"criterion {number:2d}: {status}  {entry['title']} ({sum(ran)}/{len(ran)} checks)")
        for note in entry["notes"]:
            tr.write_line(f"               {note}")
