"""Shared pytest hooks: acceptance criteria report one pass/fail line each."""

from collections import defaultdict

import pytest

_results: dict[int, list[tuple[str, bool]]] = defaultdict(list)
_titles: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    _titles[number] = title
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _results[number].append((item.name, rep.passed))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        outcomes = _results[number]
        ok = all(passed for _, passed in outcomes)
        failed = [name for name, passed in outcomes if not passed]
        extra = f"  (failed: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {_titles[number]}{extra}")
