from __future__ import annotations

import pytest

from srfdielectric import dataset


@pytest.fixture(scope="session")
def campaign(tmp_path_factory):
    """Noiseless synthetic campaign built from the bundled reference sheet."""
    return dataset.generate(tmp_path_factory.mktemp("campaign"))


_criteria: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    number, title = marker
    outcomes = _criteria.setdefault(number, (title, []))[1]
    if report.when == "call" or report.outcome != "passed":
        outcomes.append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result()._criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcomes = _criteria[number]
        ok = bool(outcomes) and all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}")
