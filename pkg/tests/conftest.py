from __future__ import annotations

import pytest

from builders import build_band_fixture, build_counter_fixture, build_random_fixture

_acceptance_results: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        previous = _acceptance_results.get(number, ("PASS", title))[0]
        status = "FAIL" if failed or previous == "FAIL" else "PASS"
        if report.skipped:
            status = "SKIP"
        _acceptance_results[number] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance_results):
        status, title = _acceptance_results[number]
        terminalreporter.write_line(f"[{status}] AC{number:>2} {title}")


@pytest.fixture(scope="session")
def counter_fixture(tmp_path_factory):
    base = tmp_path_factory.mktemp("counter")
    return build_counter_fixture(base / "inputs" / "CAD_Contract.xlsx")


@pytest.fixture(scope="session")
def band_fixture(tmp_path_factory):
    base = tmp_path_factory.mktemp("bands")
    return build_band_fixture(base / "inputs" / "CAD_Contract.xlsx")


@pytest.fixture(scope="session")
def large_fixture(tmp_path_factory):
    """A 50,000-row extract over 40 schools and 60 subjects."""
    base = tmp_path_factory.mktemp("large")
    return build_random_fixture(
        base / "inputs" / "CAD_Contract.xlsx", 50_000, seed=7, schools=40, subjects=60
    )
