import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from asisim.toy import toy_layout  # noqa: E402
from asisim.world import default_layout  # noqa: E402


@pytest.fixture(scope="session")
def office():
    return default_layout()


@pytest.fixture(scope="session")
def toy():
    return toy_layout()


# -- acceptance reporting: one PASS/FAIL line per numbered criterion --------------

_criteria: dict[int, tuple[str, bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when == "teardown" and rep.passed:
        return
    if rep.when == "call" or rep.failed:
        num, title = mark.args
        ok = _criteria.get(num, (title, True))[1] and rep.passed
        _criteria[num] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, ok = _criteria[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {title}")
