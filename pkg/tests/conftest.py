from __future__ import annotations

import io
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from pel.evaluator import Interpreter
from pel.llm import ScriptedMock

TESTS = Path(__file__).parent
CORPUS = TESTS / "corpus"
GOLDEN = TESTS / "golden"
DATA = Path(__file__).parents[1] / "src" / "pel" / "data"

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def run(source: str, backend=None, out=None):
    interp = Interpreter(backend=backend, out=out or io.StringIO())
    return interp.run(source)


def interp_with_output(backend=None) -> tuple[Interpreter, io.StringIO]:
    out = io.StringIO()
    return Interpreter(backend=backend, out=out), out


@pytest.fixture
def interp():
    return Interpreter(out=io.StringIO())


@pytest.fixture
def mock():
    return ScriptedMock()



# -- acceptance summary: one line per criterion ---------------------------------

_criteria: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().user_properties.append(("criterion", mark.args))


def pytest_runtest_logreport(report):
    found = [v for k, v in report.user_properties if k == "criterion"]
    if not found:
        return
    number, title = found[0]
    entry = _criteria.setdefault(number, [title, True])
    if report.failed or (report.skipped and report.when == "call"):
        entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
