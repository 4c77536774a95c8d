"""Acceptance criteria 1-11, one test each, each printing a PASS/FAIL line."""
import pytest

from dopesym.acceptance import CRITERIA

_LINES = {}


@pytest.fixture(scope="module", autouse=True)
def _summary(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is not None and _LINES:
        reporter.write_line("")
        reporter.write_line("acceptance summary:")
        for n in sorted(_LINES):
            reporter.write_line(_LINES[n])


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    res = CRITERIA[number]()
    _LINES[number] = res.line()
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
