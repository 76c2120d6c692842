import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)")
_outcomes: dict[int, tuple[str, str]] = {}
_notes: dict[int, str] = {}


@pytest.fixture
def note(request):
    """Attach a one-line measurement to the current acceptance criterion."""
    m = _CRITERION.search(request.node.name)

    def _note(text):
        if m:
            _notes[int(m.group(1))] = str(text)

    return _note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = _CRITERION.search(item.name)
    if m is None:
        return
    k = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.failed):
        _outcomes[k] = ("PASS" if report.passed else "FAIL", item.name)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_outcomes):
        status, name = _outcomes[k]
        detail = _notes.get(k, "")
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {name}" + (f"  [{detail}]" if detail else ""))
