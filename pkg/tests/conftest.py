import re
import sys

_outcomes: dict[int, str] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if m and (report.when == "call" or report.failed):
        _outcomes.setdefault(int(m.group(1)), report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", {})
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        line = results.get(n)
        if line is None:
            line = f"criterion {n:2d} {'PASS' if _outcomes[n] == 'passed' else 'FAIL'}: (errored before a verdict)"
        terminalreporter.write_line(line)
