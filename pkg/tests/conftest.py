"""Terminal summary for the acceptance suite.

Every test in test_acceptance.py is one acceptance criterion; after the
run each gets a single machine-readable verdict line:

    [ACCEPTANCE] <name>: PASSED|FAILED
"""

_ACCEPTANCE_FILE = "test_acceptance.py"
_verdicts: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if _ACCEPTANCE_FILE not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    name = name[len("test_"):] if name.startswith("test_") else name
    if report.when == "call" and report.outcome == "passed":
        _verdicts[name] = "PASSED"
    elif report.outcome == "failed":
        _verdicts[name] = "FAILED"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _verdicts:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, verdict in _verdicts.items():
        terminalreporter.write_line(f"[ACCEPTANCE] {name}: {verdict}")
