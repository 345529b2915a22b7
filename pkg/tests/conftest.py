import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance suite's per-criterion verdict lines.

    Stdout of passing tests is captured, so without this the one-line
    PASS/FAIL reports would only surface on failures.
    """
    mod = (sys.modules.get("test_acceptance")
           or sys.modules.get("tests.test_acceptance"))
    lines = getattr(mod, "REPORT_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
