import sys


def pytest_terminal_summary(terminalreporter):
    """Print one verdict line per acceptance gate after the run."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "VERDICTS", None) if mod else None
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance verdicts")
    for line in lines:
        terminalreporter.write_line(line)
