import re

ACCEPTANCE_FILE = "test_acceptance.py"
_CRITERION_RE = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one pass/fail line per acceptance criterion."""
    lines = {}
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"), ("error", "ERROR")):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", "call") != "call" and outcome == "passed":
                continue
            if ACCEPTANCE_FILE not in report.nodeid:
                continue
            match = _CRITERION_RE.search(report.nodeid)
            if not match:
                continue
            number = int(match.group(1))
            name = match.group(2).replace("_", " ")
            lines[number] = f"criterion {number} ({name}): {verdict}"
    if lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for number in sorted(lines):
            terminalreporter.write_line("  " + lines[number])
