import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

# (number, title, passed, seconds, detail) rows filled in by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, seconds, detail in sorted(ACCEPTANCE):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {title} ({seconds:.2f} s)"
        terminalreporter.write_line(line + (f" -- {detail}" if detail else ""))
