from __future__ import annotations

import _acceptance


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    tr = terminalreporter
    tr.section("acceptance checklist")
    for number, name in _acceptance.EXPECTED:
        if number == 10:
            verdict = "MANUAL (see README, excluded from automated runs)"
        elif number not in _acceptance.results:
            verdict = "NOT RUN"
        else:
            verdict = "PASS" if _acceptance.results[number] else "FAIL"
        tr.write_line(f"criterion {number:2d} [{name}]: {verdict}")
