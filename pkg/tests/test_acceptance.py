"""Acceptance gate: every criterion at its stated tolerance, one PASS/FAIL line each.

Runtime budgets are asserted too.  The two budgets stated for 8-way
parallel runs are scaled by 8 / (available cores, at most 8).
"""

import os

import pytest

from tensegrity.reproduction import CRITERIA, run_criterion

JOBS = os.cpu_count() or 1

# criterion number -> (seconds, stated for parallel execution)
BUDGETS = {
    1: (60.0, False),
    2: (5.0, False),
    3: (300.0, True),
    8: (180.0, False),
    9: (120.0, False),
    10: (900.0, True),
}

RESULT_LINES = []


def budget(number):
    if number not in BUDGETS:
        return None
    seconds, parallel = BUDGETS[number]
    return seconds * 8 / min(JOBS, 8) if parallel else seconds


@pytest.mark.acceptance
@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"{c.number:02d}-{c.key}" for c in CRITERIA])
def test_criterion(criterion):
    result = run_criterion(criterion, seed=0, jobs=JOBS)
    line = result.line()
    RESULT_LINES.append(line)
    print(line)
    assert result.passed, line
    limit = budget(criterion.number)
    if limit is not None:
        assert result.seconds < limit, f"{line} (budget {limit:.0f}s)"
