"""Acceptance criteria, one test per criterion.

Each test prints one PASS/FAIL line per measured quantity.  The full report
is repeated in the terminal summary so it shows up without ``-s``.
Criteria 8 and 9 fail with the reference lattice equations; see README.
"""

import pytest

from vnls_lab import checks

REPORTS = []


@pytest.mark.parametrize("criterion", sorted(checks.ALL_CHECKS))
def test_criterion(criterion):
    res = checks.ALL_CHECKS[criterion]()
    report = res.report()
    REPORTS.append(report)
    print(report)
    assert res.seconds <= res.budget, f"over budget: {res.seconds:.1f} s > {res.budget:.0f} s"
    assert res.passed, report
