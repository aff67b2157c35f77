"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines, or use
``infsum verify`` for the same table outside pytest.
"""

import pytest

from infsum.verification import CRITERIA, run_check


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"c{c[0]:02d}" for c in CRITERIA])
def test_criterion(number):
    res = run_check(number)
    print("\n" + res.line())
    assert res.passed, res.line()
