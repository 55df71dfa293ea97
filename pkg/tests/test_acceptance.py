"""Runs every numbered acceptance criterion at its stated tolerance.

The PASS/FAIL line of each criterion is printed immediately (visible with
``-s``) and repeated in the terminal summary.
"""

import pytest

from ctrcbo.acceptance import CRITERIA

RESULTS = []


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    result = CRITERIA[number]()
    RESULTS.append(result)
    print(result.line())
    assert result.passed, result.line()
