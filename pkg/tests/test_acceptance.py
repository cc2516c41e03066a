"""One test per acceptance criterion; each prints its PASS/FAIL line.

Criteria listed in ``KNOWN_LIMITS`` are reported as expected failures when
they miss their tolerance; the analysis lives in the decisions ledger.
"""

import pytest

from robust_elasticity.acceptance import CRITERIA, KNOWN_LIMITS

from conftest import ACCEPTANCE_LINES


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(acceptance_ctx, number):
    result = CRITERIA[number](acceptance_ctx)
    line = result.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    if not result.passed and number in KNOWN_LIMITS:
        pytest.xfail(KNOWN_LIMITS[number])
    assert result.passed, line
