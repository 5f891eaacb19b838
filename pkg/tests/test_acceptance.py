"""Acceptance criteria, one test each, at the required tolerances.

Every test records a [PASS]/[FAIL]/[FLAG] line; the lines are printed again,
in order, in the pytest terminal summary.
"""

import pytest

from mumarket import acceptance


@pytest.fixture(scope="module")
def ctx():
    return acceptance.Context(trade_eps=1e-10, seed=2024)


def _record(res, log):
    line = res.line()
    log.append(line)
    print(line)
    return res


@pytest.mark.parametrize("number", range(1, 12))
def test_criterion(number, ctx, acceptance_log):
    check = acceptance.CHECKS[number - 1]
    res = _record(check(ctx), acceptance_log)
    assert res.number == number
    if number == 10:
        # non-binding comparison against published numbers: reported, never failed
        assert not res.binding
        return
    assert res.passed, res.detail
