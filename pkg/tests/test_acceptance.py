"""Acceptance gate: the twelve criteria at their stated tolerances.

Each test runs one verifier from :mod:`roughshe.checks` at its default
budget and prints its one-line verdict.  A criterion passes only with
status ``pass`` (``inconclusive`` is accepted solely for the Feynman-Kac
comparison, where a failed heavy-tail diagnostic is not a failure).
"""

import pytest

from roughshe.checks import CHECKS, INCONCLUSIVE, PASS, VerifyContext, run_check

RESULTS = []


@pytest.fixture(scope="module")
def ctx():
    return VerifyContext(alpha=1.5, seed=0)


@pytest.mark.slow
@pytest.mark.parametrize("spec", CHECKS, ids=[f"criterion{c.criterion:02d}-{c.id}" for c in CHECKS])
def test_criterion(spec, ctx):
    res = run_check(spec, ctx)
    line = res.line()
    RESULTS.append(line)
    print(line)
    allowed = (PASS, INCONCLUSIVE) if spec.id == "moments.feynman_kac" else (PASS,)
    assert res.status in allowed, line
