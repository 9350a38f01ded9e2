"""The acceptance battery at pinned seeds and tolerances, one line per criterion.

The whole battery runs once per session (the weak identity at 2e5 paths
dominates, a few minutes on one core); each criterion is then reported and
asserted separately.
"""
import pytest

from jumpflow.acceptance import CRITERIA, run_suite

pytestmark = pytest.mark.slow


@pytest.fixture(scope="session")
def results():
    return {r.id: r for r in run_suite(seed=0, tolerance_scale=1.0)}


@pytest.mark.parametrize("cid", sorted(CRITERIA), ids=[f"c{c}-{CRITERIA[c][0].replace(' ', '-')}" for c in sorted(CRITERIA)])
def test_criterion(results, cid, capsys):
    res = results[cid]
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.failures
