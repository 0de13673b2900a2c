import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irgn_banach.core import Field, RegSchedule, add_noise
from irgn_banach.forward import reaction1d_paper
from irgn_banach.irgn import (INNER_FAILURE, MAX_OUTER, RULE_SATISFIED, StoppingConfig, run,
                              scaling_check, stopping_indices)
from irgn_banach.penalties import make_penalty
from irgn_banach.verify import DiagonalOperator

residual_lists = st.lists(st.floats(0.0, 10.0, allow_nan=False), min_size=1, max_size=30)


def test_stopping_indices_examples():
    assert stopping_indices([3.0, 2.0, 1.0, 1.08, 1.0, 1.0], 1.05, 1.0) == (2, 3, 5)
    assert stopping_indices([3.0, 2.0, 1.04, 1.2, 1.0, 0.9], 1.05, 1.0) == (2, 5, 5)
    assert stopping_indices([0.5, 9.0], 1.05, 1.0) == (0, 0, 0)
    assert stopping_indices([5.0, 4.0], 1.05, 1.0) == (None, None, None)


def test_rule3_needs_two_steps():
    # max(r1, r0) is never checked; with r = [2, 1, 1] rule 3 stops at n = 2
    assert stopping_indices([2.0, 1.0, 1.0], 1.05, 1.0)[2] == 2


@settings(max_examples=200, deadline=None)
@given(residual_lists, st.floats(1.01, 3.0), st.floats(0.01, 5.0))
def test_stopping_index_ordering_and_rule1_postcondition(r, tau, delta):
    n1, n2, n3 = stopping_indices(r, tau, delta)
    level = tau * delta
    if n1 is not None:
        assert r[n1] <= level and all(rn > level for rn in r[:n1])
    if None not in (n1, n2, n3):
        assert n1 <= n2 <= n3
    if n3 is not None:
        assert n2 is not None
    if n2 is not None:
        assert n1 is not None


def test_stopping_config_validation():
    for bad in [dict(rule=4), dict(tau=1.0), dict(max_outer=-1)]:
        with pytest.raises(ValueError):
            StoppingConfig(**bad)


def _small_run(rule=1, delta=1e-3, max_outer=60, seed=0):
    prob = reaction1d_paper(20)
    g = prob.operator.grid
    y = add_noise(prob.exact_data(), delta, seed) if delta > 0 else prob.exact_data()
    pen = make_penalty("l2", g)
    return run(prob.operator, pen, y, delta, RegSchedule(1.0, 0.5),
               StoppingConfig(rule, 1.05, max_outer), truth=prob.truth)


@pytest.mark.parametrize("rule", [1, 2, 3])
def test_run_stops_by_rule(rule):
    res = _small_run(rule)
    assert res.stop_reason == RULE_SATISFIED
    assert res.n_delta == res.records[-1].n == len(res.records) - 1
    assert res.records[-1].inner_iterations == 0
    r = res.residuals
    level = 1.05 * 1e-3
    if rule == 1:
        assert r[-1] <= level < min(r[:-1])
    assert all(res.records[k].alpha == 0.5**k for k in range(len(r)))
    assert res.final.equals(res.iterates[-1])


def test_run_noise_free_hits_max_outer():
    res = _small_run(delta=0.0, max_outer=5)
    assert res.stop_reason == MAX_OUTER
    assert len(res.records) == 6
    assert res.stop_indices == {1: None, 2: None, 3: None}


def test_run_rejects_negative_delta():
    with pytest.raises(ValueError):
        _small_run(delta=-1.0)


def test_run_reports_inner_failure():
    class Broken(DiagonalOperator):
        def linearize(self, x):
            if np.max(np.abs(x.values)) > 0:
                from irgn_banach.forward import DomainError
                raise DomainError("outside domain")
            return super().linearize(x)

    prob = reaction1d_paper(10)
    g = prob.operator.grid
    op = Broken(g, np.ones(g.node_count))
    y = Field.constant(g, 1.0)
    res = run(op, make_penalty("l2", g), y, 1e-3, RegSchedule(1.0, 0.5))
    assert res.stop_reason == INNER_FAILURE
    assert res.warnings and "forward solve failed" in res.warnings[0]


def test_scaling_check_reports_quantities():
    prob = reaction1d_paper(20)
    pen = make_penalty("l2", prob.operator.grid)
    report = scaling_check(prob.operator, pen, RegSchedule(1.0, 0.5))
    assert report.operator_norm > 0
    assert report.satisfied == (report.operator_norm**2 <= 1.0)
    tight = scaling_check(prob.operator, pen, RegSchedule(report.operator_norm**2 / 2, 0.5))
    assert not tight.satisfied
    assert tight.suggested_alpha0 == pytest.approx(report.operator_norm**2, rel=1e-6)
    assert "suggest" in str(tight)


def test_noise_free_reaction_residual_after_25_steps():
    prob = reaction1d_paper()
    pen = make_penalty("l2", prob.operator.grid)
    res = run(prob.operator, pen, prob.exact_data(), 1e-12, RegSchedule(1.0, 0.5),
              StoppingConfig(1, 1.05, 25), truth=prob.truth)
    assert res.stop_reason == MAX_OUTER and res.records[-1].n == 25
    assert res.records[-1].residual < 1e-6
