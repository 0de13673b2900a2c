"""Outer iteratively regularized Gauss-Newton loop and stopping rules."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .core import Field, IterationRecord, RegSchedule, l2_norm
from .forward import DomainError, ForwardOperator, estimate_operator_norm
from .linalg import SolverError
from .penalties import Penalty
from .subproblem import DivergedEvaluation, InnerControls, SubproblemSpec, minimize

log = logging.getLogger(__name__)

RULE_SATISFIED = "rule-satisfied"
MAX_OUTER = "max_outer"
INNER_FAILURE = "inner-failure"


@dataclass(frozen=True)
class StoppingConfig:
    rule: int = 1
    tau: float = 1.05
    max_outer: int = 60

    def __post_init__(self):
        if self.rule not in (1, 2, 3):
            raise ValueError("rule must be 1, 2 or 3")
        if not self.tau > 1:
            raise ValueError("tau must exceed 1")
        if self.max_outer < 0:
            raise ValueError("max_outer must be nonnegative")


def stopping_indices(residuals, tau: float, delta: float) -> Tuple[Optional[int], ...]:
    """Stopping indices of the three rules for one residual sequence.

    Rule 1: first n with r_n <= tau*delta.
    Rule 2: 0 if r_0 <= tau*delta, else first n >= 1 with (r_n + r_{n-1})/2 <= tau*delta.
    Rule 3: 0 if r_0 <= tau*delta, else first n >= 2 with max(r_n, r_{n-1}) <= tau*delta.

    An index is ``None`` if the sequence is too short to reach it.
    """
    r = list(residuals)
    if not r:
        raise ValueError("empty residual sequence")
    level = tau * delta
    n1 = next((n for n, rn in enumerate(r) if rn <= level), None)
    if r[0] <= level:
        return n1, 0, 0
    n2 = next((n for n in range(1, len(r)) if (r[n] + r[n - 1]) / 2 <= level), None)
    n3 = next((n for n in range(2, len(r)) if max(r[n], r[n - 1]) <= level), None)
    return n1, n2, n3


@dataclass
class RunResult:
    records: List[IterationRecord]
    stop_indices: Dict[int, Optional[int]]
    final: Field
    stop_reason: str
    delta: float
    rule: int
    tau: float
    iterates: List[Field] = field(default_factory=list, repr=False)
    warnings: List[str] = field(default_factory=list)

    @property
    def n_delta(self) -> Optional[int]:
        return self.stop_indices.get(self.rule)

    @property
    def residuals(self) -> List[float]:
        return [r.residual for r in self.records]

    @property
    def total_inner_iterations(self) -> int:
        return sum(r.inner_iterations for r in self.records)

    @property
    def final_error(self) -> Optional[float]:
        return self.records[-1].error_to_truth


def run(op: ForwardOperator, penalty: Penalty, y_delta: Field, delta: float,
        schedule: RegSchedule, stopping: StoppingConfig = StoppingConfig(),
        truth: Optional[Field] = None, p: float = 2.0,
        controls: InnerControls = InnerControls()) -> RunResult:
    """Iterate ``x_{n+1} = argmin ||y - F(x_n) - F'(x_n)(x - x_n)||^p + alpha_n D(x, x0)``.

    Starts at the penalty anchor.  After every subproblem the iterate is
    clipped to the operator's pointwise lower bound.  The configured rule
    decides when to stop; the indices of all three rules are recorded from
    the same residual sequence.  With ``delta == 0`` only ``max_outer`` stops.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    x = penalty.anchor
    op.check_admissible(x)
    records: List[IterationRecord] = []
    iterates: List[Field] = []
    warnings: List[str] = []
    residuals: List[float] = []
    indices = (None, None, None)
    reason = MAX_OUTER

    n = 0
    while True:
        alpha = schedule.alpha(n)
        try:
            lin = op.linearize(x)
        except (DomainError, SolverError) as exc:
            warnings.append(f"forward solve failed at n={n}: {exc}")
            reason = INNER_FAILURE
            break
        residual = l2_norm(lin.state - y_delta)
        residuals.append(residual)
        error = None if truth is None else l2_norm(x - truth)
        iterates.append(x)
        if delta > 0:
            indices = stopping_indices(residuals, stopping.tau, delta)
        if indices[stopping.rule - 1] is not None:
            records.append(IterationRecord(n, alpha, residual, 0, error))
            reason = RULE_SATISFIED
            break
        if n >= stopping.max_outer:
            records.append(IterationRecord(n, alpha, residual, 0, error))
            reason = MAX_OUTER
            break
        spec = SubproblemSpec(lin, y_delta, x, penalty, alpha, p, controls)
        try:
            inner = minimize(spec)
        except (DivergedEvaluation, DomainError, SolverError) as exc:
            records.append(IterationRecord(n, alpha, residual, 0, error))
            warnings.append(f"subproblem failed at n={n}: {exc}")
            reason = INNER_FAILURE
            break
        if inner.warning:
            warnings.append(f"n={n}: {inner.warning}")
        records.append(IterationRecord(n, alpha, residual, inner.iterations, error))
        log.debug("n=%d alpha=%.3e residual=%.6e inner=%d", n, alpha, residual, inner.iterations)
        x = op.clip(inner.x)
        n += 1

    return RunResult(
        records=records,
        stop_indices={k + 1: v for k, v in enumerate(indices)},
        final=iterates[-1] if iterates else x,
        stop_reason=reason,
        delta=delta,
        rule=stopping.rule,
        tau=stopping.tau,
        iterates=iterates,
        warnings=warnings,
    )


@dataclass(frozen=True)
class ScalingReport:
    operator_norm: float
    p: float
    alpha0: float
    satisfied: bool
    suggested_alpha0: Optional[float]

    def __str__(self):
        verdict = "ok" if self.satisfied else f"violated, suggest alpha0 >= {self.suggested_alpha0:.4g}"
        return f"||F'(x0)|| ~ {self.operator_norm:.4g}; ||T||^p <= alpha0={self.alpha0:g}: {verdict}"


def scaling_check(op: ForwardOperator, penalty: Penalty, schedule: RegSchedule,
                  p: float = 2.0, iterations: int = 50) -> ScalingReport:
    """Advisory check of ``||F'(x0)||^p <= alpha0`` (convexity constant taken as 1)."""
    norm = estimate_operator_norm(op.linearize(penalty.anchor), iterations)
    ok = norm**p <= schedule.alpha0
    return ScalingReport(norm, p, schedule.alpha0, ok, None if ok else norm**p)
