"""Verification harnesses: derivatives and adjoints, penalty invariants, rates.

The derivative and penalty suites compare against dense finite-difference
oracles and never touch the CG solver.  The rate test runs the full
iteration on a synthetic linear problem whose source condition holds by
construction and fits the log-log slope of the error against the noise level.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Union

import numpy as np

from .core import Field, Grid, RegSchedule, add_noise, l2_norm
from .forward import get_preset
from .irgn import StoppingConfig, run
from .penalties import ConvexityViolation, Penalty, make_penalty
from .subproblem import InnerControls

DOT_TOL = 1e-10
TAYLOR_BAND = (1.9, 2.1)
TAYLOR_STEPS = (1e-1, 1e-2, 1e-3, 1e-4)
JACOBIAN_TOL = 1e-6
FD_STEP = 1e-6
CONVEXITY_SLACK = 1e-10
IDENTITY_TOL = 1e-10
GRADIENT_TOL = 1e-6
RATE_BANDS = {1.0: (0.4, 0.6), 0.5: (0.23, 0.43)}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: str

    def __str__(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.value:.3e} ({self.threshold})"


@dataclass
class SuiteReport:
    title: str
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, name, value, passed, threshold):
        self.checks.append(Check(name, bool(passed), float(value), threshold))

    def format(self) -> str:
        lines = [f"{self.title}: {'PASS' if self.passed else 'FAIL'}"]
        lines += [f"  {c}" for c in self.checks]
        return "\n".join(lines)


# --- derivative suite --------------------------------------------------------

def _base_point(problem, at_lower_bound: bool, rng) -> Field:
    op = problem.operator
    grid = op.grid
    if at_lower_bound:
        return Field.constant(grid, op.lower_bound)
    return problem.truth + Field(grid, 0.1 * rng.uniform(size=grid.node_count))


def _directions(grid: Grid, rng, nonnegative: bool) -> Field:
    h = rng.standard_normal(grid.node_count)
    return Field(grid, np.abs(h) if nonnegative else h)


def _adjoint(lin, w: Field, fault):
    q = lin.adjoint(w)
    return q if fault is None else fault(q)


def dense_jacobian_fd(op, x: Field, step: float = FD_STEP) -> np.ndarray:
    """Central finite-difference Jacobian of ``op.apply`` in nodal coordinates."""
    n = x.grid.node_count
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        plus = op.apply(x + Field(x.grid, e)).values
        minus = op.apply(x - Field(x.grid, e)).values
        cols.append((plus - minus) / (2 * step))
    return np.column_stack(cols)


def derivative_suite(preset: str, *, pairs: int = 20, seed: int = 0,
                     at_lower_bound: bool = False, reduced_subdivisions: int = 10,
                     adjoint_fault: Optional[Callable[[Field], Field]] = None) -> SuiteReport:
    """Dot-product, Taylor and dense-Jacobian checks for one preset operator.

    ``adjoint_fault`` post-processes every adjoint evaluation; it exists to
    confirm that the checks notice a wrong adjoint.
    """
    rng = np.random.default_rng(seed)
    report = SuiteReport(f"derivatives {preset}" + (" (lower bound)" if at_lower_bound else ""))
    problem = get_preset(preset)
    op = problem.operator
    grid = op.grid
    x = _base_point(problem, at_lower_bound, rng)
    lin = op.linearize(x)

    worst = 0.0
    for _ in range(pairs):
        h = _directions(grid, rng, False)
        w = Field(grid, rng.standard_normal(grid.node_count))
        th = lin.tangent(h)
        lhs = th.dot(w)
        rhs = h.dot(_adjoint(lin, w, adjoint_fault))
        worst = max(worst, abs(lhs - rhs) / (l2_norm(th) * l2_norm(w)))
    report.add("dot-product max relative mismatch", worst, worst < DOT_TOL, f"< {DOT_TOL:g}")

    # directions must keep x + s h admissible; at the lower bound only h >= 0 does
    h = _directions(grid, rng, at_lower_bound) * 0.5
    fx, th = lin.state, lin.tangent(h)
    remainders = [l2_norm(op.apply(x + h * s) - fx - th * s) for s in TAYLOR_STEPS]
    slope = np.polyfit(np.log(TAYLOR_STEPS), np.log(remainders), 1)[0]
    lo, hi = TAYLOR_BAND
    report.add("Taylor remainder slope", slope, lo <= slope <= hi, f"in [{lo}, {hi}]")

    small = get_preset(preset, subdivisions=reduced_subdivisions)
    xs = _base_point(small, at_lower_bound, rng)
    lin_s = small.operator.linearize(xs)
    gs = small.operator.grid
    n = gs.node_count
    J = dense_jacobian_fd(small.operator, xs) if not at_lower_bound else _one_sided_jacobian(small.operator, xs)
    eye = np.eye(n)
    T = np.column_stack([lin_s.tangent(Field(gs, eye[j])).values for j in range(n)])
    A = np.column_stack([_adjoint(lin_s, Field(gs, eye[j]), adjoint_fault).values for j in range(n)])
    scale = max(1.0, np.max(np.abs(J)))
    jac_err = np.max(np.abs(T - J)) / scale
    report.add("tangent vs finite-difference Jacobian", jac_err, jac_err <= JACOBIAN_TOL, f"<= {JACOBIAN_TOL:g}")
    w = gs.weights
    transpose = (J.T * w[None, :]) / w[:, None]
    adj_err = np.max(np.abs(A - transpose)) / max(1.0, np.max(np.abs(transpose)))
    report.add("adjoint vs weighted Jacobian transpose", adj_err, adj_err <= JACOBIAN_TOL, f"<= {JACOBIAN_TOL:g}")
    return report


def _one_sided_jacobian(op, x: Field, step: float = FD_STEP) -> np.ndarray:
    """Second-order forward differences, for base points on the domain boundary."""
    n = x.grid.node_count
    f0 = op.apply(x).values
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        f1 = op.apply(x + Field(x.grid, e)).values
        f2 = op.apply(x + Field(x.grid, 2 * e)).values
        cols.append((-3 * f0 + 4 * f1 - f2) / (2 * step))
    return np.column_stack(cols)


# --- penalty suite -----------------------------------------------------------

def penalty_suite(penalties: Iterable[Union[str, Penalty]] = ("l2", "elasticnet", "tv", "sobolev"),
                  *, seeds: int = 10, grid: Optional[Grid] = None, lam: float = 0.01,
                  eps: float = 1e-6, p: float = 1.5) -> SuiteReport:
    """Convexity, Bregman nonnegativity, three-point identity and gradient checks.

    Entries of ``penalties`` are kind names (built on ``grid``) or ready
    penalty objects, which lets a deliberately broken penalty be probed.
    """
    grid = grid or Grid(1, 20)
    report = SuiteReport("penalties")
    for entry in penalties:
        pen = make_penalty(entry, grid, lam=lam, eps=eps, p=p) if isinstance(entry, str) else entry
        g = pen.grid
        name = pen.kind
        worst_convex = -np.inf
        min_bregman = np.inf
        self_distance = 0.0
        worst_identity = 0.0
        worst_grad = 0.0
        violation = None
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            x, z, y = (Field(g, rng.standard_normal(g.node_count)) for _ in range(3))
            t = rng.uniform(0.1, 0.9)
            mid = pen.value(x * t + z * (1 - t))
            bound = t * pen.value(x) + (1 - t) * pen.value(z)
            worst_convex = max(worst_convex, mid - bound)
            try:
                xi_x, xi_z = pen.l2_gradient(x), pen.l2_gradient(z)
                d1 = pen.bregman(z, x, xi_x)
                d0 = pen.bregman(x, x, xi_x)
                min_bregman = min(min_bregman, d1)
                self_distance = max(self_distance, abs(d0))
                # three-point identity with base x, x1 = z, x2 = y
                lhs = pen.bregman(y, x, xi_x) - pen.bregman(z, x, xi_x)
                rhs = pen.bregman(y, z, xi_z) + (xi_z - xi_x).dot(y - z)
                scale = max(1.0, abs(pen.value(y)), abs(pen.value(z)), abs(pen.value(x)))
                worst_identity = max(worst_identity, abs(lhs - rhs) / scale)
            except ConvexityViolation as exc:
                violation = str(exc)
            h = Field(g, rng.standard_normal(g.node_count))
            fd = (pen.value(x + h * FD_STEP) - pen.value(x - h * FD_STEP)) / (2 * FD_STEP)
            an = float(np.dot(pen.gradient(x).values, h.values))
            worst_grad = max(worst_grad, abs(fd - an) / max(abs(an), 1e-300))
        report.add(f"{name} convexity (midpoint excess)", worst_convex,
                   worst_convex <= CONVEXITY_SLACK, f"<= {CONVEXITY_SLACK:g}")
        if violation is not None:
            report.add(f"{name} Bregman nonnegativity", -np.inf, False, violation)
        else:
            report.add(f"{name} Bregman nonnegativity", min_bregman, min_bregman >= 0, ">= 0")
            report.add(f"{name} Bregman distance to itself", self_distance, self_distance == 0, "== 0")
            report.add(f"{name} three-point identity", worst_identity,
                       worst_identity <= IDENTITY_TOL, f"<= {IDENTITY_TOL:g} (relative)")
        report.add(f"{name} gradient vs central difference", worst_grad,
                   worst_grad < GRADIENT_TOL, f"< {GRADIENT_TOL:g} (relative)")
    return report


# --- convergence rates ---------------------------------------------------------

class DiagonalOperator:
    """Linear test operator ``(T x)_i = sigma_i x_i`` with weights on both sides.

    Because both inner products use the same weights, ``T`` is self-adjoint.
    """

    kind = "diagonal"
    lower_bound = -np.inf

    def __init__(self, grid: Grid, sigma: np.ndarray):
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != (grid.node_count,):
            raise ValueError("sigma must have one entry per node")
        self.grid = grid
        self.sigma = sigma

    def check_admissible(self, x: Field) -> None:
        pass

    def clip(self, x: Field) -> Field:
        return x

    def apply(self, x: Field) -> Field:
        return Field(self.grid, self.sigma * x.values)

    __call__ = apply

    def linearize(self, x: Field) -> "DiagonalLinearization":
        return DiagonalLinearization(self, x, self.apply(x))

    def describe(self) -> dict:
        return {"kind": self.kind, "subdivisions": self.grid.subdivisions}


@dataclass(frozen=True, eq=False)
class DiagonalLinearization:
    op: DiagonalOperator
    x: Field
    state: Field

    def tangent(self, h: Field) -> Field:
        return self.op.apply(h)

    def adjoint(self, w: Field) -> Field:
        return self.op.apply(w)


@dataclass(frozen=True)
class RateTestSpec:
    """Synthetic rate experiment.

    ``sigma(t) = exp(-decay t)`` on the grid nodes and the truth is
    ``beta * sigma**nu``, i.e. ``(T^*T)^(nu/2)`` applied to a constant, so the
    source condition holds with exponent ``nu``.  The predicted slope of
    log(error) against log(delta) is ``nu / (p - 1 + nu)``.
    """

    nu: float = 1.0
    beta: float = 1.0
    p: float = 2.0
    deltas: Sequence[float] = tuple(np.logspace(-2, -5, 7))
    seeds: int = 5
    rule: int = 3
    tau: float = 1.05
    decay: float = 10.0
    subdivisions: int = 100
    controls: InnerControls = InnerControls()

    def __post_init__(self):
        d = list(self.deltas)
        if not d or any(x <= 0 for x in d) or any(a <= b for a, b in zip(d, d[1:])):
            raise ValueError("deltas must be positive and strictly decreasing")
        if not 0 < self.nu <= 1:
            raise ValueError("nu must lie in (0, 1]")
        if self.rule not in (2, 3):
            raise ValueError("rates are established for rules 2 and 3")
        if self.p != 2:
            raise ValueError("the synthetic rate problem uses p = 2")
        if self.seeds < 1 or self.beta <= 0:
            raise ValueError("seeds and beta must be positive")

    @property
    def predicted_slope(self) -> float:
        return self.nu / (self.p - 1 + self.nu)

    def problem(self):
        grid = Grid(1, self.subdivisions)
        sigma = np.exp(-self.decay * grid.axis)
        return DiagonalOperator(grid, sigma), Field(grid, self.beta * sigma**self.nu)


@dataclass(frozen=True)
class RateRow:
    delta: float
    seed: int
    n_delta: Optional[int]
    error: float


@dataclass
class RateReport:
    spec: RateTestSpec
    rows: List[RateRow]
    deltas: List[float]
    median_errors: List[float]
    slope: float
    complete: bool

    @property
    def band(self):
        return RATE_BANDS.get(self.spec.nu)

    @property
    def passed(self) -> bool:
        band = self.band
        return self.complete and band is not None and band[0] <= self.slope <= band[1]

    def format(self) -> str:
        band = self.band
        verdict = "PASS" if self.passed else "FAIL"
        lines = [f"rates nu={self.spec.nu:g} rule={self.spec.rule}: {verdict}",
                 f"  slope {self.slope:.4f} (predicted {self.spec.predicted_slope:.4f}, "
                 f"band {band if band else 'none'})"]
        if not self.complete:
            lines.append("  incomplete: some runs failed")
        for d, e in zip(self.deltas, self.median_errors):
            lines.append(f"  delta {d:.3e}  median error {e:.6e}")
        return "\n".join(lines)


def _rate_job(args):
    spec, delta, seed = args
    op, truth = spec.problem()
    y = add_noise(op.apply(truth), delta, seed)
    penalty = make_penalty("l2", op.grid)
    res = run(op, penalty, y, delta, RegSchedule(1.0, 0.5),
              StoppingConfig(spec.rule, spec.tau), truth=truth, controls=spec.controls)
    ok = res.stop_reason == "rule-satisfied"
    return RateRow(delta, seed, res.n_delta, res.final_error if ok else float("nan"))


def rate_test(spec: RateTestSpec = RateTestSpec(), jobs: int = 1) -> RateReport:
    """Run every (delta, seed) pair, then fit log(median error) against log(delta)."""
    tasks = [(spec, float(d), s) for d in spec.deltas for s in range(spec.seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_rate_job, tasks))
    else:
        rows = [_rate_job(t) for t in tasks]
    complete = all(np.isfinite(r.error) for r in rows)
    deltas, medians = [], []
    for d in spec.deltas:
        errs = [r.error for r in rows if r.delta == float(d) and np.isfinite(r.error)]
        if errs:
            deltas.append(float(d))
            medians.append(float(np.median(errs)))
    slope = float(np.polyfit(np.log(deltas), np.log(medians), 1)[0]) if len(deltas) > 1 else float("nan")
    return RateReport(spec, rows, deltas, medians, slope, complete)


def write_rates_csv(report: RateReport, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["delta", "seed", "n_delta", "error"])
        for r in report.rows:
            out.writerow([repr(r.delta), r.seed, "" if r.n_delta is None else r.n_delta, repr(r.error)])
