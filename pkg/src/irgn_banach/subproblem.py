"""The convex Gauss-Newton subproblem and its nonlinear CG solver.

For a linearization ``T = F'(x_n)`` the subproblem is

    G(x) = ||y - F(x_n) - T (x - x_n)||^p + alpha * D_{xi0}(x, x0)

with ``D`` the Bregman distance of the penalty from its anchor.  Gradients
are Riesz representatives in the weighted parameter inner product, and the
CG method runs in that inner product.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import Field
from .forward import Linearization
from .penalties import Penalty, SquaredL2

log = logging.getLogger(__name__)


class DivergedEvaluation(ArithmeticError):
    pass


class UnsupportedOracle(ValueError):
    pass


@dataclass(frozen=True)
class InnerControls:
    max_iter: int = 500
    grad_tol_rel: float = 1e-8
    restart_period: int = 50
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    curvature_c2: float = 0.1
    max_refine: int = 8
    dense_jacobian_max: int = 2000

    def __post_init__(self):
        if self.max_iter < 1 or self.restart_period < 1:
            raise ValueError("max_iter and restart_period must be positive")
        if not (self.grad_tol_rel > 0 and 0 < self.armijo_c1 < 0.5
                and 0 < self.backtrack < 1 and self.initial_step > 0
                and self.armijo_c1 < self.curvature_c2 < 1 and self.max_refine >= 0):
            raise ValueError("invalid inner solver controls")


@dataclass(frozen=True, eq=False)
class SubproblemSpec:
    linearization: Linearization
    y_delta: Field
    x_n: Field
    penalty: Penalty
    alpha: float
    p: float = 2.0
    controls: InnerControls = InnerControls()

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.p >= 1:
            raise ValueError("residual exponent p must be >= 1")
        if self.y_delta.grid != self.linearization.state.grid:
            raise ValueError("data and state grids differ")

    @property
    def data_misfit(self) -> Field:
        """``y_delta - F(x_n)``."""
        return self.y_delta - self.linearization.state

    @property
    def conjugate_exponent(self) -> float:
        return np.inf if self.p == 1 else self.p / (self.p - 1)


@dataclass
class InnerResult:
    x: Field
    iterations: int
    converged: bool
    grad_norm: float
    initial_grad_norm: float
    objective_history: List[float] = field(default_factory=list)
    warning: Optional[str] = None

    def __iter__(self):
        # allows ``x, its = minimize(spec)``
        return iter((self.x, self.iterations))


class _Problem:
    """Array-level evaluation shared by the objective and the CG loop."""

    def __init__(self, spec: SubproblemSpec):
        self.spec = spec
        self.lin = spec.linearization
        self.grid = spec.x_n.grid
        self.w_param = self.grid.weights
        self.w_obs = spec.y_delta.grid.weights
        self.b = spec.data_misfit.values
        self.xn = spec.x_n.values
        self.pen = spec.penalty
        self.xi0 = spec.penalty.subgradient.values
        self.M = None
        if self.grid.node_count <= spec.controls.dense_jacobian_max:
            # T is fixed within a subproblem; probing it once is cheaper than
            # two PDE solves per CG iteration on small grids
            self.M = self.lin.jacobian() if hasattr(self.lin, "jacobian") else assemble_jacobian(self.lin)
            self.Mstar = (self.M * self.w_obs[:, None]).T / self.w_param[:, None]

    def T(self, v):
        if self.M is not None:
            return self.M @ v
        return self.lin.tangent(Field(self.grid, v)).values

    def Tstar(self, r):
        if self.M is not None:
            return self.Mstar @ r
        return self.lin.adjoint(Field(self.spec.y_delta.grid, r)).values

    def residual(self, x):
        d = x - self.xn
        return self.b - self.T(d) if np.any(d) else self.b.copy()

    def value(self, x, r):
        rn = np.sqrt(np.sum(self.w_obs * r**2))
        f = rn**self.spec.p + self.spec.alpha * self.pen.anchor_distance_values(x)
        if not np.isfinite(f):
            raise DivergedEvaluation("subproblem objective is not finite")
        return float(f)

    def line(self, x, r, d, Td):
        """``s -> (G(x + s d) - G(x), d/ds)``, evaluated without cancellation."""
        p, alpha = self.spec.p, self.spec.alpha
        wTd = self.w_obs * Td
        rn2 = float(np.dot(self.w_obs * r, r))
        A, B = float(np.dot(wTd, Td)), float(np.dot(wTd, r))
        pen = self.pen._line(x, d)
        lin0 = float(np.dot(self.w_param * self.xi0, d))

        def phi(s):
            dr2, ddr2 = s * (s * A - 2 * B), 2 * (s * A - B)
            if p == 2:
                dres, dslope = dr2, ddr2
            elif rn2 > 0:
                dres = rn2 ** (p / 2) * np.expm1(p / 2 * np.log1p(dr2 / rn2))
                dslope = p / 2 * (rn2 + dr2) ** (p / 2 - 1) * ddr2
            else:
                dres, dslope = (s * s * A) ** (p / 2), p * s ** (p - 1) * A ** (p / 2)
            dpen, dpslope = pen(s)
            value = dres + alpha * (dpen - s * lin0)
            slope = dslope + alpha * (dpslope - lin0)
            if not (np.isfinite(value) and np.isfinite(slope)):
                raise DivergedEvaluation("subproblem objective is not finite")
            return float(value), float(slope)
        return phi

    def gradient(self, x, r):
        p = self.spec.p
        rn = np.sqrt(np.sum(self.w_obs * r**2))
        g = self.spec.alpha * (self.pen._gradient(x) / self.w_param - self.xi0)
        if rn > 0 or p >= 2:
            scale = p * rn ** (p - 2) if p != 2 else 2.0
            g = g - scale * self.Tstar(r)
        return g

    def inner(self, a, b):
        return float(np.dot(self.w_param * a, b))


def assemble_jacobian(lin: Linearization) -> np.ndarray:
    """Dense matrix of ``F'(x)`` from unit-vector tangents (nodal coordinates)."""
    grid = lin.x.grid
    n = grid.node_count
    cols = np.empty((lin.state.grid.node_count, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        cols[:, j] = lin.tangent(Field(grid, e)).values
        e[j] = 0.0
    return cols


def objective_and_gradient(spec: SubproblemSpec, x: Field):
    prob = _Problem(spec)
    r = prob.residual(x.values)
    return prob.value(x.values, r), Field(prob.grid, prob.gradient(x.values, r))


def _line_search(phi, slope, c):
    """Armijo backtracking, then a few safeguarded secant steps on ``phi'``.

    ``phi(s)`` returns the objective change along the search line and its
    derivative.  Backtracking uses quadratic interpolation.  Once a step
    satisfies the Armijo condition it is refined towards the line minimizer
    until ``|phi'(s)| <= c2 |phi'(0)|``; only Armijo points that lower the
    objective further replace it.  Returns ``(step, change)``, or ``(0, 0)``
    if no acceptable step exists.
    """
    def armijo(s, v):
        return v <= c.armijo_c1 * s * slope

    s = c.initial_step
    v, dv = phi(s)
    tries = 0
    while not armijo(s, v):
        curv = v - slope * s
        sq = -slope * s * s / (2 * curv) if curv > 0 else c.backtrack * s
        s = min(max(sq, 1e-3 * s), c.backtrack * s)
        tries += 1
        if s < 1e-300 or tries > 200:
            return 0.0, 0.0
        v, dv = phi(s)
    best_s, best_v = s, v
    lo, dlo = 0.0, slope
    hi, dhi = (s, dv) if dv > 0 else (None, None)
    if dv <= 0:
        lo, dlo = s, dv
    for _ in range(c.max_refine):
        if abs(dv) <= c.curvature_c2 * abs(slope):
            break
        if hi is None:
            # minimizer lies beyond lo: secant through phi'(0) and phi'(lo), capped
            t = 4 * lo if dlo <= slope else min(lo - dlo * lo / (dlo - slope), 4 * lo)
        else:
            t = lo - dlo * (hi - lo) / (dhi - dlo)
            width = hi - lo
            t = min(max(t, lo + 0.05 * width), hi - 0.05 * width)
        v, dv = phi(t)
        if armijo(t, v) and v < best_v:
            best_s, best_v = t, v
        if dv > 0:
            hi, dhi = t, dv
        else:
            lo, dlo = t, dv
    return best_s, best_v


def minimize(spec: SubproblemSpec, x_start: Optional[Field] = None) -> InnerResult:
    """Polak-Ribiere-plus nonlinear CG with Armijo line search and restarts.

    Starts from ``x_start`` (default ``x_n``).  Stops when the weighted
    gradient norm falls below ``grad_tol_rel`` times its initial value, or
    after ``max_iter`` steps, or when the line search stalls.
    """
    c = spec.controls
    prob = _Problem(spec)
    x = (spec.x_n if x_start is None else x_start).values.copy()
    r = prob.residual(x)
    f = prob.value(x, r)
    g = prob.gradient(x, r)
    g0 = np.sqrt(prob.inner(g, g))
    history = [f]
    target = c.grad_tol_rel * g0
    if g0 == 0.0:
        return InnerResult(Field(prob.grid, x), 0, True, 0.0, 0.0, history)

    d = -g
    Td = prob.T(d)
    gnorm = g0
    k = 0
    stalled = False
    while k < c.max_iter:
        slope = prob.inner(g, d)
        if slope >= 0:
            d = -g
            Td = prob.T(d)
            slope = -gnorm**2
        s, df = _line_search(prob.line(x, r, d, Td), slope, c)
        if s == 0.0:
            stalled = True
            break
        assert df < 0, "CG step increased the objective"
        x = x + s * d
        r = r - s * Td
        f = f + df
        history.append(f)
        k += 1
        g_new = prob.gradient(x, r)
        gnorm = np.sqrt(prob.inner(g_new, g_new))
        if gnorm <= target:
            g = g_new
            break
        if k % c.restart_period == 0:
            beta = 0.0
        else:
            beta = max(0.0, prob.inner(g_new, g_new - g) / prob.inner(g, g))
        Tg = prob.T(g_new)
        d = -g_new + beta * d
        Td = -Tg + beta * Td
        g = g_new

    converged = gnorm <= target
    warning = None
    if not converged and gnorm > 1e3 * target:
        warning = (f"inner CG stopped after {k} iterations with relative gradient "
                   f"{gnorm / g0:.2e}" + (" (line search stalled)" if stalled else ""))
        log.info(warning)
    return InnerResult(Field(prob.grid, x), k, converged, float(gnorm), float(g0), history, warning)


def dense_oracle(spec: SubproblemSpec) -> Field:
    """Direct solution of the quadratic subproblem (``p = 2``, squared-L2 penalty).

    ``T`` is assembled column by column from unit-vector tangents and the
    weighted normal equations are solved densely.
    """
    if spec.p != 2 or not isinstance(spec.penalty, SquaredL2):
        raise UnsupportedOracle("dense oracle needs p = 2 and a squared-L2 penalty")
    grid = spec.x_n.grid
    n = grid.node_count
    if n > 200:
        raise UnsupportedOracle(f"dense oracle limited to 200 unknowns, got {n}")
    M = assemble_jacobian(spec.linearization)
    Wo = spec.y_delta.grid.weights
    Wp = grid.weights
    rhs_data = spec.data_misfit.values + M @ spec.x_n.values
    lhs = M.T @ (Wo[:, None] * M) + spec.alpha * np.diag(Wp)
    rhs = M.T @ (Wo * rhs_data) + 0.5 * spec.alpha * Wp * spec.penalty.subgradient.values
    return Field(grid, np.linalg.solve(lhs, rhs))
