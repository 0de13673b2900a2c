"""Parameter-to-state maps for the elliptic identification problems.

* :class:`Reaction1D` / :class:`Reaction2D`: ``-u'' + c u = f`` (resp.
  ``-Laplace u + c u = f``) with Dirichlet data, finite differences.
* :class:`Diffusion1D`: ``-(a u')' = f`` with Dirichlet data, P1 elements.

Parameters and states are nodal fields on the same grid.  Every operator has
a symmetric interior system matrix ``A(x)``, so the tangent and the adjoint
share one factorization held by a :class:`Linearization`.  Adjoints are taken
with respect to the weighted (discrete L2) inner products on both sides.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .core import Field, Grid, InvalidFieldError, l2_norm
from .linalg import SolverError, Thomas, gauss_seidel_2d


class DomainError(ValueError):
    """The parameter lies outside the operator's domain of definition."""


class ForwardOperator:
    """Base class.  Subclasses provide the interior system and its derivative."""

    kind = "abstract"
    lower_bound = 0.0

    def __init__(self, grid: Grid, source: Field, boundary: Optional[Field] = None):
        if source.grid != grid:
            raise InvalidFieldError("source lives on a different grid")
        if boundary is None:
            boundary = Field.zeros(grid)
        if boundary.grid != grid:
            raise InvalidFieldError("boundary data live on a different grid")
        self.grid = grid
        self.source = source
        self.boundary = boundary
        self.interior = np.flatnonzero(~grid.boundary_mask)

    # hooks
    def _factor(self, x: np.ndarray):
        raise NotImplementedError

    def _state_rhs(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _tangent_rhs(self, x, u, h) -> np.ndarray:
        raise NotImplementedError

    def _adjoint_map(self, x, u, z) -> np.ndarray:
        """Nodal coefficients ``q`` with ``z^T A'(x)[h] u = sum_i q_i h_i``, sign included."""
        raise NotImplementedError

    def check_admissible(self, x: Field) -> None:
        raise NotImplementedError

    def clip(self, x: Field) -> Field:
        return Field(self.grid, np.maximum(x.values, self.lower_bound))

    def _values(self, x: Field) -> np.ndarray:
        if x.grid != self.grid:
            raise InvalidFieldError("parameter lives on a different grid")
        return x.values

    def linearize(self, x: Field) -> "Linearization":
        self.check_admissible(x)
        xv = self._values(x)
        solver = self._factor(xv)
        u = self.boundary.values.copy()
        u[self.interior] = solver.solve(self._state_rhs(xv))
        return Linearization(self, x, Field(self.grid, u), solver)

    def apply(self, x: Field) -> Field:
        return self.linearize(x).state

    __call__ = apply

    def describe(self) -> dict:
        return {"kind": self.kind, "subdivisions": self.grid.subdivisions}


@dataclass(frozen=True, eq=False)
class Linearization:
    """``F`` linearized at ``x``: cached state and system factorization."""

    op: ForwardOperator
    x: Field
    state: Field
    solver: object

    def _embed(self, interior_values):
        out = np.zeros(self.op.grid.node_count)
        out[self.op.interior] = interior_values
        return out

    def tangent(self, h: Field) -> Field:
        """``F'(x) h``."""
        hv = self.op._values(h)
        rhs = self.op._tangent_rhs(self.x.values, self.state.values, hv)
        return Field(self.op.grid, self._embed(self.solver.solve(rhs)))

    def jacobian(self) -> np.ndarray:
        """Dense matrix of ``F'(x)`` in nodal coordinates, from one multi-column solve."""
        n = self.op.grid.node_count
        eye = np.eye(n)
        rhs = np.column_stack([self.op._tangent_rhs(self.x.values, self.state.values, eye[j])
                               for j in range(n)])
        out = np.zeros((self.state.grid.node_count, n))
        out[self.op.interior] = self.solver.solve(rhs)
        return out

    def adjoint(self, w: Field) -> Field:
        """``F'(x)^* w`` in the weighted inner products."""
        wv = self.op._values(w)
        weights = self.op.grid.weights
        z = self._embed(self.solver.solve((weights * wv)[self.op.interior]))
        q = self.op._adjoint_map(self.x.values, self.state.values, z)
        return Field(self.op.grid, q / weights)


class Reaction1D(ForwardOperator):
    """``-u'' + c u = f`` on [0, 1], three-point stencil, Thomas algorithm.

    The domain is ``{c : ||min(c, 0)|| <= gamma0}``, an L2 neighbourhood of
    the nonnegative cone, provided the discrete operator stays positive
    definite.  :meth:`clip` is the metric projection onto that set.
    """

    kind = "reaction1d"

    def __init__(self, grid, source, boundary=None, gamma0: float = 1.0):
        if grid.dimension != 1:
            raise ValueError("Reaction1D needs a 1D grid")
        super().__init__(grid, source, boundary)
        self.gamma0 = gamma0

    def check_admissible(self, x):
        neg = l2_norm(Field(self.grid, np.minimum(self._values(x), 0.0)))
        if neg > self.gamma0 * (1 + 1e-12):
            raise DomainError(f"negative part of c has norm {neg:.3g} > {self.gamma0}")

    def clip(self, x):
        v = self._values(x)
        neg = np.minimum(v, 0.0)
        size = l2_norm(Field(self.grid, neg))
        if size <= self.gamma0:
            return x
        return Field(self.grid, np.maximum(v, 0.0) + (self.gamma0 / size) * neg)

    def _factor(self, c):
        m = self.grid.subdivisions - 1
        inv_h2 = 1.0 / self.grid.spacing**2
        off = np.full(m, -inv_h2)
        solver = Thomas(off, 2 * inv_h2 + c[1:-1], off)
        if not solver.positive_definite:
            raise DomainError("reaction operator is not positive definite at this c")
        return solver

    def _state_rhs(self, c):
        rhs = self.source.values[1:-1].copy()
        g = self.boundary.values
        inv_h2 = 1.0 / self.grid.spacing**2
        rhs[0] += g[0] * inv_h2
        rhs[-1] += g[-1] * inv_h2
        return rhs

    def _tangent_rhs(self, c, u, h):
        return -(h * u)[1:-1]

    def _adjoint_map(self, c, u, z):
        return -u * z


class Reaction2D(ForwardOperator):
    """``-Laplace u + c u = f`` on the unit square, five-point stencil.

    ``solver="lu"`` factorizes the sparse system once per linearization;
    ``solver="gauss-seidel"`` iterates red-black Gauss-Seidel sweeps to a
    relative residual of ``gs_tol``.
    """

    kind = "reaction2d"

    def __init__(self, grid, source, boundary=None, gamma0: float = 1.0,
                 solver: str = "lu", gs_tol: float = 1e-10, gs_max_sweeps: int = 100_000):
        if grid.dimension != 2:
            raise ValueError("Reaction2D needs a 2D grid")
        if solver not in ("lu", "gauss-seidel"):
            raise ValueError(f"unknown solver {solver!r}")
        super().__init__(grid, source, boundary)
        self.gamma0 = gamma0
        self.solver = solver
        self.gs_tol = gs_tol
        self.gs_max_sweeps = gs_max_sweeps
        m = grid.subdivisions - 1
        lap1 = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
        eye = sp.identity(m)
        self._laplacian = ((sp.kron(lap1, eye) + sp.kron(eye, lap1)) / grid.spacing**2).tocsc()

    check_admissible = Reaction1D.check_admissible
    clip = Reaction1D.clip

    def _factor(self, c):
        ci = c[self.interior]
        if self.solver == "lu":
            return splu((self._laplacian + sp.diags(ci)).tocsc())
        return _GaussSeidel(ci, self.grid.spacing, self.gs_tol, self.gs_max_sweeps)

    def _state_rhs(self, c):
        h = self.grid.spacing
        ub = self.grid.reshape(np.where(self.grid.boundary_mask, self.boundary.values, 0.0))
        nb = ub[:-2, 1:-1] + ub[2:, 1:-1] + ub[1:-1, :-2] + ub[1:-1, 2:]
        return self.source.values[self.interior] + nb.ravel() / h**2

    def _tangent_rhs(self, c, u, h):
        return -(h * u)[self.interior]

    def _adjoint_map(self, c, u, z):
        return -u * z

    def describe(self):
        return {**super().describe(), "solver": self.solver}


class _GaussSeidel:
    def __init__(self, c_interior, h, tol, max_sweeps):
        self.m = int(round(np.sqrt(c_interior.size)))
        self.c = c_interior.reshape(self.m, self.m)
        self.h, self.tol, self.max_sweeps = h, tol, max_sweeps

    def solve(self, rhs):
        if np.ndim(rhs) == 2:
            return np.column_stack([self.solve(col) for col in np.asarray(rhs).T])
        u = gauss_seidel_2d(self.c, np.asarray(rhs).reshape(self.m, self.m), self.h,
                            tol=self.tol, max_sweeps=self.max_sweeps)
        return u.ravel()


class Diffusion1D(ForwardOperator):
    """``-(a u')' = f`` on [0, 1] with P1 finite elements.

    ``a`` is nodal and enters the stiffness matrix through its element
    midpoint value; the load is the exact integral of the P1 interpolant of
    ``f`` against the hat functions.  Domain: ``a >= nu0`` pointwise.
    """

    kind = "diffusion1d"

    def __init__(self, grid, source, boundary=None, nu0: float = 0.1):
        if grid.dimension != 1:
            raise ValueError("Diffusion1D needs a 1D grid")
        super().__init__(grid, source, boundary)
        self.nu0 = nu0
        self.lower_bound = nu0

    def check_admissible(self, x):
        lo = float(np.min(self._values(x)))
        if lo < self.nu0:
            raise DomainError(f"diffusion coefficient drops to {lo:.3g} < nu0={self.nu0}")

    def _element_coeff(self, a):
        return 0.5 * (a[1:] + a[:-1]) / self.grid.spacing

    def _factor(self, a):
        k = self._element_coeff(a)
        solver = Thomas(-np.r_[0.0, k[1:-1]], k[:-1] + k[1:], -np.r_[k[1:-1], 0.0])
        if not solver.positive_definite:
            raise DomainError("stiffness matrix is not positive definite")
        return solver

    def _state_rhs(self, a):
        f, g, dx = self.source.values, self.boundary.values, self.grid.spacing
        k = self._element_coeff(a)
        rhs = dx / 6 * (f[:-2] + 4 * f[1:-1] + f[2:])
        rhs[0] += k[0] * g[0]
        rhs[-1] += k[-1] * g[-1]
        return rhs

    def _tangent_rhs(self, a, u, h):
        flux = self._element_coeff(h) * np.diff(u)
        return -(flux[:-1] - flux[1:])

    def _adjoint_map(self, a, u, z):
        e = 0.5 * np.diff(u) * np.diff(z) / self.grid.spacing
        q = np.zeros_like(u)
        q[:-1] += e
        q[1:] += e
        return -q

    def describe(self):
        return {**super().describe(), "nu0": self.nu0}


def estimate_operator_norm(lin, iterations: int = 50, seed: int = 0) -> float:
    """Power iteration on ``T^* T``; returns the estimate of ``||T||``."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    grid = lin.x.grid
    v = Field(grid, np.random.default_rng(seed).standard_normal(grid.node_count))
    v = v / l2_norm(v)
    estimate = 0.0
    for _ in range(iterations):
        w = lin.adjoint(lin.tangent(v))
        size = l2_norm(w)
        if size == 0.0:
            return 0.0
        estimate = size
        v = w / size
    return float(np.sqrt(estimate))


# --- problem presets -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Problem:
    name: str
    operator: ForwardOperator
    truth: Field
    default_anchor: Field

    def exact_data(self) -> Field:
        return self.operator.apply(self.truth)


def _piecewise(pieces, tol=1e-12) -> Callable:
    """Nodal evaluation of a piecewise function given as ``[(lo, hi, fn), ...]``
    on closed intervals; where intervals meet, the one-sided values are averaged."""
    def evaluate(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        total = np.zeros_like(t)
        count = np.zeros_like(t)
        for lo, hi, fn in pieces:
            inside = (t >= lo - tol) & (t <= hi + tol)
            total[inside] += np.broadcast_to(fn(t[inside]), t[inside].shape)
            count[inside] += 1
        if np.any(count == 0):
            raise ValueError("piecewise function undefined at some nodes")
        return total / count
    return evaluate


def reaction1d_truth(t):
    t = np.asarray(t, dtype=float)
    tol = 1e-12
    c = np.zeros_like(t)
    c[(t >= 0.3 - tol) & (t <= 0.4 + tol)] = 0.5
    c[(t >= 0.6 - tol) & (t <= 0.7 + tol)] = 1.0
    return c


def reaction2d_truth(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    tol = 1e-12
    c = np.zeros_like(x)
    c[(x >= 0.6 - tol) & (x <= 0.8 + tol) & (y >= 0.2 - tol) & (y <= 0.5 + tol)] = 0.5
    c[(x - 0.3) ** 2 + (y - 0.7) ** 2 <= 0.15**2 + tol] = 1.0
    return c


diffusion1d_truth = _piecewise([
    (0.0, 0.3, lambda t: 1.0),
    (0.3, 0.35, lambda t: 20 * t - 5),
    (0.35, 0.65, lambda t: 2.0),
    (0.65, 0.7, lambda t: 15 - 20 * t),
    (0.7, 1.0, lambda t: 1.0),
])

# f jumps at 0.3, 0.35, 0.65, 0.7; nodes there carry the mean of the limits
diffusion1d_source = _piecewise([
    (0.0, 0.3, lambda t: -2.0),
    (0.3, 0.35, lambda t: 30 - 80 * t),
    (0.35, 0.65, lambda t: -4.0),
    (0.65, 0.7, lambda t: 80 * t - 50),
    (0.7, 1.0, lambda t: -2.0),
])


def reaction1d_paper(subdivisions: int = 100) -> Problem:
    grid = Grid(1, subdivisions)
    truth = grid.sample(reaction1d_truth)
    t = grid.coords[:, 0]
    op = Reaction1D(grid, Field(grid, (1 + 5 * t) * truth.values), Field(grid, 1 + 5 * t))
    return Problem("reaction1d-paper", op, truth, Field.zeros(grid))


def reaction2d_paper(subdivisions: int = 30, solver: str = "lu") -> Problem:
    grid = Grid(2, subdivisions)
    truth = grid.sample(reaction2d_truth)
    s = grid.coords.sum(axis=1)
    op = Reaction2D(grid, Field(grid, s * truth.values), Field(grid, s), solver=solver)
    return Problem("reaction2d-paper", op, truth, Field.zeros(grid))


def diffusion1d_paper(subdivisions: int = 400) -> Problem:
    grid = Grid(1, subdivisions)
    truth = grid.sample(diffusion1d_truth)
    op = Diffusion1D(grid, grid.sample(diffusion1d_source))
    return Problem("diffusion1d-paper", op, truth, Field.constant(grid, 1.0))


PRESETS = {
    "reaction1d-paper": reaction1d_paper,
    "reaction2d-paper": reaction2d_paper,
    "diffusion1d-paper": diffusion1d_paper,
}

OPERATOR_KINDS = {"reaction1d": Reaction1D, "reaction2d": Reaction2D, "diffusion1d": Diffusion1D}


def get_preset(name: str, **kwargs) -> Problem:
    try:
        return PRESETS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def custom_problem(kind: str, source: Field, boundary: Field, truth: Field,
                   anchor: Optional[Field] = None) -> Problem:
    try:
        cls = OPERATOR_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown operator kind {kind!r}") from None
    op = cls(source.grid, source, boundary)
    if anchor is None:
        anchor = Field.constant(source.grid, 1.0 if kind == "diffusion1d" else 0.0)
    return Problem(f"custom-{kind}", op, truth, anchor)
