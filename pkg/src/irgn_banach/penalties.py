"""Convex penalty functionals and their Bregman distances.

Two gradient conventions are used throughout the package:

* :meth:`Penalty.gradient` is the derivative of the discrete value with
  respect to the nodal values (what a finite-difference probe sees);
* :meth:`Penalty.l2_gradient` is its Riesz representative in the weighted
  inner product, ``gradient / weights``.

Subgradients ``xi`` passed to :meth:`Penalty.bregman` are in the second
(weighted) representation, so that ``bregman(z, x, l2_gradient(x))`` is the
Bregman distance in the discrete L2 geometry.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Field, Grid, InvalidFieldError

KINDS = ("l2", "elasticnet", "tv", "sobolev")

ROUNDOFF_CLAMP = 1e-10
CONVEXITY_TOL = 1e-8


class ConvexityViolation(ArithmeticError):
    """A Bregman distance came out clearly negative (wrong subgradient?)."""


def _pow_change(base, change, q):
    """``(base + change)**q - base**q`` without cancellation (``base > 0``)."""
    return base**q * np.expm1(q * np.log1p(change / base))


def _differences(v, grid):
    h = grid.spacing
    if grid.dimension == 1:
        return [np.diff(v) / h]
    a = grid.reshape(v)
    return [(a[1:, :-1] - a[:-1, :-1]) / h, (a[:-1, 1:] - a[:-1, :-1]) / h]


class LineRestriction:
    """``s -> (Theta(v + s d) - Theta(v), d/ds of it)`` for a fixed point and direction.

    The change is ``a1 s + a2 s^2 + sum_k sum_j w_kj * pow_change(B_kj, s L_kj + s^2 Q_kj, q_k)``,
    with every array precomputed so that a trial step costs a few vector ops.
    """

    def __init__(self, a1=0.0, a2=0.0, terms=()):
        self.a1, self.a2 = float(a1), float(a2)
        # per exponent q: weighted base**q, 1/base, linear and quadratic coefficients
        grouped = {}
        for w, base, lin, quad, q in terms:
            grouped.setdefault(q, []).append((w * base**q, 1.0 / base, lin, quad))
        self.terms = [(*(np.concatenate(parts) for parts in zip(*group)), q)
                      for q, group in grouped.items()]

    def __call__(self, s):
        value = self.a1 * s + self.a2 * s * s
        slope = self.a1 + 2 * self.a2 * s
        for wbq, inv_base, lin, quad, q in self.terms:
            ratio = s * (lin + s * quad) * inv_base
            rate = (lin + 2 * s * quad) * inv_base
            if q == 0.5:
                root = np.sqrt(1.0 + ratio)
                value += np.dot(wbq, ratio / (root + 1.0))
                slope += 0.5 * np.dot(wbq, rate / root)
            else:
                grow = np.expm1(q * np.log1p(ratio))
                value += np.dot(wbq, grow)
                slope += q * np.dot(wbq, (grow + 1.0) / (1.0 + ratio) * rate)
        return float(value), float(slope)


def _cell_terms(v, d, grid, eps, power):
    base, lin, quad = eps, 0.0, 0.0
    for g, dg in zip(_differences(v, grid), _differences(d, grid)):
        base = base + g**2
        lin = lin + 2 * g * dg
        quad = quad + dg**2
    base, lin, quad = (np.ravel(a) for a in np.broadcast_arrays(base, lin, quad))
    return (np.full(base.size, grid.spacing**grid.dimension), base, lin, quad, power / 2)


def _cell_energy_change(v, dv, grid, eps, power):
    """Change of :func:`_cell_energy` from ``v`` to ``v + dv``."""
    base = eps
    change = 0.0
    for g, dg in zip(_differences(v, grid), _differences(dv, grid)):
        base = base + g**2
        change = change + dg * (2 * g + dg)
    return grid.spacing**grid.dimension * np.sum(_pow_change(base, change, power / 2))


def _cell_energy(v: np.ndarray, grid: Grid, eps: float, power: float):
    """Value and nodal gradient of ``sum_cells h^d (|D v|^2 + eps)^(power/2)``.

    ``D`` is the forward-difference gradient on the cells whose lower-left
    node is not on the last row/column; nodes there only enter as the
    "forward" neighbour.
    """
    h = grid.spacing
    cell = h**grid.dimension
    if grid.dimension == 1:
        dv = np.diff(v) / h
        sq = dv**2 + eps
        value = cell * np.sum(sq ** (power / 2))
        s = cell * power * sq ** (power / 2 - 1) * dv / h
        grad = np.zeros_like(v)
        grad[1:] += s
        grad[:-1] -= s
        return value, grad
    a = grid.reshape(v)
    dx = (a[1:, :-1] - a[:-1, :-1]) / h
    dy = (a[:-1, 1:] - a[:-1, :-1]) / h
    sq = dx**2 + dy**2 + eps
    value = cell * np.sum(sq ** (power / 2))
    k = cell * power * sq ** (power / 2 - 1) / h
    sx, sy = k * dx, k * dy
    grad = np.zeros_like(a)
    grad[1:, :-1] += sx
    grad[:-1, 1:] += sy
    grad[:-1, :-1] -= sx + sy
    return value, grad.ravel()


@dataclass(frozen=True, eq=False)
class Penalty:
    """Base class: a convex functional on fields over ``grid``.

    ``anchor`` and ``subgradient`` are the initial guess x0 and an element
    xi0 of the (smoothed) subdifferential at x0.  When ``subgradient`` is
    omitted it is computed as ``l2_gradient(anchor)``; when both are given
    they are checked for consistency.
    """

    grid: Grid
    anchor: Optional[Field] = None
    subgradient: Optional[Field] = None
    kind = "abstract"

    def __post_init__(self):
        if self.anchor is None:
            object.__setattr__(self, "anchor", Field.zeros(self.grid))
        self._check(self.anchor)
        expected = self.l2_gradient(self.anchor)
        if self.subgradient is None:
            object.__setattr__(self, "subgradient", expected)
        else:
            self._check(self.subgradient)
            gap = np.max(np.abs(self.subgradient.values - expected.values))
            if gap > 1e-8 * (1 + np.max(np.abs(expected.values))):
                raise ValueError(f"subgradient is not the gradient at the anchor (max gap {gap:.3g})")

    def _check(self, x: Field) -> np.ndarray:
        if x.grid != self.grid:
            raise InvalidFieldError("field grid does not match the penalty grid")
        return x.values

    # array-level hooks, overridden per kind
    def _value(self, v: np.ndarray) -> float:
        raise NotImplementedError

    def _gradient(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _value_change(self, v: np.ndarray, dv: np.ndarray) -> float:
        """``_value(v + dv) - _value(v)``; kinds override this to avoid cancellation."""
        return self._value(v + dv) - self._value(v)

    def _line(self, v: np.ndarray, d: np.ndarray) -> LineRestriction:
        """Restriction to the line through ``v`` along ``d``; kinds override this."""
        pen = self

        class _Generic(LineRestriction):
            def __call__(self, s):
                return (float(pen._value_change(v, s * d)),
                        float(np.dot(pen._gradient(v + s * d), d)))
        return _Generic()

    def value(self, x: Field) -> float:
        return float(self._value(self._check(x)))

    def value_change(self, x: Field, dx: Field) -> float:
        return float(self._value_change(self._check(x), self._check(dx)))

    def gradient(self, x: Field) -> Field:
        return Field(self.grid, self._gradient(self._check(x)))

    def l2_gradient(self, x: Field) -> Field:
        return Field(self.grid, self._gradient(self._check(x)) / self.grid.weights)

    def bregman(self, z: Field, x: Field, xi: Field) -> float:
        """``value(z) - value(x) - <xi, z - x>`` in the weighted inner product."""
        zv, xv, xiv = self._check(z), self._check(x), self._check(xi)
        d = self._value(zv) - self._value(xv) - np.sum(self.grid.weights * xiv * (zv - xv))
        if d < -CONVEXITY_TOL:
            raise ConvexityViolation(f"Bregman distance {d:.3g} is negative")
        if -ROUNDOFF_CLAMP <= d < 0:
            d = 0.0
        return float(d)

    def anchor_distance_values(self, v: np.ndarray) -> float:
        """Bregman distance from the anchor, ``D_{xi0}(v, x0)``, without checks or clamping."""
        x0, xi0 = self.anchor.values, self.subgradient.values
        return self._value(v) - self._value(x0) - np.sum(self.grid.weights * xi0 * (v - x0))

    def anchor_distance(self, x: Field) -> float:
        return self.bregman(x, self.anchor, self.subgradient)

    def to_config(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class SquaredL2(Penalty):
    """``sum_i w_i x_i^2``."""

    kind = "l2"

    def _value(self, v):
        return np.sum(self.grid.weights * v**2)

    def _gradient(self, v):
        return 2 * self.grid.weights * v

    def _value_change(self, v, dv):
        return np.sum(self.grid.weights * dv * (2 * v + dv))

    def _line(self, v, d):
        wd = self.grid.weights * d
        return LineRestriction(2 * np.dot(wd, v), np.dot(wd, d))


@dataclass(frozen=True, eq=False)
class ElasticNet(Penalty):
    """``lam * sum w x^2 + sum w sqrt(x^2 + eps)``, a smoothed L2 + L1 penalty."""

    lam: float = 0.01
    eps: float = 1e-6
    kind = "elasticnet"

    def _value(self, v):
        w = self.grid.weights
        return self.lam * np.sum(w * v**2) + np.sum(w * np.sqrt(v**2 + self.eps))

    def _gradient(self, v):
        return self.grid.weights * (2 * self.lam * v + v / np.sqrt(v**2 + self.eps))

    def _value_change(self, v, dv):
        w, sq = self.grid.weights, dv * (2 * v + dv)
        return self.lam * np.sum(w * sq) + np.sum(w * _pow_change(v**2 + self.eps, sq, 0.5))

    def _line(self, v, d):
        w = self.grid.weights
        wd = w * d
        node = (w, v**2 + self.eps, 2 * v * d, d**2, 0.5)
        return LineRestriction(2 * self.lam * np.dot(wd, v), self.lam * np.dot(wd, d), [node])

    def to_config(self):
        return {"kind": self.kind, "lambda": self.lam, "epsilon": self.eps}


@dataclass(frozen=True, eq=False)
class TotalVariation(Penalty):
    """``lam * sum w x^2 + sum_cells h^d sqrt(|D x|^2 + eps)``."""

    lam: float = 0.01
    eps: float = 1e-6
    kind = "tv"

    def _value(self, v):
        tv, _ = _cell_energy(v, self.grid, self.eps, 1.0)
        return self.lam * np.sum(self.grid.weights * v**2) + tv

    def _gradient(self, v):
        _, g = _cell_energy(v, self.grid, self.eps, 1.0)
        return 2 * self.lam * self.grid.weights * v + g

    def _value_change(self, v, dv):
        quad = self.lam * np.sum(self.grid.weights * dv * (2 * v + dv))
        return quad + _cell_energy_change(v, dv, self.grid, self.eps, 1.0)

    def _line(self, v, d):
        wd = self.grid.weights * d
        cells = _cell_terms(v, d, self.grid, self.eps, 1.0)
        return LineRestriction(2 * self.lam * np.dot(wd, v), self.lam * np.dot(wd, d), [cells])

    def to_config(self):
        return {"kind": self.kind, "lambda": self.lam, "epsilon": self.eps}


@dataclass(frozen=True, eq=False)
class SobolevWp(Penalty):
    """Smoothed ``W^{1,p}`` distance to the anchor.

    ``sum w (|x - x0|^2 + eps)^(p/2) + sum_cells h^d (|D(x - x0)|^2 + eps)^(p/2)``
    """

    p: float = 2.0
    eps: float = 1e-6
    kind = "sobolev"

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        super().__post_init__()

    def _value(self, v):
        d = v - self.anchor.values
        cells, _ = _cell_energy(d, self.grid, self.eps, self.p)
        return np.sum(self.grid.weights * (d**2 + self.eps) ** (self.p / 2)) + cells

    def _gradient(self, v):
        d = v - self.anchor.values
        _, g = _cell_energy(d, self.grid, self.eps, self.p)
        return self.grid.weights * self.p * d * (d**2 + self.eps) ** (self.p / 2 - 1) + g

    def _value_change(self, v, dv):
        d = v - self.anchor.values
        nodes = np.sum(self.grid.weights * _pow_change(d**2 + self.eps, dv * (2 * d + dv), self.p / 2))
        return nodes + _cell_energy_change(d, dv, self.grid, self.eps, self.p)

    def _line(self, v, d):
        e = v - self.anchor.values
        node = (self.grid.weights, e**2 + self.eps, 2 * e * d, d**2, self.p / 2)
        return LineRestriction(0.0, 0.0, [node, _cell_terms(e, d, self.grid, self.eps, self.p)])

    def to_config(self):
        return {"kind": self.kind, "p_exponent": self.p, "epsilon": self.eps}


def make_penalty(kind: str, grid: Grid, *, lam: float = 0.01, eps: float = 1e-6,
                 p: float = 2.0, anchor: Optional[Field] = None,
                 subgradient: Optional[Field] = None) -> Penalty:
    """Build a penalty by its short name (``l2``, ``elasticnet``, ``tv``, ``sobolev``)."""
    if kind == "l2":
        return SquaredL2(grid, anchor, subgradient)
    if kind == "elasticnet":
        return ElasticNet(grid, anchor, subgradient, lam=lam, eps=eps)
    if kind == "tv":
        return TotalVariation(grid, anchor, subgradient, lam=lam, eps=eps)
    if kind == "sobolev":
        return SobolevWp(grid, anchor, subgradient, p=p, eps=eps)
    raise ValueError(f"unknown penalty kind {kind!r}; expected one of {KINDS}")
