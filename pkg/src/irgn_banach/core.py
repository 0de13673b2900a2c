"""Grids, fields, discrete norms, the regularization schedule and noisy data.

All fields live on uniform grids over [0, 1] or [0, 1]^2.  Nodes are stored
flat in lexicographic order of their coordinates (x major, then y), which is
also the row order of the field CSV format.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np


class InvalidFieldError(ValueError):
    """Raised for fields with non-finite values or a mismatched grid."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the unit interval (``dimension=1``) or unit square.

    Quadrature weights are the (tensor product) trapezoidal weights, so that
    ``weights.sum() == 1`` and discrete integrals of affine functions are exact.
    """

    dimension: int
    subdivisions: int

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if int(self.subdivisions) != self.subdivisions or self.subdivisions < 1:
            raise ValueError(f"subdivisions must be a positive integer, got {self.subdivisions}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.subdivisions

    @property
    def shape(self) -> tuple:
        return (self.subdivisions + 1,) * self.dimension

    @property
    def node_count(self) -> int:
        return (self.subdivisions + 1) ** self.dimension

    @cached_property
    def axis(self) -> np.ndarray:
        return np.arange(self.subdivisions + 1) / self.subdivisions

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(node_count, dimension)``."""
        if self.dimension == 1:
            return self.axis[:, None]
        xx, yy = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    @cached_property
    def weights(self) -> np.ndarray:
        w1 = np.full(self.subdivisions + 1, self.spacing)
        w1[0] = w1[-1] = 0.5 * self.spacing
        if self.dimension == 1:
            return w1
        return np.outer(w1, w1).ravel()

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        edge = np.zeros(self.subdivisions + 1, dtype=bool)
        edge[[0, -1]] = True
        if self.dimension == 1:
            return edge
        return (edge[:, None] | edge[None, :]).ravel()

    def reshape(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)

    def sample(self, fn) -> "Field":
        """Evaluate ``fn(*coords)`` at every node."""
        return Field(self, fn(*self.coords.T))


@dataclass(frozen=True, eq=False)
class Field:
    """Real values at the nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size != self.grid.node_count:
            raise InvalidFieldError(
                f"field has {values.size} values but grid has {self.grid.node_count} nodes")
        if not np.all(np.isfinite(values)):
            raise InvalidFieldError("field contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.node_count))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.node_count, float(value)))

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise InvalidFieldError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def dot(self, other: "Field") -> float:
        """Weighted (discrete L2) inner product."""
        return float(np.sum(self.grid.weights * self.values * self._other(other)))

    def norm(self) -> float:
        return l2_norm(self)

    def equals(self, other: "Field") -> bool:
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def to_csv(self, path: Union[str, Path, None] = None) -> str:
        text = field_to_csv(self)
        if path is not None:
            Path(path).write_text(text)
        return text


def l2_norm(f: Field) -> float:
    """Discrete L2 norm ``sqrt(sum_i w_i f_i^2)`` with trapezoidal weights."""
    return float(np.sqrt(np.sum(f.grid.weights * f.values**2)))


@dataclass(frozen=True)
class RegSchedule:
    """Geometric regularization parameters ``alpha_n = alpha0 * ratio**n``."""

    alpha0: float = 1.0
    ratio: float = 0.5

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")

    @property
    def theta(self) -> float:
        return 1.0 / self.ratio

    def alpha(self, n: int) -> float:
        if n < 0:
            raise ValueError("n must be nonnegative")
        return self.alpha0 * self.ratio**n


def schedule_alpha(s: RegSchedule, n: int) -> float:
    return s.alpha(n)


@dataclass(frozen=True)
class IterationRecord:
    n: int
    alpha: float
    residual: float
    inner_iterations: int = 0
    error_to_truth: Optional[float] = None


def add_noise(exact: Field, delta: float, seed: int) -> Field:
    """Return ``exact + delta * eta / ||eta||`` for seeded standard normal ``eta``.

    The perturbation has discrete L2 norm ``delta`` up to rounding.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    while True:
        eta = np.random.default_rng(seed).standard_normal(exact.grid.node_count)
        size = l2_norm(Field(exact.grid, eta))
        if size > 0:
            break
        seed += 1
    return Field(exact.grid, exact.values + (delta / size) * eta)


def _fmt(x: float) -> str:
    return repr(float(x))


def field_to_csv(f: Field) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    coord_cols = ["coord"] if f.grid.dimension == 1 else ["coord", "coord2"]
    writer.writerow(["index", *coord_cols, "value"])
    for i, (xy, v) in enumerate(zip(f.grid.coords, f.values)):
        writer.writerow([i, *(_fmt(c) for c in xy), _fmt(v)])
    return buf.getvalue()


def field_from_csv(source: Union[str, Path]) -> Field:
    """Parse a field CSV (a path, or the CSV text itself if it contains a newline)."""
    text = source if isinstance(source, str) and "\n" in source else Path(source).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [r for r in rows[1:] if r]
    dimension = len(header) - 2
    if header[0] != "index" or header[-1] != "value" or dimension not in (1, 2):
        raise InvalidFieldError(f"unrecognized field CSV header {header}")
    count = len(body)
    side = round(count ** (1.0 / dimension))
    if side**dimension != count or side < 2:
        raise InvalidFieldError(f"{count} rows do not form a {dimension}D uniform grid")
    grid = Grid(dimension, side - 1)
    coords = np.array([[float(c) for c in r[1:-1]] for r in body])
    if [int(r[0]) for r in body] != list(range(count)) or not np.allclose(coords, grid.coords, atol=1e-12):
        raise InvalidFieldError("rows are not in ascending lexicographic node order")
    return Field(grid, [float(r[-1]) for r in body])
