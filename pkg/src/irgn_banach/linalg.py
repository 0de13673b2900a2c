"""Small linear solvers used by the forward operators."""

from __future__ import annotations

import numpy as np


class SolverError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class Thomas:
    """Factorized tridiagonal matrix, solved by the Thomas algorithm.

    ``lower[i]`` multiplies ``u[i-1]`` and ``upper[i]`` multiplies ``u[i+1]``
    in row ``i`` (``lower[0]`` and ``upper[-1]`` are ignored).  The forward
    elimination is done once here; :meth:`solve` is the substitution sweep.
    """

    def __init__(self, lower, diag, upper):
        a = [float(x) for x in lower]
        b = [float(x) for x in diag]
        c = [float(x) for x in upper]
        n = len(b)
        cp = [0.0] * n
        piv = [0.0] * n
        piv[0] = b[0]
        for i in range(n):
            if i > 0:
                piv[i] = b[i] - a[i] * cp[i - 1]
            if piv[i] == 0.0:
                raise SolverError(f"zero pivot in row {i}")
            if i < n - 1:
                cp[i] = c[i] / piv[i]
        self.lower, self.pivots, self.cprime = a, piv, cp

    @property
    def positive_definite(self) -> bool:
        """For a symmetric matrix, all pivots positive means SPD."""
        return min(self.pivots) > 0

    def solve(self, rhs) -> np.ndarray:
        """Solve for one right-hand side, or for every column of a 2D array."""
        a, piv, cp = self.lower, self.pivots, self.cprime
        if np.ndim(rhs) == 2:
            d = np.array(rhs, dtype=float)
            d[0] /= piv[0]
            for i in range(1, len(piv)):
                d[i] = (d[i] - a[i] * d[i - 1]) / piv[i]
            for i in range(len(piv) - 2, -1, -1):
                d[i] -= cp[i] * d[i + 1]
            return d
        d = [float(x) for x in rhs]
        n = len(d)
        d[0] = d[0] / piv[0]
        for i in range(1, n):
            d[i] = (d[i] - a[i] * d[i - 1]) / piv[i]
        for i in range(n - 2, -1, -1):
            d[i] -= cp[i] * d[i + 1]
        return np.array(d)


def gauss_seidel_2d(c: np.ndarray, rhs: np.ndarray, h: float, u0=None,
                    tol: float = 1e-10, max_sweeps: int = 100_000,
                    check_every: int = 10) -> np.ndarray:
    """Red-black Gauss-Seidel for ``-Laplace_h u + c u = rhs`` with zero Dirichlet data.

    ``c`` and ``rhs`` are arrays over the interior nodes, shape ``(m, m)``.
    Stops when ``||rhs - A u|| <= tol * ||rhs||``.
    """
    m = c.shape[0]
    u = np.zeros((m + 2, m + 2))
    if u0 is not None:
        u[1:-1, 1:-1] = u0
    inv_h2 = 1.0 / h**2
    diag = 4 * inv_h2 + c
    ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    colour = [(ii + jj) % 2 == k for k in (0, 1)]
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0:
        return u[1:-1, 1:-1].copy()

    def residual():
        nb = u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:]
        return np.linalg.norm(rhs - diag * u[1:-1, 1:-1] + inv_h2 * nb) / rhs_norm

    res = np.inf
    for sweep in range(1, max_sweeps + 1):
        for mask in colour:
            nb = u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:]
            inner = u[1:-1, 1:-1]
            inner[mask] = ((rhs + inv_h2 * nb) / diag)[mask]
        if sweep % check_every == 0:
            res = residual()
            if res <= tol:
                return u[1:-1, 1:-1].copy()
    raise SolverError(f"Gauss-Seidel did not converge in {max_sweeps} sweeps", residual=res)
