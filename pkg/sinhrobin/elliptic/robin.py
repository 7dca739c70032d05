"""Finite-difference Laplacian with Robin boundary rows on polar grids."""

import logging
import threading
from typing import Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ..core.errors import ParameterError, SolverError
from ..geometry.grid import Grid
from .base import Field

_REFINEMENT_STEPS = 3
_RELATIVE_RESIDUAL = 1e-10


def _central_weights(h1: float, h2: float):
    """Three-point first and second derivative weights on a nonuniform stencil."""
    first = (-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2)))
    second = (2.0 / (h1 * (h1 + h2)), -2.0 / (h1 * h2), 2.0 / (h2 * (h1 + h2)))
    return first, second


def _one_sided_weights(h1: float, h2: float):
    """Backward three-point first derivative at the end node (h1 nearest)."""
    return (
        (2 * h1 + h2) / (h1 * (h1 + h2)),
        -(h1 + h2) / (h1 * h2),
        h1 / (h2 * (h1 + h2)),
    )


class RobinOperator:
    """Sparse matrix for -Laplace in the interior and d/dnu + lambda on the boundary.

    Interior rows hold ``-Delta_h u``, boundary rows hold ``du/dnu + lambda u``,
    both in grid node order. The LU factorization is built on first use and
    shared by every later solve.
    """

    def __init__(self, grid: Grid, robin_coefficient: float, matrix: sparse.csr_matrix):
        self.grid = grid
        self.robin_coefficient = robin_coefficient
        self.matrix = matrix
        self.interior_mask = ~grid.boundary_mask
        self._abs_matrix = abs(matrix)
        self._lock = threading.Lock()
        self._lu = None

    def _factorize(self):
        with self._lock:
            if self._lu is None:
                logging.debug(f"Factorizing Robin operator with {self.grid.n_nodes} unknowns")
                try:
                    self._lu = splu(self.matrix.tocsc())
                except RuntimeError as e:
                    raise SolverError(self._singular_message(f"factorization failed ({e})")) from e
            return self._lu

    def _singular_message(self, detail: str) -> str:
        if self.robin_coefficient == 0:
            return (
                f"Pure Neumann operator is singular: {detail}; data must satisfy the "
                f"compatibility condition (interior source balanced by boundary flux)"
            )
        return f"Robin operator solve failed: {detail}"

    def apply(self, f: Union[Field, np.ndarray]) -> np.ndarray:
        values = f.values if isinstance(f, Field) else np.asarray(f, dtype=float)
        return self.matrix @ values

    def signed_matrix(self) -> sparse.csr_matrix:
        """Rows reading Delta_h u on the interior and du/dnu + lambda u on the boundary."""
        sign = np.where(self.interior_mask, -1.0, 1.0)
        return sparse.diags(sign) @ self.matrix

    def solve_vector(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b with iterative refinement."""
        b = np.asarray(b, dtype=float)
        if not np.any(b):
            return np.zeros_like(b)
        lu = self._factorize()
        with self._lock:
            x = lu.solve(b)
            for _ in range(_REFINEMENT_STEPS):
                residual = b - self.matrix @ x
                if not np.all(np.isfinite(x)):
                    break
                if np.max(np.abs(residual)) <= self._threshold(b, x):
                    break
                x = x + lu.solve(residual)
        if not np.all(np.isfinite(x)):
            raise SolverError(self._singular_message("solution is not finite"))
        residual = np.max(np.abs(b - self.matrix @ x))
        if residual > self._threshold(b, x):
            raise SolverError(self._singular_message(f"residual {residual:.3e} above tolerance"))
        return x

    def _threshold(self, b: np.ndarray, x: np.ndarray) -> float:
        roundoff = 64 * np.finfo(float).eps * float(np.max(self._abs_matrix @ np.abs(x)))
        return max(_RELATIVE_RESIDUAL * float(np.max(np.abs(b))), roundoff)

    def solve(self, rhs: Optional[Field] = None,
              boundary_data: Optional[Union[Field, np.ndarray]] = None) -> Field:
        """Solve -Delta u = rhs inside, du/dnu + lambda u = boundary_data on the boundary."""
        grid = self.grid
        b = np.zeros(grid.n_nodes)
        if rhs is not None:
            b[self.interior_mask] = rhs.values[self.interior_mask]
        if boundary_data is not None:
            if isinstance(boundary_data, Field):
                b[grid.boundary_index] = boundary_data.values[grid.boundary_index]
            else:
                data = np.asarray(boundary_data, dtype=float)
                if data.shape != grid.boundary_index.shape:
                    raise ValueError(
                        f"boundary data has shape {data.shape}, expected {grid.boundary_index.shape}"
                    )
                b[grid.boundary_index] = data
        return Field(grid, self.solve_vector(b))


def assemble(grid: Grid, robin_coefficient: float) -> RobinOperator:
    """Assemble the Robin operator on a grid.

    Args:
        grid: Polar grid
        robin_coefficient: Robin coefficient lambda >= 0

    Returns:
        RobinOperator with interior rows -Delta_h and boundary rows d/dnu + lambda
    """
    if robin_coefficient < 0:
        raise ParameterError(f"Robin coefficient must be non-negative, got {robin_coefficient}",
                             field="LAMBDAS")

    rows, cols, vals = [], [], []

    def add(r, c, v):
        r, c, v = np.broadcast_arrays(r, c, v)
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())

    n = grid.n_angular
    k = np.arange(n)
    dphi = grid.dphi
    s = grid.s
    cross = bool(np.any(grid.g_sphi != 0))

    for i in range(1, grid.n_radial):
        row = grid.index(np.full(n, i), k)
        m = i - grid.ring_start
        h1, h2 = s[i] - s[i - 1], s[i + 1] - s[i]
        first, second = _central_weights(h1, h2)
        g_ss, g_sphi, g_pp, lap_s = grid.g_ss[m], grid.g_sphi[m], grid.g_phiphi[m], grid.lap_s[m]
        for offset, d1, d2 in zip((-1, 0, 1), first, second):
            add(row, grid.index(np.full(n, i + offset), k), -(g_ss * d2 + lap_s * d1))
        add(row, row, 2 * g_pp / dphi ** 2)
        add(row, grid.index(np.full(n, i), k + 1), -g_pp / dphi ** 2)
        add(row, grid.index(np.full(n, i), k - 1), -g_pp / dphi ** 2)
        if cross:
            for offset, d1 in zip((-1, 0, 1), first):
                ring = i + offset
                if grid.has_origin and ring == 0:
                    continue
                add(row, grid.index(np.full(n, ring), k + 1), -g_sphi * d1 / dphi)
                add(row, grid.index(np.full(n, ring), k - 1), g_sphi * d1 / dphi)

    if grid.has_origin:
        # Delta u(0) ~ sum w_k (u_k - u_0), exact on quadratics
        ring1 = grid.ring(1)
        x, y = grid.nodes[ring1, 0], grid.nodes[ring1, 1]
        moments = np.vstack([x, y, x * x, y * y, x * y])
        weights = np.linalg.lstsq(moments, np.array([0.0, 0.0, 2.0, 2.0, 0.0]), rcond=None)[0]
        add(0, ring1, -weights)
        add(0, 0, weights.sum())

    start = 0
    for ring in grid.boundary_rings:
        sl = slice(start, start + n)
        start += n
        row = grid.index(np.full(n, ring), k)
        n_s = grid.normal_s[sl]
        n_phi = grid.normal_phi[sl]
        if ring == grid.n_radial:
            h1, h2 = s[ring] - s[ring - 1], s[ring - 1] - s[ring - 2]
            weights = _one_sided_weights(h1, h2)
            neighbours = (ring, ring - 1, ring - 2)
        else:
            h1, h2 = s[1] - s[0], s[2] - s[1]
            weights = tuple(-w for w in _one_sided_weights(h1, h2))
            neighbours = (0, 1, 2)
        for nb, w in zip(neighbours, weights):
            add(row, grid.index(np.full(n, nb), k), n_s * w)
        add(row, grid.index(np.full(n, ring), k + 1), n_phi / (2 * dphi))
        add(row, grid.index(np.full(n, ring), k - 1), -n_phi / (2 * dphi))
        add(row, row, robin_coefficient)

    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_nodes, grid.n_nodes),
    ).tocsr()
    matrix.sum_duplicates()
    logging.debug(f"Assembled Robin operator (lambda={robin_coefficient}) with {matrix.nnz} nonzeros")
    return RobinOperator(grid, float(robin_coefficient), matrix)


def solve(op: RobinOperator, rhs: Optional[Field] = None,
          boundary_data: Optional[Union[Field, np.ndarray]] = None) -> Field:
    return op.solve(rhs, boundary_data)


def apply(op: RobinOperator, f: Field) -> Field:
    return Field(op.grid, op.apply(f))


def laplacian(op: RobinOperator, f: Union[Field, np.ndarray]) -> np.ndarray:
    """Discrete Laplacian at interior nodes, zero on boundary nodes."""
    values = -op.apply(f)
    values[~op.interior_mask] = 0.0
    return values


def robin_defect(op: RobinOperator, f: Union[Field, np.ndarray]) -> np.ndarray:
    """du/dnu + lambda u at boundary nodes, in grid.boundary_index order."""
    return op.apply(f)[op.grid.boundary_index]
