import math

import numpy as np
import pytest

from sinhrobin.core.errors import ParameterError
from sinhrobin.elliptic.base import Field
from sinhrobin.elliptic.robin import assemble, laplacian, robin_defect, solve
from sinhrobin.geometry.domain import Annulus, Disk
from sinhrobin.geometry.grid import build_grid


def _harmonic_error(n_angular):
    grid = build_grid(Disk(1.0), 16, n_angular)
    op = assemble(grid, 3.0)
    boundary = grid.nodes[grid.boundary_index]
    phi = np.arctan2(boundary[:, 1], boundary[:, 0])
    u = op.solve(boundary_data=5.0 * np.cos(2 * phi))
    exact = grid.nodes[:, 0] ** 2 - grid.nodes[:, 1] ** 2
    return np.max(np.abs(u.values - exact))


def test_manufactured_harmonic_converges_at_second_order():
    errors = [_harmonic_error(n) for n in (32, 64, 128)]
    assert errors[0] < 5e-2
    for coarse, fine in zip(errors, errors[1:]):
        assert 3.2 <= coarse / fine <= 4.8


def test_linear_solution_on_disk():
    grid = build_grid(Disk(1.0), 16, 64)
    op = assemble(grid, 1.0)
    u = solve(op, boundary_data=2.0 * grid.nodes[grid.boundary_index, 0])
    assert np.max(np.abs(u.values - grid.nodes[:, 0])) < 5e-3


def _annulus_error(n_radial):
    grid = build_grid(Annulus(0.5, 1.0), n_radial, 16, grading=1.0)
    op = assemble(grid, 2.0)
    data = np.where(grid.boundary_component == 0, 1.0, -2.0 + 2.0 * math.log(0.5))
    u = op.solve(boundary_data=data)
    exact = np.log(np.hypot(grid.nodes[:, 0], grid.nodes[:, 1]))
    return np.max(np.abs(u.values - exact))


def test_annulus_log_solution_converges_at_second_order():
    errors = [_annulus_error(n) for n in (16, 32, 64)]
    for coarse, fine in zip(errors, errors[1:]):
        assert 3.0 <= coarse / fine <= 5.0


def test_discrete_laplacian_of_quadratic(disk_operator, disk_grid):
    f = Field.from_function(disk_grid, lambda x1, x2: x1 ** 2 + x2 ** 2)
    lap = laplacian(disk_operator, f)
    np.testing.assert_allclose(lap[disk_grid.interior_index], 4.0, atol=1e-8)
    assert np.all(lap[disk_grid.boundary_index] == 0.0)
    np.testing.assert_allclose(robin_defect(disk_operator, f), 2.0 + 3.0, atol=1e-8)


def test_maximum_principle(disk_operator, disk_grid):
    rhs = Field(disk_grid, -np.ones(disk_grid.n_nodes))
    u = disk_operator.solve(rhs)
    assert u.values.max() <= 1e-12
    r2 = np.sum(disk_grid.nodes ** 2, axis=1)
    np.testing.assert_allclose(u.values, r2 / 4 - 0.25 - 1.0 / 6.0, atol=1e-10)


def test_constant_solves_exactly(disk_operator, disk_grid):
    u = disk_operator.solve(boundary_data=np.full(disk_grid.boundary_index.size, 6.0))
    np.testing.assert_allclose(u.values, 2.0, rtol=1e-10)


def test_zero_data_gives_zero(disk_operator):
    u = disk_operator.solve()
    assert u.sup_norm() == 0.0


def test_negative_robin_coefficient_is_rejected(disk_grid):
    with pytest.raises(ParameterError):
        assemble(disk_grid, -1.0)


def test_field_validation(disk_grid):
    with pytest.raises(ValueError):
        Field(disk_grid, np.zeros(3))
    with pytest.raises(ValueError):
        Field(disk_grid, np.full(disk_grid.n_nodes, np.nan))


def test_field_mirror_is_an_involution(disk_grid):
    f = Field.from_function(disk_grid, lambda x1, x2: x1 + 2 * x2)
    np.testing.assert_array_equal(f.mirrored().mirrored().values, f.values)
    expected = disk_grid.nodes[:, 0] - 2 * disk_grid.nodes[:, 1]
    np.testing.assert_allclose(f.mirrored().values, expected)


def test_signed_matrix_flips_interior_rows(disk_operator):
    signed = disk_operator.signed_matrix().tocsr()
    matrix = disk_operator.matrix.tocsr()
    interior = np.flatnonzero(disk_operator.interior_mask)
    boundary = np.flatnonzero(~disk_operator.interior_mask)
    assert abs(signed[interior] + matrix[interior]).max() == 0
    assert abs(signed[boundary] - matrix[boundary]).max() == 0
