import math

import numpy as np
import pytest

from sinhrobin.elliptic.base import Field
from sinhrobin.elliptic.robin import assemble
from sinhrobin.geometry.domain import Disk
from sinhrobin.geometry.grid import build_grid
from sinhrobin.processors.ansatz import Params, build_ansatz, pde_residual, residual, star_norm
from sinhrobin.processors.green import GreenProvider
from sinhrobin.processors.hamiltonian import (
    ConcentrationConfig,
    FeasibleSet,
    SpinConfig,
    compute_masses,
    minimize,
    phi_m,
    theta0_configuration,
)
from sinhrobin.processors.solver import (
    SolveReport,
    concentration_report,
    energy,
    energy_gap_scale,
    newton_solve,
    reduced_energy,
    reduced_energy_prediction,
    solve_with_continuation,
    sup_growth,
)

PARAMS = Params(0.1, 3.0, allow_out_of_regime=True)


def _seed(grid, amplitude=0.1):
    x1, x2 = grid.nodes[:, 0], grid.nodes[:, 1]
    return Field(grid, amplitude * (1.0 + np.sin(3 * x1) * np.cos(2 * x2)))


def test_zero_seed_is_an_exact_solution(disk_grid, disk_operator):
    report = newton_solve(disk_grid, PARAMS, Field.zeros(disk_grid), operator=disk_operator)
    assert report.converged
    assert report.iterations == 0
    assert report.residual_inf == 0.0


def test_newton_converges_to_the_trivial_solution(disk_grid, disk_operator):
    report = newton_solve(disk_grid, PARAMS, _seed(disk_grid), operator=disk_operator)
    assert report.converged and not report.diverged
    assert report.residual_history[-1] <= 1e-9 * report.residual_history[0] + 1e-10
    assert report.sup_norm <= 1e-5
    final = pde_residual(disk_operator, report.solution.values, PARAMS.eps)
    assert np.max(np.abs(final)) == pytest.approx(report.residual_inf)


def test_newton_is_antisymmetric(disk_grid, disk_operator):
    seed = _seed(disk_grid, amplitude=0.5)
    plus = newton_solve(disk_grid, PARAMS, seed, operator=disk_operator)
    minus = newton_solve(disk_grid, PARAMS, -seed, operator=disk_operator)
    assert plus.iterations == minus.iterations
    np.testing.assert_allclose(minus.solution.values, -plus.solution.values, rtol=0, atol=1e-12)


def test_continuation_not_needed_for_a_converging_seed(disk_grid, disk_operator):
    report = solve_with_continuation(disk_grid, PARAMS, lambda p: _seed(disk_grid),
                                     operator=disk_operator)
    assert report.converged
    assert report.continuation == []


def test_energy_of_constants(disk_grid):
    area = float(np.sum(disk_grid.area_weights))
    arc = float(np.sum(disk_grid.arc_weights))
    eps, lam = 0.1, 3.0
    zero = energy(disk_grid, Field.zeros(disk_grid), eps, lam)
    assert zero == pytest.approx(-2 * eps ** 2 * area)
    c = 0.7
    constant = Field(disk_grid, np.full(disk_grid.n_nodes, c))
    expected = -eps ** 2 * 2 * math.cosh(c) * area + 0.5 * lam * c * c * arc
    assert energy(disk_grid, constant, eps, lam) == pytest.approx(expected, rel=1e-12)
    assert area == pytest.approx(math.pi, rel=1e-2)
    assert arc == pytest.approx(2 * math.pi, rel=1e-2)


def test_energy_dirichlet_term(disk_grid):
    # u = x1: int |grad u|^2 = pi, int_boundary u^2 = pi
    u = Field(disk_grid, disk_grid.nodes[:, 0].copy())
    eps, lam = 0.1, 2.0
    potential = eps ** 2 * float(disk_grid.area_weights @ (2 * np.cosh(u.values)))
    dirichlet_and_boundary = energy(disk_grid, u, eps, lam) + potential
    expected = 0.5 * math.pi + 0.5 * lam * math.pi
    assert dirichlet_and_boundary == pytest.approx(expected, rel=2e-2)


def test_reduced_energy():
    assert reduced_energy(0, 1e-3, 5.0, 12.0) == 0.0
    unit = -16 * math.pi + 8 * math.pi * math.log(8)
    assert reduced_energy(1, 1.0, 1.0, 0.0) == pytest.approx(unit)
    slope = reduced_energy(2, 1e-4, 4.0, 1.0) - reduced_energy(2, 1e-4, 4.0, 0.0)
    assert slope == pytest.approx(-4 * math.pi)
    assert energy_gap_scale(2, Params(1e-4, 1.5)) == pytest.approx(32 * math.pi * math.log(1e4))


def test_reduced_energy_prediction_reads_the_configuration():
    params = Params(1e-4, 1.5)
    config = ConcentrationConfig([[0.5, 0.0], [-0.5, 0.0]], SpinConfig((1, -1)), 1.5)
    expected = reduced_energy(2, params.rho, 1.5, 0.7)
    assert reduced_energy_prediction(config, params, 0.7) == pytest.approx(expected)


def _two_peaks(grid):
    i = int(np.argmin(np.abs(grid.s - 0.5)))
    p = grid.nodes[int(grid.index(i, 0))]
    q = grid.nodes[int(grid.index(i, grid.n_angular // 2))]
    r2p = np.sum((grid.nodes - p) ** 2, axis=1)
    r2q = np.sum((grid.nodes - q) ** 2, axis=1)
    u = Field(grid, 5 * np.exp(-r2p / 0.01) - 5 * np.exp(-r2q / 0.01))
    return u, p, q


def test_concentration_report_matches_peaks(disk_grid):
    u, p, q = _two_peaks(disk_grid)
    config = ConcentrationConfig([q, p], SpinConfig((-1, 1)), 3.0)
    report = concentration_report(u, config)
    assert not report.mismatch
    assert report.candidates == 2
    assert [peak.index for peak in report.peaks] == [0, 1]
    assert report.peaks[0].spin == -1 and report.peaks[1].spin == 1
    np.testing.assert_array_equal(report.peaks[1].position, p)
    assert report.peaks[1].offset == 0.0
    assert report.peaks[1].value == pytest.approx(5.0)
    assert report.peaks[1].lambda_distance == pytest.approx(3.0 * (1.0 - np.hypot(*p)))


def test_concentration_mismatch(disk_grid):
    u, p, q = _two_peaks(disk_grid)
    config = ConcentrationConfig([p, q], SpinConfig((1, 1)), 3.0)
    report = concentration_report(u, config)
    assert report.mismatch
    assert "sign -1" in report.message


def test_sup_growth(disk_grid):
    def report(eps, amplitude):
        field = Field(disk_grid, np.full(disk_grid.n_nodes, amplitude))
        return SolveReport(True, 1, 0.0, [0.0], field, eps, 5.0)

    growing, sups = sup_growth([report(0.01, 3.0), report(0.1, 1.0), report(0.05, 2.0)])
    assert growing
    assert sups == [1.0, 2.0, 3.0]
    flat, _ = sup_growth([report(0.1, 1.0), report(0.05, 1.0)])
    assert not flat


BUBBLE_LAMBDA = 2.0


@pytest.fixture(scope="module")
def bubble_setting():
    """Opposite spins on the unit disk at a lambda where a bubble core spans several cells."""
    grid = build_grid(Disk(1.0), 48, 512, lambda_max=BUBBLE_LAMBDA)
    operator = assemble(grid, BUBBLE_LAMBDA)
    provider = GreenProvider(grid, BUBBLE_LAMBDA, operator)
    spins = SpinConfig((1, -1))
    feasible = FeasibleSet.for_mode(grid.domain, 2, "axis_symmetric")
    return grid, operator, provider, spins, feasible


def _params(eps):
    return Params(eps, BUBBLE_LAMBDA, allow_out_of_regime=True)


def test_newton_from_the_ansatz_finds_a_sign_changing_solution(bubble_setting):
    grid, operator, provider, spins, feasible = bubble_setting
    result = minimize(grid.domain, spins, feasible, BUBBLE_LAMBDA, provider, n_starts=1, maxiter=100)
    config = compute_masses(result.config, provider, rule="spin_product")
    params = _params(0.1)
    bundle = build_ansatz(grid, config, params, operator, provider)

    report = newton_solve(grid, params, bundle.U, max_iter=15, operator=operator)
    assert report.converged and not report.diverged
    assert report.iterations <= 15
    u = report.solution.values
    assert u.max() > 1.0
    assert u.min() < -1.0
    concentration = concentration_report(report.solution, config)
    assert not concentration.mismatch
    assert [peak.spin for peak in concentration.peaks] == [1, -1]


def test_ansatz_residual_scales_with_eps(bubble_setting):
    grid, operator, provider, spins, feasible = bubble_setting
    points = theta0_configuration(grid.domain, spins, feasible, BUBBLE_LAMBDA)
    config = compute_masses(ConcentrationConfig(points, spins, BUBBLE_LAMBDA), provider, rule="spin_product")
    ratios = []
    for eps in (0.1, 0.05, 0.025):
        params = _params(eps)
        bundle = build_ansatz(grid, config, params, operator, provider)
        norm = star_norm(residual(bundle, laplacian_mode="analytic"), grid, config, params.rho)
        ratios.append(norm / params.residual_scale())
    assert all(np.isfinite(ratios)) and min(ratios) > 0
    assert max(ratios) / min(ratios) < 10.0


def test_ansatz_energy_is_close_to_the_reduced_energy(bubble_setting):
    grid, operator, provider, spins, feasible = bubble_setting
    points = theta0_configuration(grid.domain, spins, feasible, BUBBLE_LAMBDA)
    config = compute_masses(ConcentrationConfig(points, spins, BUBBLE_LAMBDA), provider, rule="spin_product")
    params = _params(0.1)
    bundle = build_ansatz(grid, config, params, operator, provider)
    value = energy(grid, bundle.U, params.eps, params.lam)
    prediction = reduced_energy_prediction(config, params, phi_m(config, provider))
    gap = abs(value - prediction) / energy_gap_scale(config.m, params)
    assert math.isfinite(gap)
    assert gap < 1.0
