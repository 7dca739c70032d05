import math

import numpy as np
import pytest

from sinhrobin.core.errors import ConfigError, MassOverflowError, ResolutionError, SingularityError
from sinhrobin.geometry.domain import Annulus, Disk
from sinhrobin.geometry.grid import build_grid
from sinhrobin.processors.asymptotics import find_theta0, robin_expansion
from sinhrobin.processors.green import GreenProvider
from sinhrobin.processors.hamiltonian import (
    ConcentrationConfig,
    FeasibleSet,
    SpinConfig,
    asymptotic_phi_m,
    boundary_gap,
    compute_masses,
    grad_phi_m,
    minimize,
    phi_m,
    theta0_configuration,
)


class StubProvider:
    """Robin function x1 + robin_shift and a constant Green function."""

    def __init__(self, robin_shift=0.0, green=1.0):
        self.robin_shift = robin_shift
        self.green_value = green

    def robin(self, x):
        return float(x[0]) + self.robin_shift

    def green(self, x, y):
        return self.green_value


@pytest.fixture(scope="module")
def layer_provider():
    grid = build_grid(Disk(1.0), 48, 128, lambda_max=10.0)
    return GreenProvider(grid, 10.0)


def test_spin_validation():
    with pytest.raises(ConfigError, match="spin must be ±1, got 0"):
        SpinConfig((1, 0))
    with pytest.raises(ConfigError):
        SpinConfig(())
    assert SpinConfig((1, -1)).negated().spins == (-1, 1)


def test_configuration_validation():
    spins = SpinConfig((1, -1))
    with pytest.raises(SingularityError):
        ConcentrationConfig([[0.5, 0.0], [0.5, 0.0]], spins, 10.0)
    with pytest.raises(ConfigError):
        ConcentrationConfig([[0.5, 0.0]], spins, 10.0)


def test_configuration_symmetries():
    config = ConcentrationConfig([[0.5, 0.2], [-0.3, 0.1]], SpinConfig((1, -1)), 10.0)
    np.testing.assert_array_equal(config.mirrored().points, [[0.5, -0.2], [-0.3, -0.1]])
    swapped = config.permuted([1, 0])
    assert swapped.spins.spins == (-1, 1)
    np.testing.assert_array_equal(swapped.points[0], [-0.3, 0.1])


def test_single_point_hamiltonian_is_the_robin_function():
    config = ConcentrationConfig([[0.4, 0.0]], SpinConfig((1,)), 10.0)
    assert phi_m(config, StubProvider()) == pytest.approx(0.4)


def test_hamiltonian_interaction_sign():
    points = [[0.1, 0.0], [0.5, 0.0]]
    provider = StubProvider(green=2.0)
    opposite = ConcentrationConfig(points, SpinConfig((1, -1)), 10.0)
    alike = ConcentrationConfig(points, SpinConfig((1, 1)), 10.0)
    assert phi_m(opposite, provider) == pytest.approx(0.6 - 4.0)
    assert phi_m(alike, provider) == pytest.approx(0.6 + 4.0)
    negated = ConcentrationConfig(points, SpinConfig((-1, 1)), 10.0)
    assert phi_m(negated, provider) == phi_m(opposite, provider)


def test_mass_of_a_single_point():
    config = ConcentrationConfig([[0.0, 0.0]], SpinConfig((1,)), 2.0)
    result = compute_masses(config, StubProvider(), delta=0.5)
    assert result.masses_final
    assert result.masses[0] == pytest.approx(math.sqrt(2.0))
    assert result.mass_bounds_ok is True
    assert compute_masses(config, StubProvider(), delta=0.9).mass_bounds_ok is False


def test_mass_rules_differ_on_the_second_point():
    config = ConcentrationConfig([[0.0, 0.0], [0.0, 0.5]], SpinConfig((1, -1)), 2.0)
    as_written = compute_masses(config, StubProvider(), rule="as_written").masses
    product = compute_masses(config, StubProvider(), rule="spin_product").masses
    assert as_written[0] == pytest.approx(product[0])
    assert as_written[1] == pytest.approx(math.sqrt(2.0 * math.e))
    assert product[1] == pytest.approx(math.sqrt(2.0 / math.e))


def test_mass_overflow():
    config = ConcentrationConfig([[0.0, 0.0]], SpinConfig((1,)), 2.0)
    with pytest.raises(MassOverflowError):
        compute_masses(config, StubProvider(robin_shift=1000.0))
    with pytest.raises(ConfigError):
        compute_masses(config, StubProvider(), rule="unknown")


def test_axis_feasible_set(disk):
    feasible = FeasibleSet.for_mode(disk, 2, "axis_symmetric")
    assert feasible.axis
    assert feasible.delta_sep == pytest.approx(0.5)
    assert feasible.contains(disk, 10.0, [[0.97, 0.0], [-0.97, 0.0]])
    assert not feasible.contains(disk, 10.0, [[0.97, 0.01], [-0.97, 0.0]])
    assert not feasible.contains(disk, 10.0, [[0.97, 0.0], [0.9, 0.0]])
    assert not FeasibleSet(K=5.0).contains(disk, 10.0, [[0.0, 0.0]])
    assert FeasibleSet(K=20.0).contains(disk, 10.0, [[0.0, 0.0]])


def test_feasible_set_validation(disk, annulus):
    with pytest.raises(ConfigError):
        FeasibleSet(K=1.0)
    with pytest.raises(ConfigError):
        FeasibleSet.for_mode(disk, 2, "orbit")
    with pytest.raises(ConfigError):
        FeasibleSet.for_mode(annulus, 2, "per_component", components=[0, 2])


def test_axis_theta0_configuration(disk):
    spins = SpinConfig((1, -1))
    feasible = FeasibleSet.for_mode(disk, 2, "axis_symmetric")
    depth = find_theta0().theta0 / 10.0
    points = theta0_configuration(disk, spins, feasible, 10.0)
    np.testing.assert_allclose(points, [[1.0 - depth, 0.0], [-1.0 + depth, 0.0]])


def test_per_component_configuration(annulus):
    spins = SpinConfig((1, -1))
    feasible = FeasibleSet.for_mode(annulus, 2, "per_component")
    assert feasible.components == (0, 1)
    points = theta0_configuration(annulus, spins, feasible, 10.0)
    theta0 = find_theta0().theta0
    for j, x in enumerate(points):
        projection = annulus.boundary_projection(x)
        assert projection.component == feasible.components[j]
        assert 10.0 * projection.distance == pytest.approx(theta0)
    assert feasible.contains(annulus, 10.0, points)


@pytest.mark.parametrize("spins", [(1,), (1, -1)])
def test_gradient_vanishes_across_the_axis(disk_grid, spins):
    provider = GreenProvider(disk_grid, 3.0)
    feasible = FeasibleSet.for_mode(disk_grid.domain, len(spins), "axis_symmetric")
    points = theta0_configuration(disk_grid.domain, SpinConfig(spins), feasible, 3.0)
    config = ConcentrationConfig(points, SpinConfig(spins), 3.0)
    gradient = grad_phi_m(config, provider)
    assert np.all(np.abs(gradient[:, 1]) <= 1e-6)
    assert np.all(np.isfinite(gradient))


def test_single_point_minimizer_matches_a_fibre_scan(layer_provider):
    disk = layer_provider.grid.domain
    spins = SpinConfig((1,))
    feasible = FeasibleSet.for_mode(disk, 1, "axis_symmetric")
    result = minimize(disk, spins, feasible, 10.0, layer_provider, n_starts=2)

    scan = [
        phi_m(ConcentrationConfig([[1.0 - theta / 10.0, 0.0]], spins, 10.0), layer_provider)
        for theta in np.linspace(0.1, 2.0, 60)
    ]
    assert result.value <= min(scan) + 1e-6
    assert result.config.points[0, 1] == 0.0
    assert not result.boundary_minimum
    assert 0.15 <= 10.0 * (1.0 - result.config.points[0, 0]) <= 0.6
    assert result.trace and len(result.start_values) == 2


def test_boundary_of_the_feasible_set_is_higher(layer_provider):
    disk = layer_provider.grid.domain
    spins = SpinConfig((1,))
    feasible = FeasibleSet.for_mode(disk, 1, "axis_symmetric", K=5.0)
    gap = boundary_gap(disk, spins, feasible, 10.0, layer_provider)
    assert gap.evaluated == 2
    assert gap.gap > 0


def test_asymptotic_phi_m_uses_the_expansion_on_the_diagonal():
    disk = Disk(1.0)
    kappa = disk.mean_curvature((1.0, 0.0))
    layer = robin_expansion(10.0, 0.1, kappa)
    single = ConcentrationConfig([[0.9, 0.0]], SpinConfig((1,)), 10.0)
    assert asymptotic_phi_m(single, StubProvider(), disk) == pytest.approx(layer)
    pair = ConcentrationConfig([[0.9, 0.0], [-0.9, 0.0]], SpinConfig((1, -1)), 10.0)
    assert asymptotic_phi_m(pair, StubProvider(green=1.0), disk) == pytest.approx(2 * layer - 2.0)


@pytest.fixture(scope="module")
def fine_disk_provider():
    grid = build_grid(Disk(1.0), 48, 512, lambda_max=20.0)
    return GreenProvider(grid, 20.0)


@pytest.fixture(scope="module")
def fine_annulus_provider():
    grid = build_grid(Annulus(0.5, 1.0), 48, 512, lambda_max=20.0)
    return GreenProvider(grid, 20.0)


def test_opposite_spins_on_the_disk_axis_sit_near_theta0(fine_disk_provider):
    disk = fine_disk_provider.grid.domain
    spins = SpinConfig((1, -1))
    feasible = FeasibleSet.for_mode(disk, 2, "axis_symmetric")
    result = minimize(disk, spins, feasible, 20.0, fine_disk_provider, n_starts=2)
    theta0 = find_theta0().theta0
    assert not result.boundary_minimum
    assert result.config.points[0, 0] > 0 > result.config.points[1, 0]
    for x in result.config.points:
        assert 0.9 <= 20.0 * disk.distance_to_boundary(x) / theta0 <= 1.1


def test_pair_on_the_disk_axis_has_a_positive_boundary_gap(fine_disk_provider):
    disk = fine_disk_provider.grid.domain
    spins = SpinConfig((1, -1))
    feasible = FeasibleSet.for_mode(disk, 2, "axis_symmetric")
    gap = boundary_gap(disk, spins, feasible, 20.0, fine_disk_provider)
    assert gap.evaluated == 4
    assert gap.ok and gap.gap > 0
    assert len(gap.thetas) == 4


def test_points_stay_on_their_annulus_components(fine_annulus_provider):
    annulus = fine_annulus_provider.grid.domain
    spins = SpinConfig((1, -1))
    feasible = FeasibleSet.for_mode(annulus, 2, "per_component", components=[0, 1])
    result = minimize(annulus, spins, feasible, 20.0, fine_annulus_provider, n_starts=2, maxiter=200)
    theta0 = find_theta0().theta0
    for j, x in enumerate(result.config.points):
        projection = annulus.boundary_projection(x)
        assert projection.component == j
        assert projection.distance <= 3.0 / 20.0
        assert 0.85 <= 20.0 * projection.distance / theta0 <= 1.2


def test_annulus_boundary_gap_backs_off_to_evaluable_depths(fine_annulus_provider):
    annulus = fine_annulus_provider.grid.domain
    spins = SpinConfig((1, -1))
    feasible = FeasibleSet.for_mode(annulus, 2, "per_component", components=[0, 1])
    gap = boundary_gap(annulus, spins, feasible, 20.0, fine_annulus_provider, n_anchors=2)
    # lambda d = K = 20 is deeper than the half width 0.25 of the annulus
    assert gap.evaluated > 0
    assert max(gap.thetas) < 20.0 * 0.25
    assert gap.ok


class UnresolvedAwayFrom(StubProvider):
    """Stub that only resolves one point."""

    def __init__(self, point):
        super().__init__()
        self.point = np.asarray(point, dtype=float)

    def robin(self, x):
        if not np.allclose(x, self.point):
            raise ResolutionError(f"{list(x)} is unresolved")
        return 0.0


def test_boundary_gap_without_evaluable_samples_is_not_ok(disk):
    spins = SpinConfig((1,))
    feasible = FeasibleSet.for_mode(disk, 1, "axis_symmetric")
    reference = theta0_configuration(disk, spins, feasible, 10.0)[0]
    gap = boundary_gap(disk, spins, feasible, 10.0, UnresolvedAwayFrom(reference))
    assert gap.evaluated == 0 and gap.skipped == 2
    assert math.isnan(gap.boundary_min)
    assert not gap.ok
    assert gap.to_dict()["ok"] is False
