import math

import numpy as np
import pytest

from sinhrobin.core.errors import DomainMembershipError, ParameterError, SingularityError
from sinhrobin.elliptic.robin import assemble
from sinhrobin.geometry.domain import Annulus, Disk
from sinhrobin.geometry.grid import build_grid
from sinhrobin.processors.asymptotics import robin_expansion
from sinhrobin.processors.green import (
    BoundaryImage,
    GreenProvider,
    boundary_image,
    calibrate_halfplane,
    fundamental,
    halfplane_green,
    halfplane_integral,
    halfplane_integral_dx2,
    halfplane_robin_residual,
    regular_part_bounds,
    robin_function,
    solve_regular_part,
)


@pytest.fixture(scope="module")
def green_grid():
    return build_grid(Disk(1.0), 48, 128)


@pytest.fixture(scope="module")
def provider(green_grid):
    return GreenProvider(green_grid, 5.0)


def test_fundamental_solution():
    assert fundamental((0.0, 0.0), (1.0, 0.0)) == 0.0
    assert fundamental((0.0, 0.0), (0.0, 0.5)) == pytest.approx(4 * math.log(2))
    with pytest.raises(SingularityError):
        fundamental((0.3, 0.1), (0.3, 0.1))


@pytest.mark.parametrize("lam", [0.5, 5.0, 40.0])
def test_disk_centre_regular_part_is_constant(green_grid, lam):
    assert robin_function(green_grid, lam, (0.0, 0.0)) == pytest.approx(4.0 / lam, rel=1e-10)


def test_green_function_is_symmetric(green_grid, provider):
    rng = np.random.default_rng(3)
    tolerance = 5 * green_grid.max_cell_diameter() ** 2
    for _ in range(8):
        r = 0.6 * np.sqrt(rng.uniform(0, 1, 2))
        t = rng.uniform(0, 2 * math.pi, 2)
        x = (r[0] * math.cos(t[0]), r[0] * math.sin(t[0]))
        y = (r[1] * math.cos(t[1]), r[1] * math.sin(t[1]))
        assert abs(provider.green(x, y) - provider.green(y, x)) <= tolerance


def test_mirrored_source_gives_mirrored_field(green_grid):
    op = assemble(green_grid, 5.0)
    upper = solve_regular_part(green_grid, 5.0, (0.2, 0.3), op)
    lower = solve_regular_part(green_grid, 5.0, (0.2, -0.3), op)
    mirrored = upper.mirrored().regular_part.values
    np.testing.assert_allclose(lower.regular_part.values, mirrored, atol=1e-10)


def test_provider_caches_and_mirrors(green_grid):
    provider = GreenProvider(green_grid, 5.0)
    first = provider.robin((0.3, 0.2))
    assert provider.robin((0.3, 0.2)) == first
    assert provider.robin((0.3, -0.2)) == first
    assert provider.solves == 1


def test_regular_part_bounds(green_grid, provider):
    low, high = regular_part_bounds(provider.field((0.4, 0.0)))
    assert low < high
    assert np.isfinite([low, high]).all()


def test_source_outside_the_domain(green_grid):
    with pytest.raises(DomainMembershipError):
        solve_regular_part(green_grid, 5.0, (1.2, 0.0))


def test_operator_lambda_mismatch(green_grid):
    with pytest.raises(ParameterError):
        solve_regular_part(green_grid, 5.0, (0.2, 0.0), assemble(green_grid, 2.0))


def test_robin_function_follows_boundary_layer_expansion():
    lam = 10.0
    grid = build_grid(Disk(1.0), 64, 256, lambda_max=lam)
    provider = GreenProvider(grid, lam)
    for theta in (0.5, 1.0, 2.0):
        d = theta / lam
        numeric = provider.robin((1.0 - d, 0.0))
        assert numeric == pytest.approx(robin_expansion(lam, d, 1.0), abs=0.25)


def test_halfplane_calibration_constant():
    calibration = calibrate_halfplane()
    assert calibration.c_gamma == pytest.approx(-0.25, abs=1e-6)
    assert calibration.max_residual <= 1e-8


@pytest.mark.parametrize("a", [0.5, 1.0, 5.0])
def test_halfplane_robin_condition(a):
    for x1 in np.linspace(-5.0, 5.0, 100):
        assert abs(halfplane_robin_residual(a, x1, (0.0, 1.0))) <= 1e-6


@pytest.mark.parametrize("a", [0.5, 1.0, 5.0])
def test_halfplane_normal_derivative_by_differences(a):
    h = 0.01
    y = (0.2, 0.7)
    x1 = -0.4
    values = [halfplane_green(a, (x1, k * h), y) for k in range(5)]
    stencil = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12 * h)
    forward = float(stencil @ np.array(values))
    assert -forward + a * values[0] == pytest.approx(0.0, abs=1e-5)


def test_halfplane_integral_derivative():
    x, y, step = (0.3, 0.5), (-0.2, 0.4), 1e-3
    above = halfplane_integral(1.0, (x[0], x[1] + step), y)
    below = halfplane_integral(1.0, (x[0], x[1] - step), y)
    numeric = (above - below) / (2 * step)
    assert halfplane_integral_dx2(1.0, x, y) == pytest.approx(numeric, rel=1e-5)


def test_halfplane_domain_checks():
    with pytest.raises(DomainMembershipError):
        halfplane_green(1.0, (0.0, 0.5), (0.0, -1.0))
    with pytest.raises(ParameterError):
        halfplane_green(-1.0, (0.0, 0.5), (0.0, 1.0))


def _flat_image(lam, source, length=math.inf):
    return BoundaryImage(np.array([source[0], 0.0]), np.array([0.0, -1.0]), source[1], lam, length)


@pytest.mark.parametrize("lam", [1.0, 5.0, 40.0])
def test_image_reproduces_the_halfplane_green_function(lam):
    source = (0.2, 0.7)
    image = _flat_image(lam, source)
    for x in [(0.5, 0.1), (-1.3, 2.0), (0.2, 0.05), (3.0, 0.6)]:
        local = fundamental(x, source) + image.value(x)
        assert local == pytest.approx(-4.0 * halfplane_green(lam, x, source, c_gamma=-0.25), rel=1e-7, abs=1e-7)


@pytest.mark.parametrize("lam", [2.0, 20.0])
def test_image_satisfies_the_robin_condition_on_a_flat_boundary(lam):
    source = (0.1, 0.3 / lam)
    image = _flat_image(lam, source)
    normal = image.normal
    for x1 in np.linspace(-2.0, 2.0, 41):
        x = np.array([x1, 0.0])
        diff = x - np.asarray(source)
        gamma_flux = -4.0 * float(diff @ normal) / float(diff @ diff)
        flux = gamma_flux + float(image.gradients(x)[0] @ normal)
        value = fundamental(x, source) + image.value(x)
        assert flux + lam * value == pytest.approx(0.0, abs=1e-7 * lam)


@pytest.mark.parametrize("length", [math.inf, 0.3])
def test_image_gradient_matches_differences(length):
    image = BoundaryImage(np.array([0.6, 0.8]), np.array([0.6, 0.8]), 0.02, 20.0, length)
    x = np.array([0.55, 0.7])
    step = 1e-6
    numeric = [
        (image.value(x + step * e) - image.value(x - step * e)) / (2 * step) for e in np.eye(2)
    ]
    np.testing.assert_allclose(image.gradients(x)[0], numeric, rtol=1e-6, atol=1e-6)


def test_disk_images():
    assert boundary_image(Disk(1.0), 10.0, (0.0, 0.0)) is None
    image = boundary_image(Disk(1.0), 10.0, (0.0, 0.97))
    np.testing.assert_allclose(image.point, [0.0, 1.03])
    assert image.length == math.inf


def test_image_ray_is_cut_where_it_reenters_the_annulus():
    image = boundary_image(Annulus(0.5, 1.0), 20.0, (-0.55, 0.0))
    np.testing.assert_allclose(image.normal, [1.0, 0.0], atol=1e-12)
    assert image.depth == pytest.approx(0.05)
    # ray from the image at x1 = -0.45 meets the inner circle again at x1 = 0.5
    assert 0.8 < image.length < 0.9 * 0.95 + 1e-9


def test_regular_part_includes_the_image(green_grid, provider):
    field = provider.field((0.85, 0.1))
    assert field.image is not None
    nodes = green_grid.nodes[:5]
    np.testing.assert_allclose(field.regular_part.values[:5],
                               field.smooth_part.values[:5] + field.image.values(nodes))
    x = (0.3, -0.2)
    assert field.regular_value(x) == pytest.approx(
        float(field.smooth_part.at(x)) + field.image.value(x)
    )


def test_robin_function_follows_expansion_under_finer_layers():
    lam = 20.0
    grid = build_grid(Disk(1.0), 48, 512, lambda_max=lam)
    provider = GreenProvider(grid, lam)
    for theta in (0.3, 0.6, 1.2, 2.4):
        d = theta / lam
        numeric = provider.robin((1.0 - d, 0.0))
        assert numeric == pytest.approx(robin_expansion(lam, d, 1.0), abs=0.1)
