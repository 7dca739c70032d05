"""Robin Green function, its regular part and the half-plane closed form.

The Green function solves ``-Delta G(., y) = 8 pi delta_y`` with
``dG/dnu + lambda G = 0`` on the boundary. It is split as
``G(x, y) = Gamma(x - y) + H(x, y)`` with ``Gamma(z) = -4 log|z|``. Near the
boundary the closed-form half-plane image of the source is split off H as
well; only the remainder is discretized, with Robin data ``-R_lambda`` of
the subtracted part.
"""

import logging
import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import DomainMembershipError, IntegrityError, ParameterError, SingularityError
from ..elliptic.base import Field
from ..elliptic.robin import RobinOperator, assemble
from ..geometry.domain import Domain
from ..geometry.grid import Grid
from .asymptotics import complex_exponential_kernel, laguerre_integral

GREEN_NORMALIZATION = 8 * math.pi
# reach and march step of the image ray, in units of 1/lambda
IMAGE_REACH = 40.0
IMAGE_MARCH_STEP = 0.25

Point = Tuple[float, float]


def fundamental(x: Sequence[float], y: Sequence[float]) -> float:
    """Gamma(x - y) = -4 log|x - y|."""
    r = math.hypot(x[0] - y[0], x[1] - y[1])
    if r == 0:
        raise SingularityError(f"Fundamental solution is singular at x = y = {list(x)}")
    return -4.0 * math.log(r)


@dataclass(frozen=True, eq=False)
class BoundaryImage:
    """Half-plane Robin image of a source near the boundary.

    With foot point p, outward normal nu and depth d of the source, the image
    sits at p + d nu and carries a line charge along p + (d + s) nu for
    0 <= s < length:

        S(x) = 4 log|x - image| + 8 Re[K(c) - e^{-lambda length} K(c + lambda length)],
        c = lambda (height + d + i q),

    where height = -(x - p).nu and q = (x - p).tau. Gamma + S is the Robin
    Green function of the tangent half-plane, so subtracting it leaves a
    regular part that is smooth on the layer scale.
    """

    foot: np.ndarray
    normal: np.ndarray
    depth: float
    lam: float
    length: float = math.inf

    @property
    def point(self) -> np.ndarray:
        return self.foot + self.depth * self.normal

    @property
    def tangent(self) -> np.ndarray:
        return np.array([-self.normal[1], self.normal[0]])

    def _argument(self, points: np.ndarray) -> np.ndarray:
        offset = points - self.foot
        height = -(offset @ self.normal)
        q = offset @ self.tangent
        return self.lam * (height + self.depth + 1j * q)

    def _kernel(self, c: np.ndarray, derivative: bool = False) -> np.ndarray:
        value = complex_exponential_kernel(c)
        if derivative:
            value = value - 1.0 / c
        if math.isfinite(self.length):
            shift = self.lam * self.length
            tail = complex_exponential_kernel(c + shift)
            if derivative:
                tail = tail - 1.0 / (c + shift)
            value = value - math.exp(-shift) * tail
        return value

    def values(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        diff = points - self.point
        r2 = np.sum(diff * diff, axis=1)
        return 2.0 * np.log(r2) + 8.0 * self._kernel(self._argument(points)).real

    def value(self, x: Sequence[float]) -> float:
        return float(self.values(np.asarray(x, dtype=float))[0])

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Gradient of S, shape (n, 2)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        diff = points - self.point
        r2 = np.sum(diff * diff, axis=1)
        slope = self.lam * self._kernel(self._argument(points), derivative=True)
        d_height = slope.real
        d_q = -slope.imag
        return (4.0 * diff / r2[:, None]
                + 8.0 * (np.outer(-d_height, self.normal) + np.outer(d_q, self.tangent)))

    def robin_defect(self, grid: Grid) -> np.ndarray:
        """dS/dnu + lam S at the boundary nodes."""
        nodes = grid.nodes[grid.boundary_index]
        flux = np.sum(self.gradients(nodes) * grid.boundary_normals, axis=1)
        return flux + self.lam * self.values(nodes)

    def mirrored(self) -> "BoundaryImage":
        flip = np.array([1.0, -1.0])
        return replace(self, foot=self.foot * flip, normal=self.normal * flip)


def boundary_image(domain: Domain, lam: float, source: Sequence[float]) -> Optional[BoundaryImage]:
    """Image of the source in the tangent half-plane at its foot point.

    None when the projection is a tie or the image point falls inside the
    domain. The line charge stops short of the first point where its ray
    re-enters the domain within IMAGE_REACH / lambda.
    """
    projection = domain.boundary_projection(source)
    if projection.tie or projection.distance <= 0:
        return None
    normal = domain.outward_normal(projection.point)
    image = BoundaryImage(np.asarray(projection.point, dtype=float), normal, float(projection.distance),
                          float(lam))
    if domain.contains(image.point):
        return None
    step = IMAGE_MARCH_STEP / lam
    for k in range(1, int(IMAGE_REACH / IMAGE_MARCH_STEP) + 1):
        if domain.contains(image.point + k * step * normal):
            length = 0.9 * (k - 1) * step
            logging.debug(f"Image ray of {list(source)} re-enters the domain; line charge cut at {length:.4g}")
            return replace(image, length=length)
    return image


@dataclass(frozen=True)
class GreenField:
    """Regular part H(., source) of the Robin Green function on a grid.

    H = S + smooth_part, with S the boundary image (when there is one) in
    closed form and smooth_part the grid solution.
    """

    source: Point
    lam: float
    smooth_part: Field
    image: Optional[BoundaryImage] = None
    normalization: float = GREEN_NORMALIZATION

    @cached_property
    def regular_part(self) -> Field:
        """H at the grid nodes."""
        if self.image is None:
            return self.smooth_part
        grid = self.smooth_part.grid
        return Field(grid, self.smooth_part.values + self.image.values(grid.nodes))

    def regular_value(self, x: Sequence[float]) -> float:
        value = float(self.smooth_part.at(x))
        if self.image is not None:
            value += self.image.value(x)
        return value

    def value(self, x: Sequence[float]) -> float:
        return green_value(self, x)

    def mirrored(self) -> "GreenField":
        image = None if self.image is None else self.image.mirrored()
        return GreenField((self.source[0], -self.source[1]), self.lam, self.smooth_part.mirrored(), image)


def regular_part_boundary_data(grid: Grid, lam: float, source: Sequence[float],
                               image: Optional[BoundaryImage] = None) -> np.ndarray:
    """-(dGamma/dnu + lam Gamma) at the boundary nodes, less the Robin defect of the image."""
    diff = grid.nodes[grid.boundary_index] - np.asarray(source, dtype=float)
    r2 = np.sum(diff * diff, axis=1)
    flux = np.sum(diff * grid.boundary_normals, axis=1)
    data = 4.0 * flux / r2 + 2.0 * lam * np.log(r2)
    if image is not None:
        data = data - image.robin_defect(grid)
    return data


def solve_regular_part(grid: Grid, lam: float, source: Sequence[float],
                       operator: Optional[RobinOperator] = None, use_image: bool = True) -> GreenField:
    """Solve Delta H = 0 with Robin data -R_lambda Gamma(. - source).

    Args:
        grid: Polar grid
        lam: Robin coefficient
        source: Source point, at least two grid layers inside the domain
        operator: Pre-assembled operator for the same grid and lam
        use_image: Subtract the half-plane image before solving

    Returns:
        GreenField for the source
    """
    point = (float(source[0]), float(source[1]))
    if not grid.domain.contains(point):
        raise DomainMembershipError(f"Green source {list(point)} is outside the domain")
    grid.require_resolved(point)
    if operator is None:
        operator = assemble(grid, lam)
    elif operator.robin_coefficient != lam:
        raise ParameterError(
            f"operator built for lambda={operator.robin_coefficient}, requested lambda={lam}"
        )
    image = boundary_image(grid.domain, lam, point) if use_image else None
    smooth = operator.solve(boundary_data=regular_part_boundary_data(grid, lam, point, image))
    return GreenField(point, float(lam), smooth, image)


def green_value(gf: GreenField, x: Sequence[float]) -> float:
    """G(x, source) = Gamma(x - source) + H(x, source)."""
    return fundamental(x, gf.source) + gf.regular_value(x)


def robin_function(grid: Grid, lam: float, source: Sequence[float],
                   operator: Optional[RobinOperator] = None) -> float:
    """H(source, source)."""
    return solve_regular_part(grid, lam, source, operator).regular_value(source)


def regular_part_bounds(gf: GreenField) -> Tuple[float, float]:
    """Smallest and largest nodal value of the regular part."""
    values = gf.regular_part.values
    return float(values.min()), float(values.max())


class GreenProvider:
    """Thread-safe cache of Green fields sharing one factorized operator.

    Sources below the symmetry axis are served by mirroring the field of the
    reflected source, so reflected configurations see identical values.
    """

    def __init__(self, grid: Grid, lam: float, operator: Optional[RobinOperator] = None,
                 cache_size: int = 256):
        self.grid = grid
        self.lam = float(lam)
        self.operator = operator if operator is not None else assemble(grid, lam)
        self.cache_size = cache_size
        self._cache: "OrderedDict[Point, GreenField]" = OrderedDict()
        self._lock = threading.Lock()
        self.solves = 0

    def field(self, source: Sequence[float]) -> GreenField:
        key = (float(source[0]), float(source[1]))
        if key[1] < 0 and self.grid.domain.is_symmetric:
            return self.field((key[0], -key[1])).mirrored()
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                self._cache.move_to_end(key)
                return cached
        gf = solve_regular_part(self.grid, self.lam, key, self.operator)
        with self._lock:
            self.solves += 1
            self._cache[key] = gf
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return gf

    def fields(self, sources: Iterable[Sequence[float]], workers: int = 1) -> List[GreenField]:
        sources = list(sources)
        if workers <= 1 or len(sources) <= 1:
            return [self.field(s) for s in sources]
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(self.field, sources))

    def robin(self, x: Sequence[float]) -> float:
        """Robin function H(x, x)."""
        return self.field(x).regular_value(x)

    def regular(self, x: Sequence[float], y: Sequence[float]) -> float:
        """H(x, y)."""
        return self.field(y).regular_value(x)

    def green(self, x: Sequence[float], y: Sequence[float]) -> float:
        """G(x, y)."""
        return fundamental(x, y) + self.regular(x, y)


def _halfplane_check(a: float, x: Sequence[float], y: Sequence[float]) -> None:
    if not a > 0:
        raise ParameterError(f"half-plane Robin coefficient must be positive, got {a}")
    if x[1] < 0 or y[1] <= 0:
        raise DomainMembershipError(f"points must lie in the upper half-plane, got x={list(x)}, y={list(y)}")


def halfplane_integral(a: float, x: Sequence[float], y: Sequence[float]) -> float:
    """int_0^inf e^{-a s} (x2 + s + y2) / |x + s e2 - y*|^2 ds."""
    q = x[0] - y[0]
    p = x[1] + y[1]

    def integrand(t):
        w = p + t / a
        return w / (q * q + w * w) / a

    return float(laguerre_integral(integrand))


def halfplane_integral_dx2(a: float, x: Sequence[float], y: Sequence[float]) -> float:
    """Derivative of the half-plane integral with respect to x2."""
    q = x[0] - y[0]
    p = x[1] + y[1]

    def integrand(t):
        w = p + t / a
        return (q * q - w * w) / (q * q + w * w) ** 2 / a

    return float(laguerre_integral(integrand))


def halfplane_green(a: float, x: Sequence[float], y: Sequence[float],
                    c_gamma: Optional[float] = None) -> float:
    """Closed-form Robin Green function of the upper half-plane.

    ``c_gamma * (Gamma(x - y) - Gamma(x - y*)) - 2 I(x, y)`` with ``y* = (y1, -y2)``;
    ``c_gamma`` defaults to the calibrated constant.
    """
    _halfplane_check(a, x, y)
    if c_gamma is None:
        c_gamma = calibrate_halfplane().c_gamma
    image = (y[0], -y[1])
    singular = fundamental(x, y) - fundamental(x, image)
    return c_gamma * singular - 2.0 * halfplane_integral(a, x, y)


def halfplane_robin_parts(a: float, x1: float, y: Sequence[float]) -> Tuple[float, float]:
    """Robin defect -dG/dx2 + a G at (x1, 0), split into the Gamma part and the integral part."""
    x = (x1, 0.0)
    _halfplane_check(a, x, y)
    r2 = (x1 - y[0]) ** 2 + y[1] ** 2
    gamma_part = -8.0 * y[1] / r2
    integral_part = 2.0 * (halfplane_integral_dx2(a, x, y) - a * halfplane_integral(a, x, y))
    return gamma_part, integral_part


def halfplane_robin_residual(a: float, x1: float, y: Sequence[float],
                             c_gamma: Optional[float] = None) -> float:
    if c_gamma is None:
        c_gamma = calibrate_halfplane().c_gamma
    gamma_part, integral_part = halfplane_robin_parts(a, x1, y)
    return c_gamma * gamma_part + integral_part


@dataclass(frozen=True)
class HalfplaneCalibration:
    c_gamma: float
    max_residual: float
    a: float
    source: Point
    n_probes: int


@lru_cache(maxsize=None)
def calibrate_halfplane(a: float = 1.0, source: Point = (0.0, 1.0), n_probes: int = 100,
                        half_width: float = 5.0) -> HalfplaneCalibration:
    """Least-squares fit of the scalar multiplying the Gamma terms.

    The Robin defect on {x2 = 0} is linear in c_gamma; the fitted value must
    cancel it to 1e-8 at every probe.
    """
    probes = np.linspace(-half_width, half_width, n_probes) + source[0]
    parts = np.array([halfplane_robin_parts(a, x1, source) for x1 in probes])
    gamma_part, integral_part = parts[:, 0], parts[:, 1]
    c_gamma = -float(gamma_part @ integral_part) / float(gamma_part @ gamma_part)
    residual = float(np.max(np.abs(c_gamma * gamma_part + integral_part)))
    if residual > 1e-8:
        raise IntegrityError(f"half-plane calibration leaves Robin residual {residual:.3e}")
    logging.debug(f"Half-plane calibration: c_gamma={c_gamma:.15g}, residual={residual:.3e}")
    return HalfplaneCalibration(c_gamma, residual, a, tuple(source), n_probes)
