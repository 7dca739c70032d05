"""Analytic domain catalogue: disk, annulus and x-symmetric star-shaped domains.

Every domain is described in polar form as the set of points
``x = (a(phi) + s * (b(phi) - a(phi))) * (cos phi, sin phi)`` with ``s`` in
``[0, 1]``. ``a`` is the inner radius (zero for simply connected domains)
and ``b`` the outer radius. The same chart drives grid construction,
interpolation and the metric terms of the discrete Laplacian.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from ..core.errors import ConfigError, DomainMembershipError

OUTER = 0
INNER = 1

_MEMBERSHIP_TOL = 1e-12
_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class RadialProfile:
    """Inner and outer radius with their first two angular derivatives."""

    a: np.ndarray
    da: np.ndarray
    dda: np.ndarray
    b: np.ndarray
    db: np.ndarray
    ddb: np.ndarray

    @property
    def length(self) -> np.ndarray:
        return self.b - self.a

    @property
    def dlength(self) -> np.ndarray:
        return self.db - self.da

    @property
    def ddlength(self) -> np.ndarray:
        return self.ddb - self.dda


@dataclass(frozen=True)
class Projection:
    """Closest boundary point of an interior point."""

    point: np.ndarray
    distance: float
    component: int
    tie: bool = False


def _as_point(x: Sequence[float]) -> np.ndarray:
    point = np.asarray(x, dtype=float)
    if point.shape != (2,):
        raise ValueError(f"Expected a 2D point, got shape {point.shape}")
    return point


class Domain(ABC):
    """Bounded planar domain symmetric about the x-axis."""

    kind: str = "domain"
    has_origin: bool = True
    n_components: int = 1

    @abstractmethod
    def radial_profile(self, phi: np.ndarray) -> RadialProfile:
        """Inner/outer radius and derivatives at the given angles."""

    @abstractmethod
    def area(self) -> float:
        """Exact area of the domain."""

    @abstractmethod
    def perimeter(self) -> float:
        """Total boundary length."""

    @abstractmethod
    def _project_upper(self, x: np.ndarray) -> Projection:
        """Projection of a point with x2 >= 0."""

    @abstractmethod
    def _boundary_frame(self, b: np.ndarray, component: int) -> Tuple[np.ndarray, float]:
        """Outward normal and curvature at a boundary point."""

    def parameters(self) -> dict:
        """Plain description used for hashing and output metadata."""
        return {"kind": self.kind}

    @property
    def is_symmetric(self) -> bool:
        return True

    def contains(self, x: Sequence[float]) -> bool:
        """True when x lies in the closed domain."""
        point = _as_point(x)
        phi = math.atan2(point[1], point[0])
        profile = self.radial_profile(np.array([phi]))
        r = math.hypot(point[0], point[1])
        a = float(profile.a[0])
        b = float(profile.b[0])
        return a * (1 - _MEMBERSHIP_TOL) - _MEMBERSHIP_TOL <= r <= b * (1 + _MEMBERSHIP_TOL) + _MEMBERSHIP_TOL

    def parametric_coordinates(self, x: Sequence[float]) -> Tuple[float, float]:
        """Inverse of the polar chart: returns (s, phi) with phi in (-pi, pi]."""
        point = _as_point(x)
        phi = math.atan2(point[1], point[0])
        profile = self.radial_profile(np.array([phi]))
        r = math.hypot(point[0], point[1])
        s = (r - float(profile.a[0])) / float(profile.length[0])
        return s, phi

    def point_at(self, s: float, phi: float) -> np.ndarray:
        """Forward polar chart."""
        profile = self.radial_profile(np.array([phi]))
        r = float(profile.a[0] + s * profile.length[0])
        return np.array([r * math.cos(phi), r * math.sin(phi)])

    def distance_to_boundary(self, x: Sequence[float]) -> float:
        """Euclidean distance to the boundary; zero on the boundary."""
        return self.boundary_projection(x).distance

    def boundary_projection(self, x: Sequence[float]) -> Projection:
        """Closest boundary point. Ties resolve to the smallest boundary angle."""
        point = _as_point(x)
        if not self.contains(point):
            raise DomainMembershipError(f"Point {point.tolist()} lies outside the {self.kind} domain")
        if point[1] >= 0:
            return self._project_upper(point)
        mirrored = self._project_upper(np.array([point[0], -point[1]]))
        return Projection(
            point=np.array([mirrored.point[0], -mirrored.point[1]]),
            distance=mirrored.distance,
            component=mirrored.component,
            tie=mirrored.tie,
        )

    def boundary_component(self, b: Sequence[float]) -> int:
        """Component id of a boundary point (0 outer, 1 inner)."""
        point = _as_point(b)
        phi = math.atan2(point[1], point[0])
        profile = self.radial_profile(np.array([phi]))
        r = math.hypot(point[0], point[1])
        outer = float(profile.b[0])
        inner = float(profile.a[0])
        if abs(r - outer) <= _BOUNDARY_TOL * max(1.0, outer):
            return OUTER
        if self.n_components > 1 and abs(r - inner) <= _BOUNDARY_TOL * max(1.0, inner):
            return INNER
        raise DomainMembershipError(
            f"Point {point.tolist()} is not on the boundary of the {self.kind} domain"
        )

    def outward_normal(self, b: Sequence[float]) -> np.ndarray:
        point = _as_point(b)
        normal, _ = self._boundary_frame(point, self.boundary_component(point))
        return normal

    def mean_curvature(self, b: Sequence[float]) -> float:
        point = _as_point(b)
        _, kappa = self._boundary_frame(point, self.boundary_component(point))
        return kappa

    def axis_interval(self) -> Tuple[float, float]:
        """Endpoints (a, b) of the segment where the domain meets the x-axis."""
        if self.n_components > 1:
            raise ConfigError(f"Axis mode needs a simply connected domain, got {self.kind}", field="MODE")
        profile = self.radial_profile(np.array([0.0, math.pi]))
        return -float(profile.b[1]), float(profile.b[0])

    def component_gap(self) -> float:
        """Minimum distance between distinct boundary components."""
        return math.inf

    def component_anchor(self, component: int, phi: float) -> np.ndarray:
        """Boundary point of a component at polar angle phi."""
        profile = self.radial_profile(np.array([phi]))
        r = float(profile.b[0] if component == OUTER else profile.a[0])
        return np.array([r * math.cos(phi), r * math.sin(phi)])


class Disk(Domain):
    """Disk of radius R centred at the origin."""

    kind = "disk"
    has_origin = True
    n_components = 1

    def __init__(self, radius: float = 1.0):
        if not radius > 0:
            raise ConfigError(f"disk radius must be positive, got {radius}", field="DOMAIN_RADIUS")
        self.radius = float(radius)

    def parameters(self) -> dict:
        return {"kind": self.kind, "radius": self.radius}

    def radial_profile(self, phi: np.ndarray) -> RadialProfile:
        phi = np.asarray(phi, dtype=float)
        zeros = np.zeros_like(phi)
        return RadialProfile(zeros, zeros, zeros, np.full_like(phi, self.radius), zeros, zeros)

    def area(self) -> float:
        return math.pi * self.radius ** 2

    def perimeter(self) -> float:
        return 2 * math.pi * self.radius

    def _project_upper(self, x: np.ndarray) -> Projection:
        r = math.hypot(x[0], x[1])
        if r <= _MEMBERSHIP_TOL * self.radius:
            logging.debug("Disk centre is equidistant from the whole boundary; returning angle 0")
            return Projection(np.array([self.radius, 0.0]), self.radius, OUTER, tie=True)
        return Projection(self.radius * x / r, max(self.radius - r, 0.0), OUTER)

    def _boundary_frame(self, b: np.ndarray, component: int) -> Tuple[np.ndarray, float]:
        return b / math.hypot(b[0], b[1]), 1.0 / self.radius


class Annulus(Domain):
    """Annulus r_in < |x| < r_out; boundary component 1 is the hole."""

    kind = "annulus"
    has_origin = False
    n_components = 2

    def __init__(self, r_in: float, r_out: float):
        if not 0 < r_in < r_out:
            raise ConfigError(
                f"annulus radii must satisfy 0 < r_in < r_out, got r_in={r_in}, r_out={r_out}",
                field="DOMAIN_INNER_RADIUS",
            )
        self.r_in = float(r_in)
        self.r_out = float(r_out)

    def parameters(self) -> dict:
        return {"kind": self.kind, "r_in": self.r_in, "r_out": self.r_out}

    def radial_profile(self, phi: np.ndarray) -> RadialProfile:
        phi = np.asarray(phi, dtype=float)
        zeros = np.zeros_like(phi)
        return RadialProfile(
            np.full_like(phi, self.r_in), zeros, zeros, np.full_like(phi, self.r_out), zeros, zeros
        )

    def area(self) -> float:
        return math.pi * (self.r_out ** 2 - self.r_in ** 2)

    def perimeter(self) -> float:
        return 2 * math.pi * (self.r_out + self.r_in)

    def component_gap(self) -> float:
        return self.r_out - self.r_in

    def _project_upper(self, x: np.ndarray) -> Projection:
        r = math.hypot(x[0], x[1])
        to_outer = max(self.r_out - r, 0.0)
        to_inner = max(r - self.r_in, 0.0)
        direction = x / r
        if to_inner < to_outer:
            return Projection(self.r_in * direction, to_inner, INNER)
        tie = to_inner == to_outer
        if tie:
            logging.debug(f"Point {x.tolist()} is on the mid circle; projecting to the outer boundary")
        return Projection(self.r_out * direction, to_outer, OUTER, tie=tie)

    def _boundary_frame(self, b: np.ndarray, component: int) -> Tuple[np.ndarray, float]:
        radial = b / math.hypot(b[0], b[1])
        if component == INNER:
            return -radial, -1.0 / self.r_in
        return radial, 1.0 / self.r_out


class StarSymmetric(Domain):
    """Star-shaped domain with radius r(phi) = c0 + sum_k c_k cos(k phi)."""

    kind = "star"
    has_origin = True
    n_components = 1

    _SCAN_POINTS = 4096
    _MAX_REFINEMENTS = 64

    def __init__(self, coefficients: Sequence[float]):
        coefficients = [float(c) for c in coefficients]
        if not coefficients:
            raise ConfigError("star domain needs at least one cosine coefficient",
                              field="DOMAIN_COEFFICIENTS")
        self.coefficients = np.array(coefficients)
        self._modes = np.arange(len(coefficients), dtype=float)
        sample = self.radius(np.linspace(0.0, 2 * math.pi, 8192, endpoint=False))
        if not np.all(sample > 0):
            raise ConfigError("star radius profile must stay positive", field="DOMAIN_COEFFICIENTS")

    def parameters(self) -> dict:
        return {"kind": self.kind, "coefficients": self.coefficients.tolist()}

    def radius(self, phi: np.ndarray, order: int = 0) -> np.ndarray:
        """r(phi) or its first/second angular derivative."""
        phi = np.asarray(phi, dtype=float)
        angles = np.multiply.outer(phi, self._modes)
        k = self._modes
        if order == 0:
            return np.cos(angles) @ self.coefficients
        if order == 1:
            return -np.sin(angles) @ (k * self.coefficients)
        if order == 2:
            return -np.cos(angles) @ (k * k * self.coefficients)
        raise ValueError(f"Unsupported derivative order {order}")

    def radial_profile(self, phi: np.ndarray) -> RadialProfile:
        phi = np.asarray(phi, dtype=float)
        zeros = np.zeros_like(phi)
        return RadialProfile(
            zeros, zeros, zeros, self.radius(phi), self.radius(phi, 1), self.radius(phi, 2)
        )

    def area(self) -> float:
        # 0.5 * integral of r^2 over a period
        c = self.coefficients
        return math.pi * (c[0] ** 2 + 0.5 * float(np.sum(c[1:] ** 2)))

    def perimeter(self) -> float:
        phi = np.linspace(0.0, 2 * math.pi, 8192, endpoint=False)
        speed = np.hypot(self.radius(phi), self.radius(phi, 1))
        return float(np.sum(speed) * (2 * math.pi / phi.size))

    def _boundary_point(self, phi: float) -> np.ndarray:
        r = float(self.radius(np.array([phi]))[0])
        return np.array([r * math.cos(phi), r * math.sin(phi)])

    def _project_upper(self, x: np.ndarray) -> Projection:
        phi = np.linspace(0.0, 2 * math.pi, self._SCAN_POINTS, endpoint=False)
        r = self.radius(phi)
        dist2 = (r * np.cos(phi) - x[0]) ** 2 + (r * np.sin(phi) - x[1]) ** 2
        local = np.flatnonzero((dist2 <= np.roll(dist2, 1)) & (dist2 <= np.roll(dist2, -1)))
        step = phi[1] - phi[0]

        if local.size > self._MAX_REFINEMENTS:
            k = int(np.argmin(dist2))
            point = self._boundary_point(float(phi[k]))
            logging.debug(f"Flat distance profile from {x.tolist()}; projection is a tie")
            return Projection(point, float(np.linalg.norm(x - point)), OUTER, tie=True)

        def objective(angle: float) -> float:
            b = self._boundary_point(angle)
            return float((b[0] - x[0]) ** 2 + (b[1] - x[1]) ** 2)

        candidates = []
        for k in local:
            result = minimize_scalar(
                objective,
                bounds=(phi[k] - step, phi[k] + step),
                method="bounded",
                options={"xatol": 1e-12},
            )
            angle = float(result.x) % (2 * math.pi)
            point = self._boundary_point(angle)
            candidates.append((float(np.linalg.norm(x - point)), angle, point))

        best = min(c[0] for c in candidates)
        tied = sorted(
            (c for c in candidates if c[0] <= best + 1e-9 * max(1.0, best)), key=lambda c: c[1]
        )
        distinct = [tied[0]]
        for c in tied[1:]:
            if abs(c[1] - distinct[-1][1]) > 1e-6:
                distinct.append(c)
        distance, _, point = distinct[0]
        return Projection(point, distance, OUTER, tie=len(distinct) > 1)

    def _boundary_frame(self, b: np.ndarray, component: int) -> Tuple[np.ndarray, float]:
        phi = math.atan2(b[1], b[0])
        r = float(self.radius(np.array([phi]))[0])
        dr = float(self.radius(np.array([phi]), 1)[0])
        ddr = float(self.radius(np.array([phi]), 2)[0])
        tangent = np.array(
            [dr * math.cos(phi) - r * math.sin(phi), dr * math.sin(phi) + r * math.cos(phi)]
        )
        normal = np.array([tangent[1], -tangent[0]]) / np.linalg.norm(tangent)
        kappa = (r * r + 2 * dr * dr - r * ddr) / (r * r + dr * dr) ** 1.5
        return normal, kappa


def distance_to_boundary(domain: Domain, x: Sequence[float]) -> float:
    """d(x) = dist(x, boundary)."""
    return domain.distance_to_boundary(x)


def boundary_projection(domain: Domain, x: Sequence[float]) -> Projection:
    return domain.boundary_projection(x)


def outward_normal(domain: Domain, b: Sequence[float]) -> np.ndarray:
    return domain.outward_normal(b)


def mean_curvature(domain: Domain, b: Sequence[float]) -> float:
    return domain.mean_curvature(b)


def make_domain(kind: str, radius: float = 1.0, r_in: float = 0.5, r_out: float = 1.0,
                coefficients: Sequence[float] = (1.0,)) -> Domain:
    """Construct a catalogue domain from its configuration fields."""
    kind = kind.lower()
    if kind == "disk":
        return Disk(radius)
    if kind == "annulus":
        return Annulus(r_in, r_out)
    if kind == "star":
        return StarSymmetric(coefficients)
    raise ConfigError(f"unknown domain '{kind}' (expected disk, annulus or star)", field="DOMAIN")
