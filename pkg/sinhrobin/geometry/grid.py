"""Polar-structured grids on catalogue domains.

Nodes are laid out ring by ring in the chart ``(s, phi)`` of
:mod:`sinhrobin.geometry.domain`. Simply connected domains carry a single
origin node (index 0) followed by rings ``1..n_radial``; the annulus has
rings ``0..n_radial``. Within a ring, nodes follow the angle index ``k``.

Angles are stored as ``phi_k = 2 pi k / n`` for ``k <= n/2`` and as
``-phi_{n-k}`` above, so that the reflection ``(x1, x2) -> (x1, -x2)`` maps
node ``k`` exactly onto node ``n - k``.
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from ..core.errors import ConfigError, DomainMembershipError, ResolutionError
from .domain import INNER, OUTER, Domain

DEFAULT_GRADING = 1.15
DEFAULT_MAX_RATIO = 8.0
MIN_BOUNDARY_LAYERS = 8
# Largest boundary arc spacing times lambda; about twice the depth theta0 / lambda of the profile minimum
MAX_ARC_SPACING = 0.6


def _mirror(half: np.ndarray, n: int, odd: bool) -> np.ndarray:
    """Extend values on k = 0..n/2 to the full circle."""
    full = np.empty(n)
    full[: n // 2 + 1] = half
    tail = half[1: n // 2][::-1]
    full[n // 2 + 1:] = -tail if odd else tail
    return full


def graded_parameters(n_radial: int, grading: float = DEFAULT_GRADING,
                      max_ratio: float = DEFAULT_MAX_RATIO, two_sided: bool = False) -> np.ndarray:
    """Radial chart parameters s_0 = 0 < ... < s_N = 1, fine next to the boundary.

    Interval widths grow geometrically away from each boundary ring by the
    factor ``grading`` until they reach ``max_ratio`` times the boundary width.
    """
    if grading <= 1.0:
        return np.linspace(0.0, 1.0, n_radial + 1)
    depth = np.arange(n_radial)
    if two_sided:
        depth = np.minimum(depth, n_radial - 1 - depth)
        cap_limit = (n_radial - 1) // 2
    else:
        cap_limit = n_radial // 2
    k_cap = min(int(math.floor(math.log(max_ratio) / math.log(grading))), cap_limit)
    widths = grading ** np.minimum(depth, k_cap).astype(float)
    widths /= widths.sum()
    t = np.concatenate([[0.0], np.cumsum(widths)])
    s = (1.0 - t)[::-1].copy()
    s[0] = 0.0
    s[-1] = 1.0
    return s


class Grid:
    """Polar-structured discretization of a domain."""

    def __init__(self, domain: Domain, s: np.ndarray, n_angular: int):
        self.domain = domain
        self.s = np.asarray(s, dtype=float)
        self.n_radial = self.s.size - 1
        self.n_angular = n_angular
        self.dphi = 2 * math.pi / n_angular
        self.has_origin = domain.has_origin
        self.ring_start = 1 if self.has_origin else 0
        self.offset = 1 if self.has_origin else 0
        n_rings = self.n_radial + 1 - self.ring_start
        self.n_nodes = self.offset + n_rings * n_angular

        n = n_angular
        half_k = np.arange(n // 2 + 1)
        half_phi = 2 * math.pi * half_k / n
        self.phi = _mirror(half_phi, n, odd=True)
        cos_half = np.cos(half_phi)
        sin_half = np.sin(half_phi)
        sin_half[0] = 0.0
        sin_half[-1] = 0.0
        cos_half[-1] = -1.0
        self.cos_phi = _mirror(cos_half, n, odd=False)
        self.sin_phi = _mirror(sin_half, n, odd=True)

        half_profile = domain.radial_profile(half_phi)
        self.a = _mirror(half_profile.a, n, odd=False)
        self.da = _mirror(half_profile.da, n, odd=True)
        self.dda = _mirror(half_profile.dda, n, odd=False)
        self.b = _mirror(half_profile.b, n, odd=False)
        self.db = _mirror(half_profile.db, n, odd=True)
        self.ddb = _mirror(half_profile.ddb, n, odd=False)
        self.length = self.b - self.a
        self.dlength = self.db - self.da
        self.ddlength = self.ddb - self.dda

        self._mirror_perm: Optional[np.ndarray] = None
        self._build_nodes()
        self._build_metric()
        self._build_boundary()
        self._build_quadrature()
        logging.debug(
            f"Built {domain.kind} grid: {self.n_radial} radial x {self.n_angular} angular, "
            f"{self.n_nodes} nodes"
        )

    def index(self, i, k):
        """Node index of ring i, angle k (ring 0 is the origin on disk-like domains)."""
        i = np.asarray(i)
        k = np.asarray(k) % self.n_angular
        idx = self.offset + (i - self.ring_start) * self.n_angular + k
        if self.has_origin:
            idx = np.where(i == 0, 0, idx)
        return idx

    def ring(self, i: int) -> np.ndarray:
        """Node indices of ring i in angle order."""
        return np.asarray(self.index(np.full(self.n_angular, i), np.arange(self.n_angular)))

    def _build_nodes(self) -> None:
        rings = np.arange(self.ring_start, self.n_radial + 1)
        self.radius = self.a[None, :] + self.s[rings][:, None] * self.length[None, :]
        nodes = np.zeros((self.n_nodes, 2))
        body = nodes[self.offset:].reshape(rings.size, self.n_angular, 2)
        body[:, :, 0] = self.radius * self.cos_phi[None, :]
        body[:, :, 1] = self.radius * self.sin_phi[None, :]
        self.nodes = nodes

    def _build_metric(self) -> None:
        rings = np.arange(self.ring_start, self.n_radial + 1)
        s = self.s[rings][:, None]
        r = self.radius
        length = self.length[None, :]
        p = self.da[None, :] + s * self.dlength[None, :]
        s_phi = -p / length
        dp = self.dda[None, :] + s * self.ddlength[None, :]
        s_phiphi = -(dp + 2 * s_phi * self.dlength[None, :]) / length
        with np.errstate(divide="ignore", invalid="ignore"):
            self.g_ss = 1.0 / length ** 2 + p ** 2 / (r ** 2 * length ** 2)
            self.g_sphi = -p / (r ** 2 * length)
            self.g_phiphi = 1.0 / r ** 2
            self.lap_s = 1.0 / (r * length) + s_phiphi / r ** 2
        self._grad_p = p

    def _build_boundary(self) -> None:
        n = self.n_angular
        outer = self.ring(self.n_radial)
        parts = [outer]
        components = [np.full(n, OUTER)]
        normals = [self._ring_normals(self.b, self.db, outward=True)]
        rings = [self.n_radial]
        if not self.has_origin:
            parts.insert(0, self.ring(0))
            components.insert(0, np.full(n, INNER))
            normals.insert(0, self._ring_normals(self.a, self.da, outward=False))
            rings.insert(0, 0)
        self.boundary_index = np.concatenate(parts)
        self.boundary_component = np.concatenate(components)
        self.boundary_normals = np.concatenate(normals)
        self.boundary_rings = rings
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_index] = True
        self.boundary_mask = mask
        self.interior_index = np.flatnonzero(~mask)

        # normal derivative = u_s * (grad s . nu) + u_phi * (grad phi . nu)
        normal_s = []
        normal_phi = []
        for ring, nu in zip(rings, normals):
            row = ring - self.ring_start
            r = self.radius[row]
            e_r = np.stack([self.cos_phi, self.sin_phi], axis=1)
            e_phi = np.stack([-self.sin_phi, self.cos_phi], axis=1)
            tangential = (self._grad_p[row] / (r * self.length))[:, None]
            grad_s = (1.0 / self.length)[:, None] * e_r - tangential * e_phi
            grad_phi = e_phi / r[:, None]
            normal_s.append(np.sum(grad_s * nu, axis=1))
            normal_phi.append(np.sum(grad_phi * nu, axis=1))
        self.normal_s = np.concatenate(normal_s)
        self.normal_phi = np.concatenate(normal_phi)

    def _ring_normals(self, radius: np.ndarray, dradius: np.ndarray, outward: bool) -> np.ndarray:
        tangent_x = dradius * self.cos_phi - radius * self.sin_phi
        tangent_y = dradius * self.sin_phi + radius * self.cos_phi
        norm = np.hypot(tangent_x, tangent_y)
        sign = 1.0 if outward else -1.0
        return sign * np.stack([tangent_y / norm, -tangent_x / norm], axis=1)

    def _build_quadrature(self) -> None:
        h = np.diff(self.s)
        ts = np.empty(self.n_radial + 1)
        ts[0] = h[0] / 2
        ts[-1] = h[-1] / 2
        ts[1:-1] = (h[:-1] + h[1:]) / 2
        self.s_weights = ts
        area = np.zeros(self.n_nodes)
        rings = np.arange(self.ring_start, self.n_radial + 1)
        body = ts[rings][:, None] * self.radius * self.length[None, :] * self.dphi
        area[self.offset:] = body.ravel()
        self.area_weights = area

        arc = np.zeros(self.n_nodes)
        arc[self.ring(self.n_radial)] = np.hypot(self.b, self.db) * self.dphi
        if not self.has_origin:
            arc[self.ring(0)] = np.hypot(self.a, self.da) * self.dphi
        self.arc_weights = arc

    def mirror_permutation(self) -> np.ndarray:
        """Permutation p with values[p] equal to the field evaluated at mirrored nodes."""
        if self._mirror_perm is None:
            self._mirror_perm = self._build_mirror_permutation()
        return self._mirror_perm

    def _build_mirror_permutation(self) -> np.ndarray:
        perm = np.arange(self.n_nodes)
        k = np.arange(self.n_angular)
        for i in range(self.ring_start, self.n_radial + 1):
            perm[self.index(np.full_like(k, i), k)] = self.index(np.full_like(k, i), -k)
        return perm

    def max_cell_diameter(self) -> float:
        rings = np.arange(self.ring_start - 1 if self.has_origin else 0, self.n_radial)
        k = np.arange(self.n_angular)
        best = 0.0
        for i in rings:
            p00 = self.nodes[self.index(np.full_like(k, i), k)]
            p11 = self.nodes[self.index(np.full_like(k, i + 1), k + 1)]
            p10 = self.nodes[self.index(np.full_like(k, i + 1), k)]
            p01 = self.nodes[self.index(np.full_like(k, i), k + 1)]
            diag = np.maximum(np.linalg.norm(p11 - p00, axis=1), np.linalg.norm(p10 - p01, axis=1))
            best = max(best, float(diag.max()))
        return best

    def boundary_layers(self, width: float) -> int:
        """Rings strictly inside the domain lying within radial distance `width` of the boundary."""
        l_max = float(self.length.max())
        inner = self.s[:-1]
        count = int(np.sum((1.0 - inner) * l_max <= width))
        if not self.has_origin:
            count = min(count, int(np.sum(self.s[1:] * l_max <= width)))
        return count

    def require_resolved(self, x: Sequence[float]) -> None:
        """Raise ResolutionError unless x lies at least two rings inside every boundary."""
        s, _ = self.domain.parametric_coordinates(x)
        upper = self.s[self.n_radial - 2]
        lower = self.s[2] if not self.has_origin else -math.inf
        if not lower <= s <= upper:
            raise ResolutionError(
                f"Point {list(map(float, x))} is within two grid layers of the boundary "
                f"(s={s:.6g}); increase GRID_RADIAL (currently {self.n_radial})"
            )

    def interpolate(self, values: np.ndarray, x) -> np.ndarray:
        """Bilinear interpolation in the (s, phi-index) chart.

        Points below the axis are evaluated on the mirrored field, which keeps
        interpolation exactly equivariant under reflection.
        """
        values = np.asarray(values, dtype=float)
        # adding 0.0 turns -0.0 into +0.0 so the axis stays on the upper branch
        points = np.atleast_2d(np.asarray(x, dtype=float)) + 0.0
        out = np.empty(points.shape[0])
        lower = points[:, 1] < 0
        if np.any(~lower):
            out[~lower] = self._interpolate_upper(values, points[~lower])
        if np.any(lower):
            flipped = points[lower] * np.array([1.0, -1.0])
            out[lower] = self._interpolate_upper(values[self.mirror_permutation()], flipped)
        return out if np.ndim(x) > 1 else out[0]

    def _interpolate_upper(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        phi = np.arctan2(points[:, 1], points[:, 0])
        r = np.hypot(points[:, 0], points[:, 1])
        profile = self.domain.radial_profile(phi)
        s = (r - profile.a) / profile.length
        if np.any(s < -1e-9) or np.any(s > 1 + 1e-9):
            raise DomainMembershipError("Interpolation point outside the domain")
        s = np.clip(s, 0.0, 1.0)
        i = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, self.n_radial - 1)
        t = (s - self.s[i]) / (self.s[i + 1] - self.s[i])
        u = phi / self.dphi
        k0 = np.clip(np.floor(u).astype(int), 0, self.n_angular - 1)
        w = u - k0
        k1 = k0 + 1
        low = (1 - w) * values[self.index(i, k0)] + w * values[self.index(i, k1)]
        high = (1 - w) * values[self.index(i + 1, k0)] + w * values[self.index(i + 1, k1)]
        return (1 - t) * low + t * high


def build_grid(domain: Domain, n_radial: int, n_angular: int, grading: float = DEFAULT_GRADING,
               max_ratio: float = DEFAULT_MAX_RATIO, lambda_max: Optional[float] = None) -> Grid:
    """Build a boundary-graded polar grid.

    Args:
        domain: Catalogue domain
        n_radial: Number of radial intervals (>= 8)
        n_angular: Number of angles (>= 16, even)
        grading: Geometric width ratio between neighbouring rings near the boundary
        max_ratio: Largest interior-to-boundary width ratio
        lambda_max: When given, at least 8 rings must lie within 2/lambda_max of the boundary
            and the boundary arc spacing must not exceed MAX_ARC_SPACING / lambda_max

    Returns:
        Grid with deterministic node ordering
    """
    if n_radial < 8:
        raise ConfigError(f"n_radial must be at least 8, got {n_radial}", field="GRID_RADIAL")
    if n_angular < 16 or n_angular % 2:
        raise ConfigError(f"n_angular must be even and at least 16, got {n_angular}", field="GRID_ANGULAR")
    two_sided = not domain.has_origin
    ratio = max_ratio
    grid = Grid(domain, graded_parameters(n_radial, grading, ratio, two_sided), n_angular)
    if lambda_max is None:
        return grid

    width = 2.0 / lambda_max
    while grid.boundary_layers(width) < MIN_BOUNDARY_LAYERS and grading > 1.0 and ratio < 512:
        ratio *= 2
        logging.debug(f"Raising grading cap to {ratio} to resolve the boundary layer")
        grid = Grid(domain, graded_parameters(n_radial, grading, ratio, two_sided), n_angular)
    layers = grid.boundary_layers(width)
    if layers < MIN_BOUNDARY_LAYERS:
        raise ConfigError(
            f"only {layers} grid layers within 2/lambda = {width:.4g} of the boundary; "
            f"need {MIN_BOUNDARY_LAYERS}, increase GRID_RADIAL",
            field="GRID_RADIAL",
        )
    spacing = float(grid.arc_weights.max())
    limit = MAX_ARC_SPACING / lambda_max
    if spacing > limit:
        raise ResolutionError(
            f"boundary arc spacing {spacing:.4g} exceeds {MAX_ARC_SPACING:g}/lambda = {limit:.4g}; "
            f"increase GRID_ANGULAR (currently {n_angular})"
        )
    return grid
