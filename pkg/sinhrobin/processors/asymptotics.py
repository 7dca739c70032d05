"""Boundary-layer profiles of the Robin function.

The two profiles are

    h(theta) = -4 log(2 theta) + 8 int_0^inf e^{-t} log(2 theta + t) dt
    v(theta) = -2 theta - 4 theta int_0^inf e^{-2 theta s} / (1 + s)^2 ds

Both reduce to the exponential kernel K(c) = int_0^inf e^{-t} / (c + t) dt:
integrating by parts gives h(theta) = 4 log(2 theta) + 8 K(2 theta) and
v(theta) = -6 theta + 8 theta^2 K(2 theta).
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import exp1, roots_laguerre

from ..core.errors import ExtrapolationError, IntegrityError, ParameterError, QuadratureError

ArrayLike = Union[float, np.ndarray]

LAGUERRE_ORDERS = (64, 128, 256)
QUADRATURE_TOL = 1e-10
THETA_MIN = 1e-3
THETA_MAX = 1e3
_CLOSED_FORM_LIMIT = 1.0
_SERIES_RADIUS = 40.0
_SERIES_TERMS = 20


@lru_cache(maxsize=None)
def laguerre_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Laguerre nodes and weights."""
    nodes, weights = roots_laguerre(order)
    return nodes, weights


def laguerre_integral(func: Callable[[np.ndarray], np.ndarray],
                      orders: Sequence[int] = LAGUERRE_ORDERS,
                      tol: float = QUADRATURE_TOL) -> np.ndarray:
    """Adaptive Gauss-Laguerre approximation of int_0^inf e^{-t} func(t) dt.

    ``func`` maps the node vector (shape (n,)) to values of shape (..., n),
    so a batch of integrals is evaluated at once. The order doubles until two
    successive rules agree to ``tol``.
    """
    previous = None
    tail = math.inf
    for order in orders:
        nodes, weights = laguerre_rule(order)
        value = np.asarray(func(nodes)) @ weights
        if previous is not None:
            tail = float(np.max(np.abs(value - previous)))
            if tail <= tol:
                return value
        previous = value
    raise QuadratureError(f"Gauss-Laguerre tail estimate {tail:.3e} exceeds {tol:.1e}")


def _require_positive(theta: ArrayLike, name: str = "theta") -> np.ndarray:
    values = np.asarray(theta, dtype=float)
    if np.any(~(values > 0)):
        raise ParameterError(f"{name} must be positive, got {theta}")
    return values


def _scalar_or_array(values: np.ndarray, like: ArrayLike):
    return float(values) if np.ndim(like) == 0 else values


def exponential_kernel(c: ArrayLike) -> ArrayLike:
    """K(c) = int_0^inf e^{-t} / (c + t) dt for c > 0."""
    c_arr = np.atleast_1d(_require_positive(c, "c"))
    out = np.empty_like(c_arr)
    small = c_arr < _CLOSED_FORM_LIMIT
    # e^c E1(c) is exact and well conditioned below the Laguerre range
    out[small] = np.exp(c_arr[small]) * exp1(c_arr[small])
    if np.any(~small):
        large = c_arr[~small]
        out[~small] = laguerre_integral(lambda t: 1.0 / (large[:, None] + t[None, :]))
    return _scalar_or_array(out.reshape(np.shape(c)), c)


def complex_exponential_kernel(c: np.ndarray) -> np.ndarray:
    """K(c) = e^c E1(c) on the complex plane cut along the negative real axis.

    Past |c| = 40 the asymptotic series sum_k (-1)^k k! / c^(k+1) replaces the
    product, whose factors overflow; twenty terms reach double precision there.
    """
    c_arr = np.asarray(c, dtype=complex)
    out = np.empty_like(c_arr)
    near = np.abs(c_arr) < _SERIES_RADIUS
    out[near] = np.exp(c_arr[near]) * exp1(c_arr[near])
    far = c_arr[~near]
    if far.size:
        inverse = 1.0 / far
        term = inverse.copy()
        total = term.copy()
        for k in range(1, _SERIES_TERMS):
            term = -k * term * inverse
            total += term
        out[~near] = total
    return out


def h_profile(theta: ArrayLike) -> ArrayLike:
    """Boundary-layer profile h of the Robin function."""
    t = _require_positive(theta)
    return _scalar_or_array(4.0 * np.log(2.0 * t) + 8.0 * np.asarray(exponential_kernel(2.0 * t)), theta)


def v_profile(theta: ArrayLike) -> ArrayLike:
    """Curvature correction profile v; negative for theta > 0."""
    t = _require_positive(theta)
    return _scalar_or_array(-6.0 * t + 8.0 * t * t * np.asarray(exponential_kernel(2.0 * t)), theta)


def h_derivative(theta: ArrayLike) -> ArrayLike:
    """h'(theta) by central differences with step 1e-6 max(theta, 1)."""
    t = _require_positive(theta)
    step = 1e-6 * np.maximum(t, 1.0)
    step = np.minimum(step, 0.5 * t)
    value = (np.asarray(h_profile(t + step)) - np.asarray(h_profile(t - step))) / (2 * step)
    return _scalar_or_array(value, theta)


def h_second_derivative(theta: ArrayLike) -> ArrayLike:
    t = _require_positive(theta)
    step = np.minimum(1e-4 * np.maximum(t, 1.0), 0.5 * t)
    value = (
        np.asarray(h_profile(t + step)) - 2 * np.asarray(h_profile(t)) + np.asarray(h_profile(t - step))
    ) / step ** 2
    return _scalar_or_array(value, theta)


@dataclass(frozen=True)
class Theta0:
    """Minimizer of h."""

    theta0: float
    h_theta0: float
    h_second: float


@lru_cache(maxsize=1)
def find_theta0(n_scan: int = 2001) -> Theta0:
    """Locate the unique nondegenerate minimum of h.

    A log-spaced scan brackets the minimum, golden-section search refines
    it, and bisection on h' pins the critical point.
    """
    thetas = np.logspace(math.log10(THETA_MIN), math.log10(THETA_MAX), n_scan)
    slopes = np.asarray(h_derivative(thetas))
    sign_changes = int(np.count_nonzero(np.diff(np.sign(slopes)) != 0))
    if sign_changes != 1:
        raise IntegrityError(f"h' changes sign {sign_changes} times on the scan; expected exactly one")

    values = np.asarray(h_profile(thetas))
    i = int(np.argmin(values))
    if i == 0 or i == n_scan - 1:
        raise IntegrityError("Minimum of h sits at the end of the scan range")
    lo, mid, hi = thetas[i - 1], thetas[i], thetas[i + 1]

    golden = minimize_scalar(h_profile, bracket=(lo, mid, hi), method="golden", tol=1e-10)
    theta0 = brentq(h_derivative, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    logging.debug(f"theta0 golden={golden.x:.12g} bisection={theta0:.12g}")

    slope = abs(h_derivative(theta0))
    if slope > 1e-8:
        raise IntegrityError(f"|h'(theta0)| = {slope:.3e} above 1e-8")
    curvature = float(h_second_derivative(theta0))
    if curvature <= 0:
        raise IntegrityError(f"h''(theta0) = {curvature:.6g} is not positive")
    return Theta0(theta0=float(theta0), h_theta0=float(h_profile(theta0)), h_second=curvature)


@dataclass(frozen=True)
class ProfileTable:
    """Tabulated h, h', h'', v on a log-spaced theta range."""

    theta: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    ddh: np.ndarray
    v: np.ndarray
    theta0: float
    h_theta0: float

    def rows(self):
        for row in zip(self.theta, self.h, self.dh, self.ddh, self.v):
            yield tuple(float(x) for x in row)


def build_profile_table(n_samples: int = 601) -> ProfileTable:
    """Tabulate the profiles and check monotone bracketing around theta0."""
    minimum = find_theta0()
    theta = np.logspace(math.log10(THETA_MIN), math.log10(THETA_MAX), n_samples)
    h = np.asarray(h_profile(theta))
    below = h[theta < minimum.theta0]
    above = h[theta > minimum.theta0]
    if np.any(np.diff(below) >= 0) or np.any(np.diff(above) <= 0):
        raise IntegrityError("h is not monotone on both sides of theta0")
    return ProfileTable(
        theta=theta,
        h=h,
        dh=np.asarray(h_derivative(theta)),
        ddh=np.asarray(h_second_derivative(theta)),
        v=np.asarray(v_profile(theta)),
        theta0=minimum.theta0,
        h_theta0=minimum.h_theta0,
    )


def robin_expansion(lam: float, d: float, kappa: float) -> float:
    """Boundary-layer expansion -4 log(lam) + h(lam d) + kappa v(lam d) / lam."""
    theta = lam * d
    if not THETA_MIN <= theta <= THETA_MAX:
        raise ExtrapolationError(
            f"lambda*d = {theta:.4g} outside the tabulated range [{THETA_MIN:g}, {THETA_MAX:g}]"
        )
    return -4.0 * math.log(lam) + h_profile(theta) + kappa * v_profile(theta) / lam
