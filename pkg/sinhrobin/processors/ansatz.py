"""Multi-bubble approximate solution and its blown-up diagnostics.

Each bubble is the Liouville profile centred at xi_j with mass mu_j,

    w_j(x) = log(8 mu_j^2 / (mu_j^2 rho^2 + |x - xi_j|^2)^2) + 2 log(rho / eps),

corrected by a harmonic H_j that absorbs its Robin defect. The ansatz is
U = sum_j a_j (w_j + H_j). Diagnostics live in the scaled variable
y = x / rho where V(y) = U(rho y).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..core.errors import ConfigError, ParameterError
from ..elliptic.base import Field
from ..elliptic.robin import RobinOperator, assemble, laplacian, robin_defect
from ..geometry.grid import Grid
from .green import GreenProvider
from .hamiltonian import ConcentrationConfig

DEFAULT_ALPHA = 17.0
DEFAULT_EPS0 = 1.0
DEFAULT_SIGMA = 0.5
LAPLACIAN_MODES = ("discrete", "analytic")
LINEARIZATION_FORMS = ("L", "full", "gap")

ArrayOrField = Union[Field, np.ndarray]


@dataclass(frozen=True)
class Params:
    """Small parameter eps, Robin coefficient lam and the regime test eps lam^alpha <= eps0."""

    eps: float
    lam: float
    alpha: float = DEFAULT_ALPHA
    eps0: float = DEFAULT_EPS0
    allow_out_of_regime: bool = False

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ParameterError(f"eps must lie in (0, 1), got {self.eps}", field="EPSILONS")
        if not self.lam > 1:
            raise ParameterError(f"lambda must exceed 1, got {self.lam}", field="LAMBDAS")
        if not self.eps0 > 0:
            raise ParameterError(f"eps0 must be positive, got {self.eps0}", field="REGIME_EPS0")
        if not self.in_regime:
            message = (
                f"(eps, lambda) = ({self.eps:g}, {self.lam:g}) violates eps*lambda^{self.alpha:g} <= "
                f"{self.eps0:g} (log margin {self.regime_margin:.3g})"
            )
            if not self.allow_out_of_regime:
                raise ParameterError(message + "; set ALLOW_OUT_OF_REGIME=true to run anyway",
                                     field="ALLOW_OUT_OF_REGIME")
            logging.warning(message)

    @property
    def rho(self) -> float:
        return self.eps / self.lam ** 2

    @property
    def regime_margin(self) -> float:
        """log(eps0) - log(eps lam^alpha); non-negative inside the regime."""
        return math.log(self.eps0) - math.log(self.eps) - self.alpha * math.log(self.lam)

    @property
    def in_regime(self) -> bool:
        return self.regime_margin >= 0

    @property
    def log_eps2(self) -> float:
        return 2.0 * math.log(self.eps)

    def residual_scale(self) -> float:
        """eps lam^7 log(lam), the size the scaled residual is measured against."""
        return self.eps * self.lam ** 7 * math.log(self.lam)


def bubble(mu: float, rho: float, xi, eps: float, x) -> np.ndarray:
    """Value of the bubble centred at xi; vectorized over points x of shape (..., 2)."""
    x = np.asarray(x, dtype=float)
    diff = x - np.asarray(xi, dtype=float)
    r2 = np.sum(diff * diff, axis=-1)
    core = mu * mu * rho * rho
    return math.log(8 * mu * mu) - 2.0 * np.log(core + r2) + 2.0 * math.log(rho / eps)


def bubble_gradient(mu: float, rho: float, xi, x) -> np.ndarray:
    """Closed-form gradient -4 (x - xi) / (mu^2 rho^2 + |x - xi|^2)."""
    x = np.asarray(x, dtype=float)
    diff = x - np.asarray(xi, dtype=float)
    r2 = np.sum(diff * diff, axis=-1, keepdims=True)
    return -4.0 * diff / (mu * mu * rho * rho + r2)


def corrector(grid: Grid, lam: float, mu: float, rho: float, xi, eps: float,
              operator: Optional[RobinOperator] = None) -> Field:
    """Harmonic H with dH/dnu + lam H = -(dw/dnu + lam w) for the bubble (mu, xi)."""
    if operator is None:
        operator = assemble(grid, lam)
    nodes = grid.nodes[grid.boundary_index]
    flux = np.sum(bubble_gradient(mu, rho, xi, nodes) * grid.boundary_normals, axis=1)
    data = -(flux + lam * bubble(mu, rho, xi, eps, nodes))
    return operator.solve(boundary_data=data)


@dataclass(frozen=True, eq=False)
class AnsatzBundle:
    """Ansatz fields for one configuration and parameter pair."""

    grid: Grid
    config: ConcentrationConfig
    params: Params
    operator: RobinOperator
    bubbles: Tuple[Field, ...]
    correctors: Tuple[Field, ...]
    U: Field
    corrector_gap: float
    probe_gap: float

    @property
    def rho(self) -> float:
        return self.params.rho

    @property
    def scaled_centers(self) -> np.ndarray:
        return self.config.scaled_points(self.params.rho)

    @property
    def scaled_nodes(self) -> np.ndarray:
        return self.grid.nodes / self.params.rho

    def component(self, j: int) -> Field:
        """U_j = w_j + H_j, without the spin."""
        return self.bubbles[j] + self.correctors[j]


def build_ansatz(grid: Grid, config: ConcentrationConfig, params: Params,
                 operator: Optional[RobinOperator] = None,
                 provider: Optional[GreenProvider] = None, workers: int = 1) -> AnsatzBundle:
    """Assemble bubbles, correctors and U, and record the corrector diagnostics.

    Args:
        grid: Polar grid
        config: Concentration configuration with finalized masses
        params: eps, lambda and regime settings
        operator: Robin operator for params.lam, shared by every corrector
        provider: Green provider for the diagnostics; built on the same operator when omitted
        workers: Thread count for the corrector solves

    Returns:
        AnsatzBundle
    """
    if not config.masses_final or config.masses is None:
        raise ConfigError("ansatz needs finalized masses; run compute_masses first", field="MASS_RULE")
    if config.lam != params.lam:
        raise ParameterError(f"configuration built for lambda={config.lam}, params have {params.lam}")
    if operator is None:
        operator = assemble(grid, params.lam)
    if provider is None:
        provider = GreenProvider(grid, params.lam, operator)

    rho, eps, lam = params.rho, params.eps, params.lam
    masses = config.masses
    bubbles = tuple(
        Field(grid, bubble(masses[j], rho, config.points[j], eps, grid.nodes)) for j in range(config.m)
    )

    def solve_corrector(j: int) -> Field:
        return corrector(grid, lam, masses[j], rho, config.points[j], eps, operator)

    if workers > 1 and config.m > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            correctors = tuple(executor.map(solve_corrector, range(config.m)))
    else:
        correctors = tuple(solve_corrector(j) for j in range(config.m))

    spins = config.spins.spins
    total = np.zeros(grid.n_nodes)
    for j in range(config.m):
        total = total + spins[j] * (bubbles[j].values + correctors[j].values)
    U = Field(grid, total)

    corrector_gap = 0.0
    probe_gap = 0.0
    for j in range(config.m):
        green = provider.field(config.points[j])
        shift = -math.log(8 * masses[j] ** 2) + 4.0 * math.log(lam)
        gap = np.abs(correctors[j].values - (green.regular_part.values + shift))
        corrector_gap = max(corrector_gap, float(gap.max()))

        r = np.linalg.norm(grid.nodes - config.points[j], axis=1)
        far = r >= 1.0 / lam
        if np.any(far):
            green_values = -2.0 * np.log(r[far] ** 2) + green.regular_part.values[far]
            component = bubbles[j].values[far] + correctors[j].values[far]
            probe_gap = max(probe_gap, float(np.max(np.abs(component - green_values))))

    logging.info(
        f"Ansatz built (eps={eps:g}, lambda={lam:g}): sup|U|={U.sup_norm():.4g}, "
        f"corrector gap={corrector_gap:.3e}, probe gap={probe_gap:.3e}"
    )
    return AnsatzBundle(grid, config, params, operator, bubbles, correctors, U, corrector_gap, probe_gap)


def potential_W(config: ConcentrationConfig, rho: float, y) -> np.ndarray:
    """W(y) = sum_j 8 mu_j^2 / (mu_j^2 + |y - xi_j / rho|^2)^2 at scaled points y."""
    if config.masses is None:
        raise ConfigError("W needs masses", field="MASS_RULE")
    y = np.asarray(y, dtype=float)
    total = np.zeros(y.shape[:-1])
    for mu, center in zip(config.masses, config.scaled_points(rho)):
        diff = y - center
        r2 = np.sum(diff * diff, axis=-1)
        total = total + 8 * mu * mu / (mu * mu + r2) ** 2
    return total


def _potential_at_nodes(bundle: AnsatzBundle) -> np.ndarray:
    # same as potential_W at y = x / rho, without forming the huge scaled coordinates
    rho = bundle.rho
    total = np.zeros(bundle.grid.n_nodes)
    for mu, xi in zip(bundle.config.masses, bundle.config.points):
        diff = bundle.grid.nodes - xi
        r2 = np.sum(diff * diff, axis=1)
        total = total + 8 * mu * mu * rho ** 4 / (mu * mu * rho * rho + r2) ** 2
    return total


def pde_residual(operator: RobinOperator, u: np.ndarray, eps: float) -> np.ndarray:
    """Delta_h u + eps^2 (e^u - e^-u) at interior nodes, Robin defect at boundary nodes."""
    log_eps2 = 2.0 * math.log(eps)
    out = operator.apply(u)
    interior = operator.interior_mask
    out[interior] = -out[interior] + (
        np.exp(u[interior] + log_eps2) - np.exp(-u[interior] + log_eps2)
    )
    return out


def residual(bundle: AnsatzBundle, laplacian_mode: str = "discrete", scaled: bool = True) -> Field:
    """Residual of the ansatz.

    In scaled variables the interior rows read Delta V + (eps rho)^2 (e^V - e^-V)
    and the boundary rows the scaled Robin defect. ``laplacian_mode='analytic'``
    takes the bubble Laplacians from the Liouville identity instead of the stencil.
    """
    if laplacian_mode not in LAPLACIAN_MODES:
        raise ConfigError(f"laplacian mode must be one of {LAPLACIAN_MODES}, got '{laplacian_mode}'",
                          field="RESIDUAL_LAPLACIAN")
    op = bundle.operator
    u = bundle.U.values
    log_eps2 = bundle.params.log_eps2
    interior = op.interior_mask

    if laplacian_mode == "discrete":
        values = pde_residual(op, u, bundle.params.eps)
    else:
        spins = bundle.config.spins.spins
        lap = np.zeros(bundle.grid.n_nodes)
        for a, w, h in zip(spins, bundle.bubbles, bundle.correctors):
            lap = lap + a * (-np.exp(w.values + log_eps2) + laplacian(op, h))
        values = np.zeros(bundle.grid.n_nodes)
        values[interior] = lap[interior] + (
            np.exp(u[interior] + log_eps2) - np.exp(-u[interior] + log_eps2)
        )
        values[bundle.grid.boundary_index] = robin_defect(op, u)

    if scaled:
        rho = bundle.rho
        values[interior] *= rho * rho
        values[~interior] *= rho
    return Field(bundle.grid, values)


def star_weight(grid: Grid, config: ConcentrationConfig, rho: float,
                sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Nodal weight sum_j (1 + |y - xi_j'|)^(-2-sigma) + rho^2 with y = x / rho."""
    if not 0 < sigma < 1:
        raise ParameterError(f"sigma must lie in (0, 1), got {sigma}", field="SIGMA")
    weight = np.full(grid.n_nodes, rho * rho)
    for xi in config.points:
        distance = np.linalg.norm(grid.nodes - xi, axis=1) / rho
        weight += (1.0 + distance) ** (-2.0 - sigma)
    return weight


def star_norm(f: ArrayOrField, grid: Grid, config: ConcentrationConfig, rho: float,
              sigma: float = DEFAULT_SIGMA) -> float:
    """Weighted sup norm over the interior nodes."""
    values = f.values if isinstance(f, Field) else np.asarray(f, dtype=float)
    weight = star_weight(grid, config, rho, sigma)
    interior = grid.interior_index
    return float(np.max(np.abs(values[interior]) / weight[interior]))


def kernel_Z(i: int, j: int, config: ConcentrationConfig, rho: float, y) -> np.ndarray:
    """Kernel functions of the linearized Liouville operator around bubble j."""
    if i not in (0, 1, 2):
        raise ParameterError(f"kernel index must be 0, 1 or 2, got {i}")
    mu = float(config.masses[j])
    diff = np.asarray(y, dtype=float) - config.points[j] / rho
    r2 = np.sum(diff * diff, axis=-1)
    if i == 0:
        return (mu * mu - r2) / (mu * mu + r2)
    return 4.0 * mu * diff[..., i - 1] / (mu * mu + r2)


def kernel_residual(i: int, mu: float = 1.0, half_width: float = 4.0, n: int = 80) -> float:
    """Sup of the 5-point (Delta + W) Z_i for one bubble on the box [-half_width, half_width]^2."""
    if i not in (0, 1, 2):
        raise ParameterError(f"kernel index must be 0, 1 or 2, got {i}")
    axis = np.linspace(-half_width, half_width, n + 1)
    h = axis[1] - axis[0]
    y1, y2 = np.meshgrid(axis, axis, indexing="ij")
    r2 = y1 * y1 + y2 * y2
    if i == 0:
        z = (mu * mu - r2) / (mu * mu + r2)
    else:
        z = 4.0 * mu * (y1 if i == 1 else y2) / (mu * mu + r2)
    w = 8 * mu * mu / (mu * mu + r2) ** 2
    lap = (z[2:, 1:-1] + z[:-2, 1:-1] + z[1:-1, 2:] + z[1:-1, :-2] - 4 * z[1:-1, 1:-1]) / (h * h)
    return float(np.max(np.abs(lap + w[1:-1, 1:-1] * z[1:-1, 1:-1])))


def linearized_apply(bundle: AnsatzBundle, phi: ArrayOrField, form: str = "L") -> Field:
    """Apply a linearization in scaled variables.

    ``L``: Delta phi + W phi. ``full``: Delta phi + (eps rho)^2 (e^V + e^-V) phi.
    ``gap``: [(eps rho)^2 (e^V + e^-V) - W] phi.
    """
    if form not in LINEARIZATION_FORMS:
        raise ParameterError(f"linearization form must be one of {LINEARIZATION_FORMS}, got '{form}'")
    values = phi.values if isinstance(phi, Field) else np.asarray(phi, dtype=float)
    op = bundle.operator
    rho = bundle.rho
    interior = op.interior_mask
    u = bundle.U.values
    log_eps2 = bundle.params.log_eps2

    potential = _potential_at_nodes(bundle)
    coefficient = rho * rho * (np.exp(u + log_eps2) + np.exp(-u + log_eps2))

    out = np.zeros(bundle.grid.n_nodes)
    if form == "gap":
        out[interior] = (coefficient[interior] - potential[interior]) * values[interior]
        return Field(bundle.grid, out)

    applied = op.apply(values)
    multiplier = potential if form == "L" else coefficient
    out[interior] = -rho * rho * applied[interior] + multiplier[interior] * values[interior]
    out[~interior] = rho * applied[~interior]
    return Field(bundle.grid, out)


def nonlinear_term(bundle: AnsatzBundle, phi: ArrayOrField) -> Field:
    """N(phi) = (eps rho)^2 [e^V (e^phi - phi - 1) - e^-V (e^-phi + phi - 1)] at interior nodes."""
    values = phi.values if isinstance(phi, Field) else np.asarray(phi, dtype=float)
    rho = bundle.rho
    u = bundle.U.values
    log_eps2 = bundle.params.log_eps2
    interior = bundle.operator.interior_mask
    plus = np.exp(u + log_eps2) * (np.expm1(values) - values)
    minus = np.exp(-u + log_eps2) * (np.expm1(-values) + values)
    out = np.zeros(bundle.grid.n_nodes)
    out[interior] = rho * rho * (plus[interior] - minus[interior])
    return Field(bundle.grid, out)
