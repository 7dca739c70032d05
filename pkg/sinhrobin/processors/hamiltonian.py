"""Signed Hamiltonian of concentration points and its constrained minimization.

    phi_m(xi) = sum_j [ H(xi_j, xi_j) + sum_{i != j} a_i a_j G(xi_i, xi_j) ]

The feasible sets keep every point at scaled distance lambda d(xi_j) in
(1/K, K) from the boundary and the points at least delta_sep apart;
optionally the points are confined to the symmetry axis or assigned to
boundary components.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from ..core.errors import (
    ConfigError,
    DomainMembershipError,
    MassOverflowError,
    ResolutionError,
    SingularityError,
)
from ..geometry.domain import Domain
from .asymptotics import find_theta0, robin_expansion
from .green import GreenProvider

MODES = ("axis_symmetric", "per_component", "free")
MASS_RULES = ("as_written", "spin_product")
DEFAULT_K = 20.0
PENALTY = 1e12
MAX_MASS_EXPONENT = 700.0
BOUNDARY_MARGIN = 1e-3
GAP_BACKOFF = 1.25
# samples closer to theta0 than this in log(lambda d) say nothing about the boundary
GAP_MIN_LOG_SPAN = 0.2

_UNRESOLVED = (ResolutionError, DomainMembershipError, SingularityError)


@dataclass(frozen=True)
class SpinConfig:
    """Signs a_j of the concentration points."""

    spins: Tuple[int, ...]

    def __post_init__(self):
        if not self.spins:
            raise ConfigError("at least one spin is required", field="SPINS")
        for a in self.spins:
            if a not in (-1, 1):
                raise ConfigError(f"spin must be ±1, got {a}", field="SPINS")
        object.__setattr__(self, "spins", tuple(int(a) for a in self.spins))

    @property
    def m(self) -> int:
        return len(self.spins)

    def as_array(self) -> np.ndarray:
        return np.array(self.spins, dtype=float)

    def negated(self) -> "SpinConfig":
        return SpinConfig(tuple(-a for a in self.spins))


@dataclass(frozen=True, eq=False)
class ConcentrationConfig:
    """Concentration points, spins, masses and the Robin parameter."""

    points: np.ndarray
    spins: SpinConfig
    lam: float
    masses: Optional[np.ndarray] = None
    masses_final: bool = False
    mass_bounds_ok: Optional[bool] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=float).reshape(-1, 2)
        if points.shape[0] != self.spins.m:
            raise ConfigError(f"{points.shape[0]} points for {self.spins.m} spins", field="SPINS")
        for i in range(len(points)):
            for j in range(i):
                if np.array_equal(points[i], points[j]):
                    raise SingularityError(f"concentration points {j} and {i} coincide")
        object.__setattr__(self, "points", points)
        if self.masses is not None:
            object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float))

    @property
    def m(self) -> int:
        return self.spins.m

    def with_points(self, points: np.ndarray) -> "ConcentrationConfig":
        return ConcentrationConfig(points, self.spins, self.lam)

    def with_masses(self, masses: np.ndarray, bounds_ok: Optional[bool] = None) -> "ConcentrationConfig":
        return replace(self, masses=np.asarray(masses, dtype=float), masses_final=True,
                       mass_bounds_ok=bounds_ok)

    def mirrored(self) -> "ConcentrationConfig":
        return replace(self, points=self.points * np.array([1.0, -1.0]))

    def permuted(self, order: Sequence[int]) -> "ConcentrationConfig":
        order = list(order)
        masses = None if self.masses is None else self.masses[order]
        return replace(
            self,
            points=self.points[order],
            spins=SpinConfig(tuple(self.spins.spins[i] for i in order)),
            masses=masses,
        )

    def scaled_points(self, rho: float) -> np.ndarray:
        """Centres xi_j / rho in the blown-up variables."""
        return self.points / rho

    def to_dict(self) -> Dict:
        return {
            "points": self.points.tolist(),
            "spins": list(self.spins.spins),
            "lambda": self.lam,
            "masses": None if self.masses is None else self.masses.tolist(),
            "mass_bounds_ok": self.mass_bounds_ok,
        }


@dataclass(frozen=True)
class FeasibleSet:
    """Points with lambda d in (1/K, K), pairwise distance above delta_sep."""

    K: float = DEFAULT_K
    delta_sep: float = 0.0
    components: Optional[Tuple[int, ...]] = None
    axis: bool = False

    def __post_init__(self):
        if not self.K > 1:
            raise ConfigError(f"K must exceed 1, got {self.K}", field="FEASIBLE_K")
        if self.delta_sep < 0:
            raise ConfigError(f"delta_sep must be non-negative, got {self.delta_sep}",
                              field="FEASIBLE_DELTA_SEP")

    @classmethod
    def for_mode(cls, domain: Domain, m: int, mode: str, K: float = DEFAULT_K,
                 delta_sep: Optional[float] = None,
                 components: Optional[Sequence[int]] = None) -> "FeasibleSet":
        """Feasible set with the default separation of the given mode."""
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got '{mode}'", field="MODE")
        if mode == "axis_symmetric":
            a, b = domain.axis_interval()
            default_sep = (b - a) / 4
        elif domain.n_components > 1:
            default_sep = domain.component_gap() / 4
        else:
            a, b = domain.axis_interval()
            default_sep = (b - a) / 4
        assigned = None
        if mode == "per_component":
            if components is None:
                components = [j % domain.n_components for j in range(m)]
            if len(components) != m or any(c not in range(domain.n_components) for c in components):
                raise ConfigError(f"invalid component assignment {list(components)}", field="COMPONENTS")
            assigned = tuple(int(c) for c in components)
        return cls(
            K=K,
            delta_sep=default_sep if delta_sep is None else delta_sep,
            components=assigned,
            axis=mode == "axis_symmetric",
        )

    def margin(self, domain: Domain, lam: float, points: np.ndarray) -> float:
        """Smallest constraint slack; positive exactly on the open feasible set."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        slack = []
        log_k = math.log(self.K)
        for j, x in enumerate(points):
            try:
                projection = domain.boundary_projection(x)
            except DomainMembershipError:
                return -math.inf
            theta = lam * projection.distance
            if theta <= 0:
                return -math.inf
            slack.append(log_k - abs(math.log(theta)))
            if self.components is not None and projection.component != self.components[j]:
                slack.append(-1.0)
            if self.axis and x[1] != 0:
                slack.append(-abs(x[1]))
        if self.delta_sep > 0:
            for i in range(len(points)):
                for j in range(i):
                    gap = float(np.linalg.norm(points[i] - points[j]))
                    slack.append((gap - self.delta_sep) / self.delta_sep)
        return min(slack)

    def contains(self, domain: Domain, lam: float, points: np.ndarray) -> bool:
        return self.margin(domain, lam, points) > 0

    def to_dict(self) -> Dict:
        return {
            "K": self.K,
            "delta_sep": self.delta_sep,
            "components": None if self.components is None else list(self.components),
            "axis": self.axis,
        }


def phi_m(config: ConcentrationConfig, provider: GreenProvider) -> float:
    """Signed Hamiltonian of the configuration."""
    a = config.spins.spins
    points = config.points
    total = 0.0
    for j in range(config.m):
        total += provider.robin(points[j])
        for i in range(config.m):
            if i != j:
                total += a[i] * a[j] * provider.green(points[i], points[j])
    return total


def asymptotic_phi_m(config: ConcentrationConfig, provider: GreenProvider, domain: Domain) -> float:
    """phi_m with each Robin diagonal replaced by its boundary-layer expansion."""
    a = config.spins.spins
    total = 0.0
    for j, x in enumerate(config.points):
        projection = domain.boundary_projection(x)
        kappa = domain.mean_curvature(projection.point)
        total += robin_expansion(config.lam, projection.distance, kappa)
        for i in range(config.m):
            if i != j:
                total += a[i] * a[j] * provider.green(config.points[i], x)
    return total


def compute_masses(config: ConcentrationConfig, provider: GreenProvider,
                   rule: str = "as_written", delta: Optional[float] = None) -> ConcentrationConfig:
    """Masses from log(8 mu_j^2) = H(xi_j, xi_j) + sum_{i != j} w_ij G(xi_i, xi_j) + 4 log lambda.

    ``rule='as_written'`` weights the interaction by a_i, ``'spin_product'``
    by a_i a_j. With ``delta`` given, masses outside (delta, 1/delta) are
    flagged in ``mass_bounds_ok``.
    """
    if rule not in MASS_RULES:
        raise ConfigError(f"mass rule must be one of {MASS_RULES}, got '{rule}'", field="MASS_RULE")
    a = config.spins.spins
    log_lambda = 4.0 * math.log(config.lam)
    masses = np.empty(config.m)
    for j in range(config.m):
        rhs = provider.robin(config.points[j]) + log_lambda
        for i in range(config.m):
            if i != j:
                weight = a[i] if rule == "as_written" else a[i] * a[j]
                rhs += weight * provider.green(config.points[i], config.points[j])
        if rhs > MAX_MASS_EXPONENT:
            raise MassOverflowError(
                f"mass exponent {rhs:.4g} for point {j} overflows; points too close with attracting spins"
            )
        masses[j] = math.sqrt(math.exp(rhs) / 8.0)

    bounds_ok = None
    if delta is not None:
        bounds_ok = bool(np.all((masses > delta) & (masses < 1.0 / delta)))
        if not bounds_ok:
            logging.warning(f"Masses {masses.tolist()} leave the bounds ({delta}, {1.0 / delta})")
    return config.with_masses(masses, bounds_ok)


def _admissible(provider: GreenProvider, x: np.ndarray) -> bool:
    grid = provider.grid
    if not grid.domain.contains(x):
        return False
    try:
        grid.require_resolved(x)
    except ResolutionError:
        return False
    return True


def grad_phi_m(config: ConcentrationConfig, provider: GreenProvider) -> np.ndarray:
    """Central-difference gradient of phi_m, shape (m, 2)."""
    domain = provider.grid.domain
    d_min = min(domain.distance_to_boundary(x) for x in config.points)
    base_step = 1e-3 * d_min
    gradient = np.zeros((config.m, 2))
    for j in range(config.m):
        for c in range(2):
            step = base_step
            while True:
                plus = config.points.copy()
                minus = config.points.copy()
                plus[j, c] += step
                minus[j, c] -= step
                if _admissible(provider, plus[j]) and _admissible(provider, minus[j]):
                    break
                step /= 2
                if step < 1e-8:
                    raise ResolutionError(f"gradient step for point {j} fell below 1e-8 near the boundary")
            gradient[j, c] = (
                phi_m(config.with_points(plus), provider) - phi_m(config.with_points(minus), provider)
            ) / (2 * step)
    return gradient


def theta0_configuration(domain: Domain, spins: SpinConfig, feasible: FeasibleSet, lam: float,
                         thetas: Optional[Sequence[float]] = None, rotation: float = 0.0) -> np.ndarray:
    """Points on normal fibres at lambda d = theta (theta0 by default), spread over boundary anchors."""
    m = spins.m
    if thetas is None:
        thetas = [find_theta0().theta0] * m
    depth = np.asarray(thetas, dtype=float) / lam

    if feasible.axis:
        a, b = domain.axis_interval()
        if m == 1:
            return np.array([[b - depth[0], 0.0]])
        if m == 2:
            return np.array([[b - depth[0], 0.0], [a + depth[1], 0.0]])
        raise ConfigError(f"axis mode supports one or two points, got {m}", field="SPINS")

    components = feasible.components or tuple(0 for _ in range(m))
    points = np.zeros((m, 2))
    for j in range(m):
        same = [i for i in range(m) if components[i] == components[j]]
        angle = rotation + 2 * math.pi * same.index(j) / len(same)
        anchor = domain.component_anchor(components[j], angle)
        normal = domain.outward_normal(anchor)
        points[j] = anchor - depth[j] * normal
    return points


@dataclass
class TraceRow:
    start: int
    iteration: int
    points: np.ndarray
    value: float
    margin: float


@dataclass
class StartResult:
    index: int
    points: np.ndarray
    value: float
    margin: float
    trace: List[TraceRow] = field(default_factory=list)


@dataclass
class MinimizeResult:
    """Best configuration over all starts."""

    config: ConcentrationConfig
    value: float
    margin: float
    boundary_minimum: bool
    trace: List[TraceRow]
    start_values: List[float]


class _Objective:
    """phi_m on a parametrization, with an extreme barrier outside the feasible set."""

    def __init__(self, domain, spins, feasible, lam, provider):
        self.domain = domain
        self.spins = spins
        self.feasible = feasible
        self.lam = lam
        self.provider = provider
        self.template = ConcentrationConfig(
            theta0_configuration(domain, spins, feasible, lam), spins, lam
        )
        self._memo: Dict[Tuple[float, ...], Tuple[float, float]] = {}

    def decode(self, x: np.ndarray) -> np.ndarray:
        if self.feasible.axis:
            return np.column_stack([x, np.zeros_like(x)])
        return np.asarray(x, dtype=float).reshape(-1, 2)

    def encode(self, points: np.ndarray) -> np.ndarray:
        if self.feasible.axis:
            return points[:, 0].copy()
        return points.ravel().copy()

    def evaluate(self, x: np.ndarray) -> Tuple[float, float]:
        key = tuple(float(v) for v in x)
        if key in self._memo:
            return self._memo[key]
        points = self.decode(np.asarray(x, dtype=float))
        margin = self.feasible.margin(self.domain, self.lam, points)
        value = PENALTY
        if margin > 0:
            try:
                value = phi_m(self.template.with_points(points), self.provider)
            except _UNRESOLVED:
                value = PENALTY
        self._memo[key] = (value, margin)
        return value, margin

    def __call__(self, x: np.ndarray) -> float:
        return self.evaluate(x)[0]


def _run_start(objective: _Objective, index: int, x0: np.ndarray, step: float,
               maxiter: int, xtol: float) -> StartResult:
    trace: List[TraceRow] = []
    counter = [0]

    def record(xk):
        value, margin = objective.evaluate(xk)
        counter[0] += 1
        trace.append(TraceRow(index, counter[0], objective.decode(np.asarray(xk)), value, margin))

    record(x0)
    simplex = np.vstack([x0] + [x0 + step * e for e in np.eye(x0.size)])
    result = scipy_minimize(
        objective,
        x0,
        method="Nelder-Mead",
        callback=record,
        options={"maxiter": maxiter, "xatol": xtol, "fatol": 1e-12, "initial_simplex": simplex},
    )
    x = np.asarray(result.x, dtype=float)
    value, _ = objective.evaluate(x)

    # coordinate polish honouring the membership test
    delta = step
    while delta >= xtol:
        improved = False
        for c in range(x.size):
            for sign in (1.0, -1.0):
                trial = x.copy()
                trial[c] += sign * delta
                trial_value, _ = objective.evaluate(trial)
                if trial_value < value:
                    x, value = trial, trial_value
                    improved = True
                    record(x)
        if not improved:
            delta /= 2

    _, margin = objective.evaluate(x)
    return StartResult(index, objective.decode(x), value, margin, trace)


def minimize(domain: Domain, spins: SpinConfig, feasible: FeasibleSet, lam: float,
             provider: GreenProvider, seed_points: Optional[Sequence[np.ndarray]] = None,
             n_starts: int = 8, maxiter: int = 400, xtol: float = 1e-6, seed: int = 0,
             workers: int = 1) -> MinimizeResult:
    """Multi-start Nelder-Mead minimization of phi_m over the feasible set.

    Args:
        domain: Catalogue domain
        spins: Spin configuration
        feasible: Feasible set
        lam: Robin coefficient
        provider: Green provider for the same grid and lambda
        seed_points: Explicit starting configurations; generated at lambda d = theta0 otherwise
        n_starts: Number of generated starts (first one unjittered)
        maxiter: Nelder-Mead iteration cap per start
        xtol: Absolute position tolerance
        seed: Seed of the start jitter
        workers: Thread count for the starts

    Returns:
        MinimizeResult with the merged trace of every start
    """
    objective = _Objective(domain, spins, feasible, lam, provider)
    theta0 = find_theta0().theta0
    step = 0.25 * theta0 / lam

    starts: List[np.ndarray] = []
    if seed_points is not None:
        starts = [np.asarray(p, dtype=float).reshape(-1, 2) for p in seed_points]
    else:
        rng = np.random.default_rng(seed)
        for s in range(n_starts):
            if s == 0:
                points = theta0_configuration(domain, spins, feasible, lam)
            elif feasible.axis:
                points = theta0_configuration(domain, spins, feasible, lam)
                points[:, 0] += rng.normal(0.0, step, spins.m)
            else:
                thetas = theta0 * np.exp(rng.normal(0.0, 0.1, spins.m))
                rotation = 2 * math.pi * s / (n_starts * spins.m)
                points = theta0_configuration(domain, spins, feasible, lam, thetas, rotation)
            starts.append(points)

    feasible_starts = [(i, p) for i, p in enumerate(starts) if feasible.contains(domain, lam, p)]
    if not feasible_starts:
        raise ConfigError("all optimizer starts are infeasible", field="MODE")
    logging.info(f"Minimizing phi_{spins.m} at lambda={lam} from {len(feasible_starts)} starts")

    def run(item):
        index, points = item
        return _run_start(objective, index, objective.encode(points), step, maxiter, xtol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(run, feasible_starts))
    else:
        results = [run(item) for item in feasible_starts]
    results.sort(key=lambda r: r.index)

    best = min(results, key=lambda r: (r.value, r.index))
    if best.value >= PENALTY:
        raise ConfigError("no start reached a feasible, resolvable configuration", field="MODE")
    trace = [row for r in results for row in r.trace]
    boundary = best.margin < BOUNDARY_MARGIN
    if boundary:
        logging.warning(f"Minimizer lies on the boundary of the feasible set (margin {best.margin:.3e})")
    config = ConcentrationConfig(best.points, spins, lam)
    return MinimizeResult(config, best.value, best.margin, boundary, trace, [r.value for r in results])


@dataclass
class BoundaryGap:
    """Comparison of phi_m near the feasible-set boundary with its theta0 value.

    ``thetas`` holds the scaled depths actually sampled; with no evaluable
    sample ``boundary_min`` is nan and ``ok`` is False.
    """

    reference: float
    boundary_min: float
    evaluated: int
    skipped: int
    thetas: List[float] = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.boundary_min - self.reference

    @property
    def ok(self) -> bool:
        return self.evaluated > 0 and self.gap > 0

    def to_dict(self) -> Dict:
        return {
            "reference": self.reference,
            "boundary_min": self.boundary_min,
            "gap": self.gap,
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "thetas": list(self.thetas),
            "ok": self.ok,
        }


def _boundary_sample(domain: Domain, spins: SpinConfig, feasible: FeasibleSet, lam: float,
                     provider: GreenProvider, j: int, end: float, rotation: float) -> Optional[Tuple[float, float]]:
    """phi_m with point j moved from theta0 toward ``end``, backed off until evaluable.

    The depth starts at ``end`` and moves toward theta0 by GAP_BACKOFF per
    step while the configuration is infeasible or unresolved on the grid.
    """
    theta0 = find_theta0().theta0
    theta = end
    while (theta - theta0) * (end - theta0) > 0 and abs(math.log(theta / theta0)) > GAP_MIN_LOG_SPAN:
        thetas = [theta0] * spins.m
        thetas[j] = theta
        points = theta0_configuration(domain, spins, feasible, lam, thetas, rotation)
        if feasible.margin(domain, lam, points) > 0:
            try:
                return theta, phi_m(ConcentrationConfig(points, spins, lam), provider)
            except _UNRESOLVED as e:
                logging.debug(f"Boundary sample at lambda d={theta:.4g} unresolved: {e}")
        theta = theta * GAP_BACKOFF if end < theta0 else theta / GAP_BACKOFF
    return None


def boundary_gap(domain: Domain, spins: SpinConfig, feasible: FeasibleSet, lam: float,
                 provider: GreenProvider, n_anchors: int = 4) -> BoundaryGap:
    """Sample phi_m where one point nears lambda d = 1/K or K, the others sitting at theta0.

    Ends the grid cannot resolve, or the domain cannot hold (lambda d = K
    deeper than the half width), are replaced by the nearest evaluable depth
    on the way back to theta0.
    """
    reference_points = theta0_configuration(domain, spins, feasible, lam)
    reference = phi_m(ConcentrationConfig(reference_points, spins, lam), provider)

    rotations = [0.0]
    if not feasible.axis:
        rotations = [2 * math.pi * r / (n_anchors * spins.m) for r in range(n_anchors)]
    ends = (feasible.K ** -1 * (1 + 1e-6), feasible.K * (1 - 1e-6))
    values = []
    thetas = []
    skipped = 0
    for rotation in rotations:
        for j in range(spins.m):
            for end in ends:
                sample = _boundary_sample(domain, spins, feasible, lam, provider, j, end, rotation)
                if sample is None:
                    logging.warning(f"No evaluable boundary sample for point {j} toward lambda d={end:.4g}")
                    skipped += 1
                    continue
                thetas.append(sample[0])
                values.append(sample[1])
    if not values:
        logging.warning(f"No boundary sample of the feasible set could be evaluated at lambda={lam}")
        return BoundaryGap(reference, math.nan, 0, skipped)
    return BoundaryGap(reference, min(values), len(values), skipped, thetas)
