"""Damped Newton solution of the sinh-Poisson Robin problem and its reporting.

    Delta u + eps^2 (e^u - e^-u) = 0 in the domain,  du/dnu + lambda u = 0 on the boundary.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ..core.errors import ConvergenceError, SolverError
from ..elliptic.base import Field
from ..elliptic.robin import RobinOperator, assemble
from ..geometry.grid import Grid
from .ansatz import Params, pde_residual
from .hamiltonian import ConcentrationConfig

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 50
MAX_HALVINGS = 20
ARMIJO_C = 1e-4
DIVERGENCE_STREAK = 5
PEAK_THRESHOLD = 0.25


@dataclass
class Peak:
    """Extremum of the solution matched to concentration point ``index``."""

    index: int
    spin: int
    node: int
    position: np.ndarray
    value: float
    lambda_distance: float
    offset: float

    def to_dict(self) -> Dict:
        return {
            "index": self.index,
            "spin": self.spin,
            "node": self.node,
            "position": self.position.tolist(),
            "value": self.value,
            "lambda_distance": self.lambda_distance,
            "offset": self.offset,
        }


@dataclass
class ConcentrationReport:
    peaks: List[Peak]
    candidates: int
    mismatch: bool
    message: str = ""


@dataclass
class SolveReport:
    """Outcome of a Newton solve and its post-processing."""

    converged: bool
    iterations: int
    residual_inf: float
    residual_history: List[float]
    solution: Field
    eps: float
    lam: float
    diverged: bool = False
    continuation: List[float] = field(default_factory=list)
    residual_star: Optional[float] = None
    peaks: List[Peak] = field(default_factory=list)
    concentration_mismatch: Optional[bool] = None
    energy: Optional[float] = None
    prediction: Optional[float] = None
    energy_gap: Optional[float] = None
    antisymmetry_defect: Optional[float] = None

    @property
    def sup_norm(self) -> float:
        return self.solution.sup_norm()

    def to_dict(self) -> Dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_inf": self.residual_inf,
            "residual_history": list(self.residual_history),
            "residual_star": self.residual_star,
            "eps": self.eps,
            "lambda": self.lam,
            "diverged": self.diverged,
            "continuation": list(self.continuation),
            "sup_norm": self.sup_norm,
            "peaks": [p.to_dict() for p in self.peaks],
            "concentration_mismatch": self.concentration_mismatch,
            "energy": self.energy,
            "prediction": self.prediction,
            "energy_gap": self.energy_gap,
            "antisymmetry_defect": self.antisymmetry_defect,
        }


def _residual(op: RobinOperator, u: np.ndarray, eps: float) -> Tuple[np.ndarray, float, float]:
    """Residual with its sup norm and its Euclidean norm."""
    with np.errstate(over="ignore", invalid="ignore"):
        F = pde_residual(op, u, eps)
    if not np.all(np.isfinite(F)):
        return F, math.inf, math.inf
    return F, float(np.max(np.abs(F))), float(np.linalg.norm(F))


def _roundoff_floor(op: RobinOperator, u: np.ndarray, eps: float) -> float:
    log_eps2 = 2.0 * math.log(eps)
    scale = op._abs_matrix @ np.abs(u) + np.exp(u + log_eps2) + np.exp(-u + log_eps2)
    return 64 * np.finfo(float).eps * float(np.max(scale))


def newton_solve(grid: Grid, params: Params, seed: Field, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER,
                 operator: Optional[RobinOperator] = None) -> SolveReport:
    """Newton iteration with Armijo backtracking on the Euclidean residual norm.

    The Newton direction always descends the Euclidean norm; convergence is
    judged on the sup norm.

    Args:
        grid: Polar grid
        params: eps and lambda
        seed: Starting field
        tol: Residual reduction relative to the seed residual
        max_iter: Iteration cap
        operator: Robin operator for params.lam

    Returns:
        SolveReport; ``converged`` is False on divergence or iteration cap
    """
    if operator is None:
        operator = assemble(grid, params.lam)
    eps = params.eps
    log_eps2 = params.log_eps2
    base = operator.signed_matrix()
    mask = operator.interior_mask.astype(float)

    u = seed.values.copy()
    F, res, merit = _residual(operator, u, eps)
    if not math.isfinite(res):
        raise SolverError("seed residual is not finite")
    history = [res]
    if res == 0:
        logging.info("Seed is an exact discrete solution")
        return SolveReport(True, 0, 0.0, history, Field(grid, u), eps, params.lam)

    target = max(tol * res, _roundoff_floor(operator, u, eps))
    increases = 0
    diverged = False
    iterations = 0
    while res > target and iterations < max_iter:
        iterations += 1
        diagonal = mask * (np.exp(u + log_eps2) + np.exp(-u + log_eps2))
        jacobian = (base + sparse.diags(diagonal)).tocsc()
        try:
            delta = splu(jacobian).solve(-F)
        except RuntimeError as e:
            raise SolverError(f"Newton Jacobian is singular at iteration {iterations}: {e}") from e

        step = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = u + step * delta
            F_trial, res_trial, merit_trial = _residual(operator, trial, eps)
            if merit_trial <= (1 - ARMIJO_C * step) * merit:
                break
            step /= 2
        else:
            step *= 2
            logging.warning(f"Armijo search exhausted at iteration {iterations}; taking step {step:.3g}")
            trial = u + step * delta
            F_trial, res_trial, merit_trial = _residual(operator, trial, eps)
            if not math.isfinite(res_trial):
                diverged = True
                break

        increases = increases + 1 if merit_trial > merit else 0
        u, F, res, merit = trial, F_trial, res_trial, merit_trial
        history.append(res)
        target = max(target, _roundoff_floor(operator, u, eps))
        logging.debug(f"Newton iteration {iterations}: residual={res:.3e}, step={step:.3g}")
        if increases >= DIVERGENCE_STREAK:
            diverged = True
            break

    converged = res <= target and not diverged
    if converged:
        logging.info(f"Newton converged in {iterations} iterations (residual {res:.3e})")
    else:
        logging.warning(
            f"Newton {'diverged' if diverged else 'stopped'} after {iterations} iterations "
            f"(residual {res:.3e}, target {target:.3e})"
        )
    return SolveReport(converged, iterations, res, history, Field(grid, u), eps, params.lam, diverged)


def solve_with_continuation(grid: Grid, params: Params, seed_for: Callable[[Params], Field],
                            tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                            operator: Optional[RobinOperator] = None) -> SolveReport:
    """Direct solve, falling back to the ladder 2 eps -> eps when it fails."""
    if operator is None:
        operator = assemble(grid, params.lam)
    report = newton_solve(grid, params, seed_for(params), tol, max_iter, operator)
    if report.converged:
        return report

    coarse_eps = 2 * params.eps
    if coarse_eps >= 1:
        raise ConvergenceError(f"no continuation rung available above eps={params.eps}")
    logging.info(f"Retrying by continuation from eps={coarse_eps:g}")
    coarse = replace(params, eps=coarse_eps, allow_out_of_regime=True)
    rung = newton_solve(grid, coarse, seed_for(coarse), tol, max_iter, operator)
    if not rung.converged:
        rung.continuation = [coarse_eps]
        return replace(rung, eps=params.eps, converged=False)
    report = newton_solve(grid, params, rung.solution, tol, max_iter, operator)
    report.continuation = [coarse_eps, params.eps]
    return report


def _ring_array(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Values as an (n_radial + 1, n_angular) array; the origin is repeated on ring 0."""
    body = values[grid.offset:].reshape(-1, grid.n_angular)
    if grid.has_origin:
        body = np.vstack([np.full((1, grid.n_angular), values[0]), body])
    return body


def energy(grid: Grid, u: Field, eps: float, lam: float) -> float:
    """J(u) = 1/2 int |grad u|^2 - eps^2 int (e^u + e^-u) + lam/2 int_boundary u^2."""
    values = u.values
    rings = _ring_array(grid, values)
    du_s = np.gradient(rings, grid.s, axis=0, edge_order=2)[grid.ring_start:]
    body = rings[grid.ring_start:]
    du_phi = (np.roll(body, -1, axis=1) - np.roll(body, 1, axis=1)) / (2 * grid.dphi)
    grad2 = grid.g_ss * du_s ** 2 + 2 * grid.g_sphi * du_s * du_phi + grid.g_phiphi * du_phi ** 2
    area = grid.area_weights[grid.offset:].reshape(-1, grid.n_angular)

    log_eps2 = 2.0 * math.log(eps)
    dirichlet = 0.5 * float(np.sum(area * grad2))
    potential = float(grid.area_weights @ (np.exp(values + log_eps2) + np.exp(-values + log_eps2)))
    boundary = 0.5 * lam * float(grid.arc_weights @ (values * values))
    return dirichlet - potential + boundary


def reduced_energy(m: int, rho: float, lam: float, phi_value: float) -> float:
    """-16 pi m + 8 pi m log 8 - 16 pi m log(rho lam^2) - 4 pi phi_m."""
    if m == 0:
        return 0.0
    return (
        -16 * math.pi * m
        + 8 * math.pi * m * math.log(8)
        - 16 * math.pi * m * math.log(rho * lam * lam)
        - 4 * math.pi * phi_value
    )


def reduced_energy_prediction(config: ConcentrationConfig, params: Params, phi_value: float) -> float:
    return reduced_energy(config.m, params.rho, params.lam, phi_value)


def energy_gap_scale(m: int, params: Params) -> float:
    """16 pi m |log(rho lam^2)|, the size the energy gap is measured against."""
    return 16 * math.pi * m * abs(math.log(params.rho * params.lam ** 2))


def _local_extrema(grid: Grid, values: np.ndarray, sign: int) -> np.ndarray:
    """Nodes that are strict 8-neighbour extrema of sign * values."""
    f = sign * values
    rings = _ring_array(grid, f)
    padded = np.pad(rings, ((1, 1), (0, 0)), constant_values=-np.inf)
    # ring 0 repeats the origin with a disk, so it never passes the strict test
    centre = padded[1:-1]
    strict = np.ones_like(centre, dtype=bool)
    for di in (-1, 0, 1):
        for dk in (-1, 0, 1):
            if di == 0 and dk == 0:
                continue
            neighbour = np.roll(padded, -dk, axis=1)[1 + di:padded.shape[0] - 1 + di]
            strict &= centre > neighbour
    nodes = []
    if grid.has_origin:
        if f[0] > np.max(f[grid.ring(1)]):
            nodes.append(0)
        strict = strict[1:]
    i, k = np.nonzero(strict)
    nodes.extend(np.asarray(grid.index(i + grid.ring_start, k)).tolist())
    return np.array(sorted(nodes), dtype=int)


def concentration_report(u: Field, config: ConcentrationConfig) -> ConcentrationReport:
    """Match extrema of u to the concentration points by sign.

    Candidates are strict extrema above 25% of sup|u|; pairs are assigned
    greedily by increasing distance.
    """
    grid = u.grid
    values = u.values
    threshold = PEAK_THRESHOLD * u.sup_norm()
    spins = config.spins.spins
    peaks: List[Peak] = []
    total_candidates = 0
    mismatch = False
    messages = []
    for sign in (1, -1):
        wanted = [j for j in range(config.m) if spins[j] == sign]
        candidates = [n for n in _local_extrema(grid, values, sign) if sign * values[n] >= threshold]
        total_candidates += len(candidates)
        if len(candidates) != len(wanted):
            mismatch = True
            messages.append(f"{len(candidates)} peaks of sign {sign:+d} for {len(wanted)} points")
        pairs = sorted(
            (float(np.linalg.norm(grid.nodes[n] - config.points[j])), j, n)
            for j in wanted
            for n in candidates
        )
        used_points, used_nodes = set(), set()
        for distance, j, n in pairs:
            if j in used_points or n in used_nodes:
                continue
            used_points.add(j)
            used_nodes.add(n)
            position = grid.nodes[n].copy()
            peaks.append(Peak(
                index=j,
                spin=sign,
                node=int(n),
                position=position,
                value=float(values[n]),
                lambda_distance=config.lam * grid.domain.distance_to_boundary(position),
                offset=distance,
            ))
    peaks.sort(key=lambda p: p.index)
    message = "; ".join(messages)
    if mismatch:
        logging.warning(f"Concentration mismatch: {message}")
    return ConcentrationReport(peaks, total_candidates, mismatch, message)


def sup_growth(reports: Sequence[SolveReport]) -> Tuple[bool, List[float]]:
    """True when sup|u| strictly increases as eps decreases."""
    ordered = sorted(reports, key=lambda r: -r.eps)
    sups = [r.sup_norm for r in ordered]
    return all(b > a for a, b in zip(sups, sups[1:])), sups
