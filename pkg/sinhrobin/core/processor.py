"""Main sinhrobin processor that orchestrates the computation pipelines."""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .. import __version__
from ..elliptic.base import Field
from ..elliptic.robin import RobinOperator, assemble
from ..geometry.domain import OUTER, Domain, make_domain
from ..geometry.grid import Grid, build_grid
from ..processors.ansatz import Params, build_ansatz, pde_residual, residual, star_norm
from ..processors.asymptotics import build_profile_table, find_theta0, robin_expansion, v_profile
from ..processors.green import (
    GreenProvider,
    calibrate_halfplane,
    halfplane_robin_residual,
    regular_part_bounds,
)
from ..processors.hamiltonian import (
    ConcentrationConfig,
    FeasibleSet,
    SpinConfig,
    asymptotic_phi_m,
    boundary_gap,
    compute_masses,
    minimize,
    phi_m,
    theta0_configuration,
)
from ..processors.solver import (
    SolveReport,
    concentration_report,
    energy,
    energy_gap_scale,
    reduced_energy_prediction,
    solve_with_continuation,
    sup_growth,
)
from .config import RunConfig
from .errors import ResolutionError, SinhRobinError, exit_code_for
from .output import OutputWriter

SUBCOMMANDS = ("theta0", "green-table", "robin-profile", "hamiltonian-min", "ansatz-check", "solve", "sweep")
HALFPLANE_COEFFICIENTS = (0.5, 1.0, 5.0)


class SinhRobinProcessor:
    """Main processor for sinhrobin runs."""

    def __init__(self, config: RunConfig):
        """Initialize processor with configuration."""
        self.config = config
        self._domain: Optional[Domain] = None
        self._grids: Dict[float, Grid] = {}
        self._operators: Dict[float, RobinOperator] = {}
        self._providers: Dict[float, GreenProvider] = {}
        self._configurations: Dict[float, Tuple[ConcentrationConfig, float]] = {}
        self._lock = threading.RLock()

    # shared building blocks

    @property
    def domain(self) -> Domain:
        if self._domain is None:
            c = self.config
            self._domain = make_domain(
                c.domain, c.domain_radius, c.domain_inner_radius, c.domain_outer_radius, c.domain_coefficients
            )
        return self._domain

    def grid(self, lam: float) -> Grid:
        with self._lock:
            if lam not in self._grids:
                c = self.config
                self._grids[lam] = build_grid(
                    self.domain, c.grid_radial, c.grid_angular, c.grid_grading, c.grid_max_ratio,
                    lambda_max=lam,
                )
            return self._grids[lam]

    def operator(self, lam: float) -> RobinOperator:
        with self._lock:
            if lam not in self._operators:
                self._operators[lam] = assemble(self.grid(lam), lam)
            return self._operators[lam]

    def provider(self, lam: float) -> GreenProvider:
        with self._lock:
            if lam not in self._providers:
                self._providers[lam] = GreenProvider(self.grid(lam), lam, self.operator(lam))
            return self._providers[lam]

    def spins(self) -> SpinConfig:
        return SpinConfig(tuple(self.config.spins))

    def feasible_set(self) -> FeasibleSet:
        c = self.config
        return FeasibleSet.for_mode(
            self.domain, len(c.spins), c.mode, c.feasible_k, c.feasible_delta_sep, c.components
        )

    def params(self, eps: float, lam: float) -> Params:
        c = self.config
        return Params(eps, lam, c.regime_alpha, c.regime_eps0, c.allow_out_of_regime)

    def metadata(self, subcommand: str) -> Dict[str, Any]:
        return {
            "version": __version__,
            "subcommand": subcommand,
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "c_gamma": calibrate_halfplane().c_gamma,
            "theta0": find_theta0().theta0,
        }

    def configuration(self, lam: float) -> Tuple[ConcentrationConfig, float]:
        """Concentration points with masses at lambda, and phi_m there."""
        with self._lock:
            if lam in self._configurations:
                return self._configurations[lam]
        c = self.config
        provider = self.provider(lam)
        spins = self.spins()
        if c.solve_seed == "minimizer":
            result = minimize(
                self.domain, spins, self.feasible_set(), lam, provider,
                n_starts=c.optimizer_starts, maxiter=c.optimizer_maxiter, xtol=c.optimizer_xtol,
                seed=c.seed, workers=c.workers,
            )
            points, value = result.config.points, result.value
        else:
            points = theta0_configuration(self.domain, spins, self.feasible_set(), lam)
            value = phi_m(ConcentrationConfig(points, spins, lam), provider)
        config = compute_masses(
            ConcentrationConfig(points, spins, lam), provider, c.mass_rule, c.mass_bound_delta
        )
        with self._lock:
            return self._configurations.setdefault(lam, (config, value))

    # pipeline entry

    def run(self, subcommand: str) -> Dict[str, Any]:
        """
        Run one subcommand and write its artifacts.

        Args:
            subcommand: One of SUBCOMMANDS

        Returns:
            Processing results with the created files and exit code
        """
        if subcommand not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand '{subcommand}'")
        logging.info(f"Starting {subcommand} run (config hash {self.config.config_hash()[:12]})")
        start_time = datetime.now()
        results: Dict[str, Any] = {
            "success": True,
            "subcommand": subcommand,
            "files_created": [],
            "exit_code": 0,
        }
        writer = None
        try:
            writer = OutputWriter(self.config.output_dir, self.metadata(subcommand))
            handler = getattr(self, f"run_{subcommand.replace('-', '_')}")
            summary = handler(writer)
            results.update(summary)
            if not summary.get("success", True):
                results["exit_code"] = 3
        except SinhRobinError as e:
            logging.error(f"{subcommand} failed: {e}")
            results.update(success=False, error=str(e), exit_code=exit_code_for(e))
        if writer is not None:
            results["files_created"] = list(writer.files_created)
        results["processing_time"] = str(datetime.now() - start_time)
        logging.info(f"{subcommand} finished in {results['processing_time']}")
        return results

    # subcommands

    def run_theta0(self, writer: OutputWriter) -> Dict[str, Any]:
        minimum = find_theta0()
        table = build_profile_table()
        writer.write_json("theta0.json", {
            "theta0": minimum.theta0,
            "h_theta0": minimum.h_theta0,
            "h_second": minimum.h_second,
            "v_theta0": v_profile(minimum.theta0),
        })
        writer.write_csv("profile_table.csv", ["theta", "h", "dh", "ddh", "v"], table.rows())
        return {"theta0": minimum.theta0}

    def run_green_table(self, writer: OutputWriter) -> Dict[str, Any]:
        c = self.config
        rows = []
        sources_summary = []
        rng = np.random.default_rng(c.seed)
        for lam in c.lambdas:
            grid = self.grid(lam)
            provider = self.provider(lam)
            probes = self._sample_points(grid, c.green_probes, rng)
            fields = provider.fields(c.green_sources, workers=c.workers)
            for source, gf in zip(c.green_sources, fields):
                low, high = regular_part_bounds(gf)
                sources_summary.append({"lambda": lam, "source": list(source), "H_min": low, "H_max": high,
                                        "robin": gf.regular_value(source)})
                for x in probes:
                    forward = provider.green(x, source)
                    backward = provider.green(source, x)
                    regular = provider.regular(x, source)
                    rows.append((lam, *source, *x, forward, regular, backward, forward - backward))

        calibration = calibrate_halfplane()
        halfplane = []
        for a in HALFPLANE_COEFFICIENTS:
            probes_x1 = np.linspace(-5.0, 5.0, 100)
            worst = max(abs(halfplane_robin_residual(a, x1, (0.0, 1.0))) for x1 in probes_x1)
            halfplane.append({"a": a, "max_robin_residual": worst})

        writer.write_csv(
            "green_table.csv",
            ["lambda", "xi1", "xi2", "x1", "x2", "G", "H", "G_transposed", "asymmetry"],
            rows,
        )
        writer.write_json("green_summary.json", {
            "sources": sources_summary,
            "halfplane": {"c_gamma": calibration.c_gamma, "calibration_residual": calibration.max_residual,
                          "checks": halfplane},
        })
        return {"rows": len(rows)}

    def _sample_points(self, grid: Grid, count: int, rng: np.random.Generator) -> List[Tuple[float, float]]:
        """Resolved interior points drawn uniformly from the bounding box."""
        extent = float(np.max(np.abs(grid.nodes)))
        points = []
        attempts = 0
        while len(points) < count:
            attempts += 1
            if attempts > 1000 * count:
                raise ResolutionError("could not sample resolved probe points")
            x = rng.uniform(-extent, extent, 2)
            if not grid.domain.contains(x):
                continue
            try:
                grid.require_resolved(x)
            except ResolutionError:
                continue
            points.append((float(x[0]), float(x[1])))
        return points

    def run_robin_profile(self, writer: OutputWriter) -> Dict[str, Any]:
        c = self.config
        n = c.green_probes
        thetas = 1.25 + 0.75 * np.cos((2 * np.arange(n) + 1) * math.pi / (2 * n))
        anchor = self.domain.component_anchor(OUTER, c.profile_angle)
        normal = self.domain.outward_normal(anchor)
        kappa = self.domain.mean_curvature(anchor)
        rows = []
        worst: Dict[float, float] = {}
        for lam in c.lambdas:
            provider = self.provider(lam)
            worst[lam] = 0.0
            for theta in sorted(thetas):
                d = theta / lam
                x = anchor - d * normal
                numeric = provider.robin(x)
                expansion = robin_expansion(lam, d, kappa)
                rows.append((lam, theta, d, numeric, expansion, numeric - expansion))
                worst[lam] = max(worst[lam], abs(numeric - expansion))
        ordered = [worst[lam] for lam in sorted(worst)]
        monotone = all(b < a for a, b in zip(ordered, ordered[1:]))
        header = ["lambda", "theta", "d", "H_numeric", "H_expansion", "difference"]
        writer.write_csv("robin_profile.csv", header, rows)
        writer.write_json("robin_profile_summary.json", {
            "max_discrepancy": [{"lambda": lam, "max_discrepancy": worst[lam]} for lam in sorted(worst)],
            "monotone_decrease": monotone,
            "curvature": kappa,
        })
        return {"monotone_decrease": monotone}

    def run_hamiltonian_min(self, writer: OutputWriter) -> Dict[str, Any]:
        c = self.config
        spins = self.spins()
        feasible = self.feasible_set()
        theta0 = find_theta0().theta0
        trace_rows = []
        summaries = []
        success = True
        for lam in c.lambdas:
            provider = self.provider(lam)
            result = minimize(
                self.domain, spins, feasible, lam, provider,
                n_starts=c.optimizer_starts, maxiter=c.optimizer_maxiter, xtol=c.optimizer_xtol,
                seed=c.seed, workers=c.workers,
            )
            gap = boundary_gap(self.domain, spins, feasible, lam, provider)
            config = compute_masses(result.config, provider, c.mass_rule, c.mass_bound_delta)
            try:
                asymptotic = asymptotic_phi_m(result.config, provider, self.domain)
            except SinhRobinError as e:
                logging.warning(f"Asymptotic phi_m unavailable at lambda={lam}: {e}")
                asymptotic = None
            for row in result.trace:
                trace_rows.append(
                    (lam, row.start, row.iteration, row.value, row.margin, *row.points.ravel().tolist())
                )
            ratios = [lam * self.domain.distance_to_boundary(x) / theta0 for x in result.config.points]
            success = success and gap.ok and not result.boundary_minimum
            summaries.append({
                "lambda": lam,
                "points": result.config.points,
                "value": result.value,
                "asymptotic_value": asymptotic,
                "lambda_d_over_theta0": ratios,
                "boundary_minimum": result.boundary_minimum,
                "margin": result.margin,
                "start_values": result.start_values,
                "boundary_gap": gap.to_dict(),
                "masses": config.masses,
                "mass_bounds_ok": config.mass_bounds_ok,
                "feasible_set": feasible.to_dict(),
            })
        width = 2 * spins.m
        header = ["lambda", "start", "iteration", "value", "margin"] + [
            f"{axis}{j}" for j in range(width // 2) for axis in ("x", "y")
        ]
        writer.write_csv("hamiltonian_trace.csv", header, trace_rows)
        writer.write_json("hamiltonian_min.json", {"results": summaries})
        if not success:
            logging.warning("Minimizer touched the feasible-set boundary or the boundary gap is not positive")
        return {"success": success, "minima": len(summaries)}

    def run_ansatz_check(self, writer: OutputWriter) -> Dict[str, Any]:
        c = self.config
        rows = []
        for lam in c.lambdas:
            config, _ = self.configuration(lam)
            for eps in c.epsilons:
                params = self.params(eps, lam)
                bundle = build_ansatz(self.grid(lam), config, params, self.operator(lam), self.provider(lam),
                                      workers=c.workers)
                R = residual(bundle, c.residual_laplacian)
                norm = star_norm(R, bundle.grid, config, params.rho, c.sigma)
                rows.append((eps, lam, norm, norm / params.residual_scale(), bundle.corrector_gap,
                             bundle.probe_gap))
        ratios = [row[3] for row in rows]
        span = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
        writer.write_csv(
            "ansatz_check.csv",
            ["eps", "lambda", "residual_star", "scaled_ratio", "corrector_gap", "probe_gap"],
            rows,
        )
        writer.write_json("ansatz_summary.json", {"ratio_span": span, "within_decade": span < 10})
        return {"ratio_span": span}

    def solve_pair(self, eps: float, lam: float, antisymmetry: bool = False) -> SolveReport:
        """Solve at (eps, lam) from the ansatz and attach the diagnostics."""
        c = self.config
        grid = self.grid(lam)
        operator = self.operator(lam)
        config, phi_value = self.configuration(lam)
        params = self.params(eps, lam)

        bundles = {}

        def seed_for(p: Params) -> Field:
            bundle = build_ansatz(grid, config, p, operator, self.provider(lam), workers=1)
            bundles[p.eps] = bundle
            return bundle.U

        report = solve_with_continuation(grid, params, seed_for, c.newton_tol, c.newton_max_iter, operator)
        seed_bundle = bundles[eps]

        scaled = pde_residual(operator, report.solution.values, eps)
        scaled[operator.interior_mask] *= params.rho ** 2
        report.residual_star = star_norm(scaled, grid, config, params.rho, c.sigma)
        if report.converged:
            concentration = concentration_report(report.solution, config)
            report.peaks = concentration.peaks
            report.concentration_mismatch = concentration.mismatch
        report.energy = energy(grid, seed_bundle.U, eps, lam)
        report.prediction = reduced_energy_prediction(config, params, phi_value)
        report.energy_gap = abs(report.energy - report.prediction) / energy_gap_scale(config.m, params)

        if antisymmetry:
            negated = solve_with_continuation(
                grid, params, lambda p: -seed_for(p), c.newton_tol, c.newton_max_iter, operator
            )
            defect = np.abs(negated.solution.values + report.solution.values)
            report.antisymmetry_defect = float(np.max(defect))
        return report

    def run_solve(self, writer: OutputWriter) -> Dict[str, Any]:
        c = self.config
        reports = []
        for lam in c.lambdas:
            for eps in c.epsilons:
                report = self.solve_pair(eps, lam, c.solve_check_antisymmetry)
                reports.append(report)
                grid = report.solution.grid
                writer.write_csv(
                    f"solution_lambda{lam:g}_eps{eps:g}.csv",
                    ["x1", "x2", "u"],
                    ((x[0], x[1], v) for x, v in zip(grid.nodes, report.solution.values)),
                )
        growth = self._growth(reports)
        writer.write_json("solve.json", {"reports": [r.to_dict() for r in reports], "sup_growth": growth})
        success = all(r.converged and not r.concentration_mismatch for r in reports)
        return {"success": success, "converged": sum(r.converged for r in reports)}

    def run_sweep(self, writer: OutputWriter) -> Dict[str, Any]:
        c = self.config
        pairs = [(eps, lam) for lam in c.lambdas for eps in c.epsilons]
        for lam in c.lambdas:
            self.configuration(lam)

        def run(pair):
            return self.solve_pair(*pair)

        if c.workers > 1:
            with ThreadPoolExecutor(max_workers=c.workers) as executor:
                reports = list(executor.map(run, pairs))
        else:
            reports = [run(pair) for pair in pairs]

        rows = []
        for r in reports:
            distances = ";".join(format(p.lambda_distance, ".17g") for p in r.peaks)
            rows.append((r.eps, r.lam, r.converged, r.iterations, r.sup_norm, distances, r.energy,
                         r.prediction, r.energy_gap))
        writer.write_csv(
            "sweep.csv",
            ["eps", "lambda", "converged", "iterations", "sup_u", "lambda_d_peaks", "energy", "prediction",
             "energy_gap"],
            rows,
        )
        writer.write_json("sweep_summary.json", {"sup_growth": self._growth(reports)})
        return {"success": all(r.converged for r in reports), "rows": len(rows)}

    @staticmethod
    def _growth(reports: List[SolveReport]) -> List[Dict[str, Any]]:
        growth = []
        for lam in sorted({r.lam for r in reports}):
            at_lambda = [r for r in reports if r.lam == lam]
            if len(at_lambda) > 1:
                increasing, sups = sup_growth(at_lambda)
                growth.append({"lambda": lam, "strictly_increasing": increasing, "sup_norms": sups})
        return growth
