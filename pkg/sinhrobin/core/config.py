"""Run configuration for sinhrobin."""

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from dotenv import dotenv_values

from .errors import ConfigError

DOMAINS = ("disk", "annulus", "star")
MODES = ("axis_symmetric", "per_component", "free")
MASS_RULES = ("as_written", "spin_product")
LAPLACIAN_MODES = ("discrete", "analytic")
SEED_SOURCES = ("minimizer", "theta0")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _ints(text: str) -> List[int]:
    return [int(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ValueError(f"expected true/false, got '{text}'")


def _points(text: str) -> List[Tuple[float, float]]:
    points = []
    for item in text.split(";"):
        if not item.strip():
            continue
        x, y = item.split(":")
        points.append((float(x), float(y)))
    return points


def _optional_float(text: str) -> Optional[float]:
    return float(text) if text.strip() else None


def _optional_ints(text: str) -> Optional[List[int]]:
    return _ints(text) if text.strip() else None


# key -> (attribute, parser)
_KEYS: Dict[str, Tuple[str, Callable]] = {
    "DOMAIN": ("domain", lambda t: t.strip().lower()),
    "DOMAIN_RADIUS": ("domain_radius", float),
    "DOMAIN_INNER_RADIUS": ("domain_inner_radius", float),
    "DOMAIN_OUTER_RADIUS": ("domain_outer_radius", float),
    "DOMAIN_COEFFICIENTS": ("domain_coefficients", _floats),
    "GRID_RADIAL": ("grid_radial", int),
    "GRID_ANGULAR": ("grid_angular", int),
    "GRID_GRADING": ("grid_grading", float),
    "GRID_MAX_RATIO": ("grid_max_ratio", float),
    "LAMBDAS": ("lambdas", _floats),
    "EPSILONS": ("epsilons", _floats),
    "REGIME_ALPHA": ("regime_alpha", float),
    "REGIME_EPS0": ("regime_eps0", float),
    "ALLOW_OUT_OF_REGIME": ("allow_out_of_regime", _bool),
    "SPINS": ("spins", _ints),
    "MODE": ("mode", lambda t: t.strip().lower()),
    "COMPONENTS": ("components", _optional_ints),
    "FEASIBLE_K": ("feasible_k", float),
    "FEASIBLE_DELTA_SEP": ("feasible_delta_sep", _optional_float),
    "MASS_RULE": ("mass_rule", lambda t: t.strip().lower()),
    "MASS_BOUND_DELTA": ("mass_bound_delta", float),
    "SIGMA": ("sigma", float),
    "OPTIMIZER_STARTS": ("optimizer_starts", int),
    "OPTIMIZER_MAXITER": ("optimizer_maxiter", int),
    "OPTIMIZER_XTOL": ("optimizer_xtol", float),
    "NEWTON_TOL": ("newton_tol", float),
    "NEWTON_MAX_ITER": ("newton_max_iter", int),
    "RESIDUAL_LAPLACIAN": ("residual_laplacian", lambda t: t.strip().lower()),
    "GREEN_SOURCES": ("green_sources", _points),
    "GREEN_PROBES": ("green_probes", int),
    "PROFILE_ANGLE": ("profile_angle", float),
    "SOLVE_SEED": ("solve_seed", lambda t: t.strip().lower()),
    "SOLVE_CHECK_ANTISYMMETRY": ("solve_check_antisymmetry", _bool),
    "WORKERS": ("workers", int),
    "OUTPUT_DIR": ("output_dir", str),
    "SEED": ("seed", int),
}
_ATTRIBUTE_KEYS = {attribute: key for key, (attribute, _) in _KEYS.items()}


@dataclass
class RunConfig:
    """Configuration container for one sinhrobin run."""

    # Domain
    domain: str = "disk"
    domain_radius: float = 1.0
    domain_inner_radius: float = 0.5
    domain_outer_radius: float = 1.0
    domain_coefficients: List[float] = field(default_factory=lambda: [1.0])

    # Grid
    grid_radial: int = 64
    grid_angular: int = 128
    grid_grading: float = 1.15
    grid_max_ratio: float = 8.0

    # Parameters and regime
    lambdas: List[float] = field(default_factory=lambda: [20.0])
    epsilons: List[float] = field(default_factory=lambda: [1e-4])
    regime_alpha: float = 17.0
    regime_eps0: float = 1.0
    allow_out_of_regime: bool = False

    # Concentration
    spins: List[int] = field(default_factory=lambda: [1, -1])
    mode: str = "axis_symmetric"
    components: Optional[List[int]] = None
    feasible_k: float = 20.0
    feasible_delta_sep: Optional[float] = None
    mass_rule: str = "as_written"
    mass_bound_delta: float = 1e-3
    sigma: float = 0.5

    # Optimizer and Newton
    optimizer_starts: int = 8
    optimizer_maxiter: int = 400
    optimizer_xtol: float = 1e-6
    newton_tol: float = 1e-9
    newton_max_iter: int = 50
    residual_laplacian: str = "analytic"

    # Pipeline specifics
    green_sources: List[Tuple[float, float]] = field(default_factory=lambda: [(0.5, 0.0)])
    green_probes: int = 16
    profile_angle: float = 0.0
    solve_seed: str = "minimizer"
    solve_check_antisymmetry: bool = False

    # Execution and output
    workers: int = 1
    output_dir: str = "output"
    seed: int = 0

    source_lines: Dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        """Load a KEY=VALUE run file; missing keys keep their defaults."""
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"configuration file '{path}' not found")
        text = config_path.read_text(encoding="utf-8")
        lines = {}
        for number, line in enumerate(text.splitlines(), start=1):
            match = re.match(r"\s*(?:export\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*=", line)
            if match:
                lines[match.group(1)] = number

        values = {}
        for key, raw in dotenv_values(config_path).items():
            if key not in _KEYS:
                raise ConfigError(f"unknown key '{key}'", field=key, line=lines.get(key))
            attribute, parse = _KEYS[key]
            try:
                values[attribute] = parse(raw if raw is not None else "")
            except (TypeError, ValueError) as e:
                raise ConfigError(f"cannot parse '{raw}': {e}", field=key, line=lines.get(key)) from e
        return cls(source_lines=lines, **values)

    def __post_init__(self):
        """Validate field ranges and choices."""
        self._check(self.domain in DOMAINS, "domain", f"expected one of {DOMAINS}, got '{self.domain}'")
        self._check(self.mode in MODES, "mode", f"expected one of {MODES}, got '{self.mode}'")
        self._check(self.mass_rule in MASS_RULES, "mass_rule", f"expected one of {MASS_RULES}")
        self._check(self.residual_laplacian in LAPLACIAN_MODES, "residual_laplacian",
                    f"expected one of {LAPLACIAN_MODES}")
        self._check(self.solve_seed in SEED_SOURCES, "solve_seed", f"expected one of {SEED_SOURCES}")
        self._check(bool(self.spins), "spins", "at least one spin is required")
        for a in self.spins:
            self._check(a in (-1, 1), "spins", f"spin must be ±1, got {a}")
        self._check(bool(self.lambdas) and all(lam > 1 for lam in self.lambdas), "lambdas",
                    "every lambda must exceed 1")
        self._check(bool(self.epsilons) and all(0 < e < 1 for e in self.epsilons), "epsilons",
                    "every eps must lie in (0, 1)")
        self._check(0 < self.sigma < 1, "sigma", "sigma must lie in (0, 1)")
        self._check(self.feasible_k > 1, "feasible_k", "K must exceed 1")
        self._check(0 < self.mass_bound_delta < 1, "mass_bound_delta", "delta must lie in (0, 1)")
        self._check(self.optimizer_starts >= 1, "optimizer_starts", "at least one start is required")
        self._check(self.workers >= 1, "workers", "at least one worker is required")
        self._check(self.newton_tol > 0, "newton_tol", "tolerance must be positive")
        self._check(self.green_probes >= 1, "green_probes", "at least one probe is required")
        if self.components is not None:
            self._check(len(self.components) == len(self.spins), "components",
                        "one component per spin is required")

    def _check(self, condition: bool, attribute: str, message: str) -> None:
        if not condition:
            key = _ATTRIBUTE_KEYS[attribute]
            raise ConfigError(message, field=key, line=self.source_lines.get(key))

    def to_dict(self) -> Dict:
        data = asdict(self)
        data.pop("source_lines")
        data["green_sources"] = [list(p) for p in self.green_sources]
        return data

    def config_hash(self) -> str:
        """SHA-256 of the resolved configuration, output directory excluded."""
        data = self.to_dict()
        data.pop("output_dir")
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
