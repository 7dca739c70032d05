"""Grid functions."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..geometry.grid import Grid


@dataclass(frozen=True)
class Field:
    """Real-valued function sampled at the nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"Field has {values.shape} values, grid has {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("Field values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.n_nodes))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "Field":
        """Sample func(x1, x2) at every node."""
        return cls(grid, func(grid.nodes[:, 0], grid.nodes[:, 1]))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior_index]

    def boundary_values(self) -> np.ndarray:
        return self.values[self.grid.boundary_index]

    def at(self, x) -> np.ndarray:
        """Interpolated value(s) at arbitrary points."""
        return self.grid.interpolate(self.values, x)

    def mirrored(self) -> "Field":
        """Field x -> f(x1, -x2)."""
        return Field(self.grid, self.values[self.grid.mirror_permutation()])

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def __mul__(self, scale: float) -> "Field":
        return Field(self.grid, scale * self.values)

    __rmul__ = __mul__
