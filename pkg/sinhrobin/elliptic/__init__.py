"""Discrete Robin problems for the Laplacian."""

from .base import Field
from .robin import RobinOperator, assemble

__all__ = ["Field", "RobinOperator", "assemble"]
