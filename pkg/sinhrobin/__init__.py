"""
sinhrobin - concentrating solutions of the sinh-Poisson equation

Numerical toolkit for the problem Delta u + eps^2 (e^u - e^-u) = 0 with a
Robin boundary condition: Robin Green functions, boundary-layer profiles,
signed point-vortex Hamiltonians, multi-bubble ansatz and Newton solves.
"""

__version__ = "1.0.0"

from .core.config import RunConfig
from .core.processor import SinhRobinProcessor

__all__ = ["RunConfig", "SinhRobinProcessor"]
