"""Domains and polar grids."""

from .domain import Annulus, Disk, Domain, StarSymmetric, make_domain
from .grid import Grid, build_grid

__all__ = ["Annulus", "Disk", "Domain", "StarSymmetric", "make_domain", "Grid", "build_grid"]
