"""Shared fixtures: small domains and grids."""

import pytest

from sinhrobin.elliptic.robin import assemble
from sinhrobin.geometry.domain import Annulus, Disk, StarSymmetric
from sinhrobin.geometry.grid import build_grid


@pytest.fixture
def disk():
    return Disk(1.0)


@pytest.fixture
def annulus():
    return Annulus(0.5, 1.0)


@pytest.fixture
def star():
    return StarSymmetric([1.0, 0.1])


@pytest.fixture(scope="module")
def disk_grid():
    return build_grid(Disk(1.0), 32, 64)


@pytest.fixture(scope="module")
def annulus_grid():
    return build_grid(Annulus(0.5, 1.0), 24, 64)


@pytest.fixture(scope="module")
def disk_operator(disk_grid):
    return assemble(disk_grid, 3.0)


@pytest.fixture
def write_config(tmp_path):
    """Writes a KEY=VALUE run file and returns its path."""

    def write(text, name="run.env"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return write
