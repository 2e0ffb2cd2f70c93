import numpy as np
import pytest

from rhflab.grids import Dispersion, Grid, PotentialSpec, gaussian_vhat, harmonic_trap


@pytest.fixture
def grid64():
    return Grid(1, 64, 2.0 * np.pi, 0.1)


@pytest.fixture
def grid32():
    return Grid(1, 32, 2.0 * np.pi, 0.25)


@pytest.fixture
def gaussian_potential(grid64):
    return PotentialSpec(grid64, gaussian_vhat(grid64, width=0.8), coupling=0.5)


@pytest.fixture
def trapped_potential(grid64):
    return PotentialSpec(
        grid64,
        gaussian_vhat(grid64, width=0.8),
        vext=harmonic_trap(grid64, 1.0),
        coupling=0.5,
    )


@pytest.fixture
def rel_dispersion():
    return Dispersion.relativistic(1.0)
