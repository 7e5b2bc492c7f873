import numpy as np
import pytest

from nlch.grid import build_grid
from nlch.kernels import KernelSpec, assemble


@pytest.fixture(scope="session")
def grid1d():
    return build_grid(1, (0.0, 1.0), 32, ext_radius=2.0, ext_refine=64)


@pytest.fixture(scope="session")
def grid1d_small():
    return build_grid(1, (0.0, 1.0), 8, ext_radius=1.5, ext_refine=24)


@pytest.fixture(scope="session")
def grid2d():
    return build_grid(2, ((0.0, 1.0), (0.0, 1.0)), 5, ext_radius=1.0, ext_refine=10)


@pytest.fixture(scope="session")
def km_dirichlet(grid1d):
    return assemble(KernelSpec(family="power_global", s=0.5, q=2), grid1d, "dirichlet")


@pytest.fixture(scope="session")
def km_regional(grid1d):
    return assemble(KernelSpec(family="power_regional", s=0.5, q=2), grid1d, "regional")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
