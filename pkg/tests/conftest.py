"""Shared fixtures: collision assemblies are expensive, build once per session."""
import numpy as np
import pytest

from boltzlab.collision import KernelParams, assemble
from boltzlab.velocity import build_grid


@pytest.fixture(scope="session")
def grid66():
    return build_grid(6.0, 6)


@pytest.fixture(scope="session")
def grid86():
    return build_grid(6.0, 8)


@pytest.fixture(scope="session")
def grid126():
    return build_grid(6.0, 12)


@pytest.fixture(scope="session")
def grid168():
    return build_grid(8.0, 16)


@pytest.fixture(scope="session")
def params_hard():
    return KernelParams(gamma=1.0)


@pytest.fixture(scope="session")
def asm66(grid66, params_hard):
    return assemble(grid66, params_hard)


@pytest.fixture(scope="session")
def asm86(grid86, params_hard):
    return assemble(grid86, params_hard)


@pytest.fixture(scope="session")
def asm86_half(grid86):
    return assemble(grid86, KernelParams(gamma=0.5))


@pytest.fixture(scope="session")
def asm126(grid126, params_hard):
    return assemble(grid126, params_hard)


@pytest.fixture(scope="session")
def asm168(grid168, params_hard):
    return assemble(grid168, params_hard)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
