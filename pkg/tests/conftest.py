import numpy as np
import pytest

from dwelldos.model import (
    double_barrier,
    free_stack,
    random_lattice,
    random_stack,
    rectangular_barrier,
    uniform_lattice,
)


@pytest.fixture(scope="session")
def barrier():
    return rectangular_barrier(1.0, 1.0)


@pytest.fixture(scope="session")
def free2():
    return free_stack(2.0)


@pytest.fixture(scope="session")
def dbarrier():
    # two resonances below the barrier top on (0.3, 8.0)
    return double_barrier(0.5, 12.0, 2.0)


@pytest.fixture(scope="session")
def stack42():
    return random_stack(42, n_layers=5, v_range=(0.0, 2.0), d_range=(0.5, 1.5))


@pytest.fixture(scope="session")
def lattice3x10():
    return random_lattice(7, width=3, length=10, v_range=(-0.5, 0.5))


@pytest.fixture(scope="session")
def chain4():
    return uniform_lattice(1, 4)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
