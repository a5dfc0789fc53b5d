import numpy as np
import pytest

from superrotor.molecule import MoleculeSpec, get_molecule


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def n2():
    return get_molecule("N2")


@pytest.fixture(scope="session")
def o2():
    return get_molecule("O2")


@pytest.fixture(scope="session")
def rigid():
    """Rigid rotor with the N2 rotational constant and no spin statistics."""
    return MoleculeSpec("rigid", B=1.9896, delta_alpha=0.7)


def random_state(rng, n_max):
    from superrotor.angular import Wavefunction

    size = (n_max + 1) ** 2
    c = rng.normal(size=size) + 1j * rng.normal(size=size)
    return Wavefunction(c / np.linalg.norm(c), n_max)
