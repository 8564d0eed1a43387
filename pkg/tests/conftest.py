import numpy as np
import pytest

from qlab.core import PureState

S = 1 / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pair_states():
    """e1 and (e1 + e2)/sqrt(2): overlap cos(pi/4)."""
    return [PureState.from_vector([1, 0]), PureState.from_vector([S, S])]


@pytest.fixture
def trine_states():
    return [PureState.from_vector([np.cos(2 * np.pi * k / 3), np.sin(2 * np.pi * k / 3)]) for k in range(3)]


def random_hermitian(dim, rng):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (g + g.conj().T) / 2
