import numpy as np
import pytest

from daepencil import Pencil


@pytest.fixture
def riccati_pencil():
    return Pencil([[1, 0], [0, 0]], [[0, 0], [1, 1]])


@pytest.fixture
def sqrt_growth_pencil():
    return Pencil([[1, 0], [0, 0]], [[0, 0], [0, 1]])


@pytest.fixture
def circle_pencil():
    return Pencil([[1, 0], [0, 0]], [[1, 0], [0, 1]])


@pytest.fixture
def singular3_pencil():
    A = [[1, 0, -1], [0, 0, 0], [0, 0, 0]]
    B = [[1, -1, -1], [1, 1, -1], [0, 2, 0]]
    return Pencil(A, B)


@pytest.fixture
def rng():
    return np.random.default_rng(987654321)
