import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hilfer.spectral_operator import dirichlet_laplacian_1d  # noqa: E402


@pytest.fixture(scope="session")
def dirichlet8():
    return dirichlet_laplacian_1d(np.pi, 8)


@pytest.fixture(scope="session")
def dirichlet16():
    return dirichlet_laplacian_1d(np.pi, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
