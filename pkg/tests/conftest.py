import numpy as np
import pytest

from retrobohm.states import DIRAC, KLEIN_GORDON, SCHRODINGER, WaveModel


@pytest.fixture
def schrodinger():
    return WaveModel(SCHRODINGER, 1.0)


@pytest.fixture
def klein_gordon():
    return WaveModel(KLEIN_GORDON, 1.0)


@pytest.fixture
def dirac():
    return WaveModel(DIRAC, 1.0)


@pytest.fixture
def probe_grid():
    """5x5 interior probe grid."""
    return np.meshgrid(np.linspace(0.1, 1.1, 5), np.linspace(-1.5, 1.5, 5), indexing="ij")
