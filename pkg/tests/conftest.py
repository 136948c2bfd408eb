import numpy as np
import pytest

from aoigame.stage_game import SlotLengths

SHORT = SlotLengths(0.1, 1.0, 1.5)  # sigma_s <= sigma_c
LONG = SlotLengths(0.01, 1.01, 0.101)  # sigma_s > sigma_c


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
