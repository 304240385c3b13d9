import numpy as np
import pytest

from treeanderson.disorder import DisorderLaw
from treeanderson.halfplane import EnergyPoint
from treeanderson.population import IterationConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_cfg(E=0.0, eta=1e-2, beta=0.05, K=2, **kw):
    law = DisorderLaw.uniform(beta) if beta > 0 else DisorderLaw.free()
    return IterationConfig(EnergyPoint(E, eta, K), law, **kw)
