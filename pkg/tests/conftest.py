import numpy as np
import pytest

from annealed_walk import _backend, _pykernels

BACKENDS = [pytest.param(_pykernels, id="python")]
if _backend.COMPILED:
    from annealed_walk import _ckernels

    BACKENDS.append(pytest.param(_ckernels, id="cython"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
