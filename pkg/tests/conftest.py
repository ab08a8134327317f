import numpy as np
import pytest

from ellopt import _kernels
from ellopt.mesh_fem import build_mesh
from ellopt.problems import make_problem

BACKENDS = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=BACKENDS)
def backend(request):
    previous = _kernels.backend()
    _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(previous)


@pytest.fixture(scope="session")
def mesh8():
    return build_mesh(8)


@pytest.fixture(scope="session")
def mesh16():
    return build_mesh(16)


@pytest.fixture(scope="session")
def two_phase16(mesh16):
    return make_problem("two-phase", mesh16)


@pytest.fixture(scope="session")
def rank_one16(mesh16):
    return make_problem("rank-one-gap", mesh16)


@pytest.fixture(scope="session")
def region_free16(mesh16):
    return make_problem("region-free", mesh16)
