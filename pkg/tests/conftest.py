import pytest

from nikstar.harness import cfg_a, cfg_b, cfg_c
from nikstar.limits import LimitTable
from nikstar.mop import MopSystem


@pytest.fixture(scope="session")
def cfgA():
    return cfg_a()


@pytest.fixture(scope="session")
def cfgB():
    return cfg_b()


@pytest.fixture(scope="session")
def cfgC():
    return cfg_c()


@pytest.fixture(scope="session")
def sysA(cfgA):
    # deep enough for the lambda_max = 20 sweeps of the acceptance suite
    return MopSystem(cfgA, n_hint=127)


@pytest.fixture(scope="session")
def sysB(cfgB):
    return MopSystem(cfgB, n_hint=79)


@pytest.fixture(scope="session")
def tableA(cfgA):
    return LimitTable(cfgA)


@pytest.fixture(scope="session")
def tableB(cfgB):
    return LimitTable(cfgB)


@pytest.fixture(scope="session")
def tableC(cfgC):
    return LimitTable(cfgC)
