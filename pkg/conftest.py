import pytest

from fastrpe.core.tensor import RngState


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-size Monte Carlo and timing checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size Monte Carlo or timing check")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return RngState(1234)
