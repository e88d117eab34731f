import numpy as np
import pytest

from npmoment.common import RngSpec
from npmoment.dataset import Dataset


def pytest_addoption (parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the long Monte Carlo checks")


def pytest_configure (config):
    config.addinivalue_line("markers", "slow: long Monte Carlo runs (enable with --runslow)")


def pytest_collection_modifyitems (config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def line_dataset ():
    """ Points 0, 1, 2 on a line with outcomes 0, 3, 10 """
    return Dataset(np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 3.0, 10.0]))


@pytest.fixture
def plane_dataset ():
    """ 200 points uniform on the unit square, noisy linear outcome """
    generator = RngSpec(11).generator()
    X = generator.uniform(0.0, 1.0, size=(200, 2))
    Y = X[:, 0] + 0.1 * generator.normal(size=200)
    return Dataset(X, Y)


@pytest.fixture
def write_file (tmp_path):
    """ Write text to a file under tmp_path and return its path """
    def write (name, text):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write
