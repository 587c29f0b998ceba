import numpy as np
import pytest

from quantrx.link import GridSpec, LinkSimulator
from quantrx.modulation import get_constellation
from quantrx.receiver import ReceiverConfig, build


@pytest.fixture(scope="session")
def toy_model():
    """The trained desk-scale model shipped with the package."""
    from importlib import resources

    from quantrx.weights_io import load_model

    path = resources.files("quantrx.data").joinpath("toy_model.qrxw")
    with resources.as_file(path) as p:
        return load_model(p)


@pytest.fixture(scope="session")
def desk_link():
    return LinkSimulator(spec=GridSpec(), constellation=get_constellation("qpsk"))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture()
def tiny_model():
    """Small untrained receiver for shape/gradient tests."""
    return build(ReceiverConfig(num_blocks=2, channels=4, bits_per_symbol=2), seed=7)
