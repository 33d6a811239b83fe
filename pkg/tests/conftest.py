import numpy as np
import pytest

from wpccn.netmodel import SystemParams, random_instance
from wpccn.single import SourceLink


def make_instance(seed: int, n: int, k: int, **params):
    rng = np.random.default_rng(seed)
    return random_instance(SystemParams(n, k, **params), rng)


def random_link(rng: np.random.Generator, demand: float = 50.0) -> SourceLink:
    """Link with gains spread over the range the default geometry produces."""
    h, g = 10.0 ** rng.uniform(-6.5, -3.0, size=2)
    return SourceLink(h, g, demand, 0.5, 4.0, 1e6, 1e-12)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
