import numpy as np
import pytest

from rcclt import Environment, EnvironmentSpec, TwoPoint


@pytest.fixture
def two_site_env():
    """The hand-solvable 1d torus with edge weights (1, 4)."""
    spec = EnvironmentSpec(d=1, L=2, distribution=TwoPoint(4.0, 0.5), seed=0)
    return Environment(spec, np.array([[1.0, 4.0]]))
