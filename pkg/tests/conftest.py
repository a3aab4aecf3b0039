import pytest

from slipbench.config import default_config
from slipbench.mpc import CostConfig, gains_for


@pytest.fixture(scope="session")
def config():
    return default_config()


@pytest.fixture(scope="session")
def small_gains(config):
    """Short-horizon gains for closed-loop tests that do not need N=1450."""
    return gains_for(config.vehicle, CostConfig(p_weight=250.0, q_weight=250.0,
                                                r_weight=1.0, horizon=60))


@pytest.fixture(scope="session")
def tuned_gains(config):
    """The shipped (250, 250, 1450) configuration."""
    return gains_for(config.vehicle, config.cost)
